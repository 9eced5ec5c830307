from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Kind(str, Enum):
    PEEPHOLE = "Peephole"
    ADD_TYPE = "AddTypeDef"
    ADD_CUSTOM = "AddCustomSection"
    MODIFY_CUSTOM = "ModifyCustomSection"
    ADD_FUNCTION = "AddFunction"
    ADD_EXPORT = "AddExport"
    ADD_IMPORT = "AddImport"
    ADD_GLOBAL = "AddGlobal"
    REMOVE_FUNCTION = "RemoveDeadFunction"
    REMOVE_TYPE = "RemoveUnusedType"
    LOOP_UNROLL = "LoopUnroll"
    IF_SWAP = "IfBranchSwap"

    def __str__(self) -> str:
        return self.value


# Kinds that change which instructions execute.
BEHAVIORAL = frozenset({Kind.PEEPHOLE, Kind.LOOP_UNROLL, Kind.IF_SWAP, Kind.REMOVE_FUNCTION})


def behavioral(kind: Kind) -> bool:
    return Kind(kind) in BEHAVIORAL


@dataclass(frozen=True)
class TransformRecord:
    kind: Kind
    description: str
    function_index: int | None = None
    instruction_offset: int | None = None
    rule_id: str | None = None
    # Primitive draws taken from the stream; counted when it is a CountingRandom.
    rng_draws: int = 0

    @property
    def behavioral(self) -> bool:
        return behavioral(self.kind)

    @property
    def label(self) -> str:
        return f"{self.kind}({self.rule_id})" if self.rule_id else str(self.kind)

    def __str__(self) -> str:
        site = ""
        if self.function_index is not None:
            site = f" func={self.function_index}"
            if self.instruction_offset is not None:
                site += f" at={self.instruction_offset}"
        return f"{self.label}{site} draws={self.rng_draws}: {self.description}"


class TransformError(Exception):
    pass


class NotApplicable(TransformError):
    def __init__(self, kind: Kind, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind} not applicable" + (f": {detail}" if detail else ""))


class NoApplicableTransformation(TransformError):
    pass


class SizeBudgetExceeded(TransformError):
    def __init__(self, size: int, limit: int, record: TransformRecord | None = None):
        self.size = size
        self.limit = limit
        self.record = record
        super().__init__(f"variant of {size} bytes exceeds the size budget of {limit} bytes")


class PatternMismatch(TransformError):
    pass


class NoDeadFunction(NotApplicable):
    def __init__(self, detail: str = ""):
        super().__init__(Kind.REMOVE_FUNCTION, detail)
