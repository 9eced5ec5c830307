"""Immutable in-memory representation of a WebAssembly module."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

from divers.ir.opcodes import MODELED

KIND_FUNC = 0
KIND_TABLE = 1
KIND_MEMORY = 2
KIND_GLOBAL = 3
KIND_TAG = 4
KIND_NAMES = {KIND_FUNC: "func", KIND_TABLE: "table", KIND_MEMORY: "memory",
              KIND_GLOBAL: "global", KIND_TAG: "tag"}


@dataclass(frozen=True)
class Instruction:
    op: str
    imm: tuple = ()
    # Original encoding; reused verbatim on re-encode.  Never copy it onto a
    # new instruction.
    raw: bytes | None = field(default=None, compare=False, repr=False)

    @property
    def modeled(self) -> bool:
        return self.op in MODELED

    def __str__(self) -> str:
        if not self.imm:
            return self.op
        parts = []
        for v in self.imm:
            if isinstance(v, (tuple, list)):
                parts.append("[" + " ".join(map(str, v)) + "]")
            elif v is None:
                continue
            else:
                parts.append(str(v))
        return " ".join([self.op, *parts])


def ins(op: str, *imm: Any) -> Instruction:
    """Shorthand constructor: ``ins("i32.const", 7)``."""
    return Instruction(op, tuple(imm))


@dataclass(frozen=True)
class FuncType:
    params: tuple[str, ...] = ()
    results: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"({' '.join(self.params)}) -> ({' '.join(self.results)})"


@dataclass(frozen=True)
class Import:
    module: str
    name: str
    kind: int
    # func: type index; global: (valtype, mutable); table/memory/tag: raw descriptor bytes
    desc: Any


@dataclass(frozen=True)
class Global:
    valtype: str
    mutable: bool
    init: tuple[Instruction, ...]


@dataclass(frozen=True)
class Export:
    name: str
    kind: int
    index: int


@dataclass(frozen=True)
class ElementSegment:
    """Active segment for table 0 (flags 0), the only form the toolkit renumbers."""

    offset: tuple[Instruction, ...]
    functions: tuple[int, ...]


@dataclass(frozen=True)
class DataSegment:
    flags: int
    memory: int
    offset: tuple[Instruction, ...]
    payload: bytes


@dataclass(frozen=True)
class CustomSection:
    name: str
    payload: bytes
    # Rank of the preceding standard section (0 = before all of them).
    anchor: int = 0
    raw: bytes | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class RawSection:
    id: int
    payload: bytes


@dataclass(frozen=True)
class FunctionBody:
    locals: tuple[tuple[int, str], ...] = ()
    instructions: tuple[Instruction, ...] | None = ()
    # Undecodable bodies (later proposals) are kept as bytes and never targeted.
    opaque: bytes | None = None
    raw: bytes | None = field(default=None, compare=False, repr=False)

    @property
    def is_opaque(self) -> bool:
        return self.instructions is None

    def with_instructions(self, instructions) -> "FunctionBody":
        return FunctionBody(self.locals, tuple(instructions))

    @cached_property
    def encoded(self) -> bytes:
        from divers.ir.codec import encode_body

        return encode_body(self)

    @cached_property
    def local_types(self) -> tuple[str, ...]:
        out: list[str] = []
        for count, vt in self.locals:
            out.extend([vt] * count)
        return tuple(out)


@dataclass(frozen=True)
class Function:
    type_index: int
    body: FunctionBody


@dataclass(frozen=True)
class Module:
    types: tuple[FuncType, ...] = ()
    imports: tuple[Import, ...] = ()
    functions: tuple[Function, ...] = ()
    globals: tuple[Global, ...] = ()
    exports: tuple[Export, ...] = ()
    start: int | None = None
    # None means an element section exists but uses forms carried opaquely.
    elements: tuple[ElementSegment, ...] | None = ()
    data: tuple[DataSegment, ...] = ()
    customs: tuple[CustomSection, ...] = ()
    raw_sections: tuple[RawSection, ...] = ()
    origin: dict = field(default_factory=dict, compare=False, repr=False)

    def imported(self, kind: int) -> list[Import]:
        return [imp for imp in self.imports if imp.kind == kind]

    @cached_property
    def num_imported_funcs(self) -> int:
        return sum(1 for imp in self.imports if imp.kind == KIND_FUNC)

    @property
    def num_funcs(self) -> int:
        return self.num_imported_funcs + len(self.functions)

    @property
    def num_globals(self) -> int:
        return len(self.imported(KIND_GLOBAL)) + len(self.globals)

    def count_items(self, kind: int) -> int:
        from divers.ir.codec import raw_vector_count

        if kind == KIND_FUNC:
            return self.num_funcs
        if kind == KIND_GLOBAL:
            return self.num_globals
        section_id = {KIND_TABLE: 4, KIND_MEMORY: 5, KIND_TAG: 13}[kind]
        own = sum(raw_vector_count(s.payload) for s in self.raw_sections if s.id == section_id)
        return len(self.imported(kind)) + own

    def func_type(self, func_index: int) -> FuncType:
        """Signature of a function in the combined (imports first) index space."""
        n_imp = self.num_imported_funcs
        if func_index < n_imp:
            return self.types[self.imported(KIND_FUNC)[func_index].desc]
        return self.types[self.functions[func_index - n_imp].type_index]

    def global_type(self, global_index: int) -> tuple[str, bool]:
        imps = self.imported(KIND_GLOBAL)
        if global_index < len(imps):
            return imps[global_index].desc
        g = self.globals[global_index - len(imps)]
        return g.valtype, g.mutable

    def local_types(self, defined_index: int) -> tuple[str, ...]:
        fn = self.functions[defined_index]
        return self.types[fn.type_index].params + fn.body.local_types
