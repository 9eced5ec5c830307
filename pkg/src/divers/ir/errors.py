"""Exceptions raised by the binary codec."""


class WasmFormatError(Exception):
    """Base class for decode/encode failures."""


class MalformedPreamble(WasmFormatError):
    def __init__(self):
        super().__init__("missing \\0asm magic or unsupported version")


class TruncatedSection(WasmFormatError):
    def __init__(self, section_id: int):
        self.section_id = section_id
        super().__init__(f"section {section_id} is truncated")


class UnknownSectionOrdering(WasmFormatError):
    pass


class MalformedModule(WasmFormatError):
    def __init__(self, section_id: int, detail: str):
        self.section_id = section_id
        super().__init__(f"section {section_id}: {detail}")


class UnsupportedInstruction(WasmFormatError):
    pass


class IndexOverflow(WasmFormatError):
    def __init__(self, value: int):
        super().__init__(f"index {value} exceeds the u32 encoding range")
