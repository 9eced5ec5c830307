"""Decode, validate, inspect and re-encode WebAssembly binaries."""

from divers.ir.codec import (
    PREAMBLE,
    content_hash,
    decode_instructions,
    encode_instruction,
    encode_instructions,
    encode_module,
    normalize,
    parse_module,
)
from divers.ir.errors import (
    IndexOverflow,
    MalformedModule,
    MalformedPreamble,
    TruncatedSection,
    UnknownSectionOrdering,
    WasmFormatError,
)
from divers.ir.model import (
    KIND_FUNC,
    KIND_GLOBAL,
    KIND_MEMORY,
    KIND_TABLE,
    CustomSection,
    DataSegment,
    ElementSegment,
    Export,
    FuncType,
    Function,
    FunctionBody,
    Global,
    Import,
    Instruction,
    Module,
    RawSection,
    ins,
)
from divers.ir.validate import ValidityReport, module_stats, typecheck_fragment, validate_module

__all__ = [
    "PREAMBLE", "content_hash", "decode_instructions", "encode_instruction",
    "encode_instructions", "encode_module", "normalize", "parse_module",
    "IndexOverflow", "MalformedModule", "MalformedPreamble", "TruncatedSection",
    "UnknownSectionOrdering", "WasmFormatError",
    "KIND_FUNC", "KIND_GLOBAL", "KIND_MEMORY", "KIND_TABLE",
    "CustomSection", "DataSegment", "ElementSegment", "Export", "FuncType", "Function",
    "FunctionBody", "Global", "Import", "Instruction", "Module", "RawSection", "ins",
    "ValidityReport", "module_stats", "typecheck_fragment", "validate_module",
]
