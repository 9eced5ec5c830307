"""Synthetic detector specifications and their predicates."""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from divers.ir.errors import WasmFormatError
from divers.ir.model import Module


class DetectorError(ValueError):
    pass


class DuplicateDetectorName(DetectorError):
    pass


class BadPattern(DetectorError):
    pass


BYTE_SIGNATURE = "ByteSignature"
EXPORT_NAME = "ExportNamePattern"
HISTOGRAM = "InstructionHistogram"
CUSTOM_FINGERPRINT = "CustomSectionFingerprint"
SIZE_BAND = "SizeBand"
KINDS = (BYTE_SIGNATURE, EXPORT_NAME, HISTOGRAM, CUSTOM_FINGERPRINT, SIZE_BAND)


@dataclass(frozen=True)
class DetectorSpec:
    name: str
    kind: str
    params: Mapping = field(default_factory=dict)

    @classmethod
    def byte_signature(cls, name: str, hex_pattern: str) -> DetectorSpec:
        return cls(name, BYTE_SIGNATURE, {"hex": hex_pattern})

    @classmethod
    def export_name(cls, name: str, substring: str) -> DetectorSpec:
        return cls(name, EXPORT_NAME, {"substring": substring})

    @classmethod
    def histogram(cls, name: str, opcode: str, min_ratio: float) -> DetectorSpec:
        return cls(name, HISTOGRAM, {"opcode": opcode, "min_ratio": min_ratio})

    @classmethod
    def custom_fingerprint(cls, name: str, section: str, hex_pattern: str) -> DetectorSpec:
        return cls(name, CUSTOM_FINGERPRINT, {"section": section, "hex": hex_pattern})

    @classmethod
    def size_band(cls, name: str, lo: int, hi: int) -> DetectorSpec:
        return cls(name, SIZE_BAND, {"min": lo, "max": hi})

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json(cls, obj: Mapping) -> DetectorSpec:
        try:
            return cls(str(obj["name"]), str(obj["kind"]), dict(obj.get("params", {})))
        except (KeyError, TypeError) as exc:
            raise BadPattern(f"detector entry {obj!r} lacks name/kind") from exc


def _hex(spec: DetectorSpec, key: str = "hex") -> bytes:
    raw = spec.params.get(key)
    try:
        pattern = bytes.fromhex(raw)
    except (TypeError, ValueError):
        raise BadPattern(f"{spec.name}: {key}={raw!r} is not a hex string") from None
    if not pattern:
        raise BadPattern(f"{spec.name}: empty byte pattern")
    return pattern


class Scanned:
    """A blob together with its lazily decoded module, shared by all detectors of one scan."""

    def __init__(self, blob: bytes, module: Module | None = None):
        self.blob = blob
        self._module = module
        self._parsed = module is not None
        self._histogram: dict[str, int] | None = None

    @property
    def module(self) -> Module | None:
        if not self._parsed:
            from divers.ir.codec import parse_module

            try:
                self._module = parse_module(self.blob)
            except WasmFormatError:
                self._module = None
            self._parsed = True
        return self._module

    @property
    def histogram(self) -> dict[str, int]:
        """Opcode counts over every decoded defined-function body, ``end`` included."""
        if self._histogram is None:
            counts: dict[str, int] = {}
            m = self.module
            for f in m.functions if m is not None else ():
                for i in f.body.instructions or ():
                    counts[i.op] = counts.get(i.op, 0) + 1
            self._histogram = counts
        return self._histogram


class Detector:
    """Compiled, validated predicate for one ``DetectorSpec``."""

    def __init__(self, spec: DetectorSpec):
        self.spec = spec
        self.name = spec.name
        if not isinstance(spec.name, str) or not spec.name:
            raise BadPattern("detector names must be non-empty strings")
        kind = spec.kind
        p = spec.params
        if kind == BYTE_SIGNATURE:
            self._pattern = _hex(spec)
            self._check = self._byte_signature
        elif kind == EXPORT_NAME:
            sub = p.get("substring")
            if not isinstance(sub, str) or not sub:
                raise BadPattern(f"{spec.name}: substring must be a non-empty string")
            self._substring = sub
            self._check = self._export_name
        elif kind == HISTOGRAM:
            opcode = p.get("opcode")
            ratio = p.get("min_ratio")
            if not isinstance(opcode, str) or not opcode:
                raise BadPattern(f"{spec.name}: opcode must be a non-empty string")
            if isinstance(ratio, bool) or not isinstance(ratio, (int, float)) or not 0 < ratio <= 1:
                raise BadPattern(f"{spec.name}: min_ratio must satisfy 0 < min_ratio <= 1")
            self._opcode = opcode
            self._ratio = float(ratio)
            self._check = self._histogram
        elif kind == CUSTOM_FINGERPRINT:
            section = p.get("section")
            if not isinstance(section, str) or not section:
                raise BadPattern(f"{spec.name}: section must be a non-empty string")
            self._section = section
            self._pattern = _hex(spec)
            self._check = self._custom_fingerprint
        elif kind == SIZE_BAND:
            lo, hi = p.get("min"), p.get("max")
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in (lo, hi)) or not 0 <= lo <= hi:
                raise BadPattern(f"{spec.name}: size band needs integers 0 <= min <= max")
            self._lo, self._hi = lo, hi
            self._check = self._size_band
        else:
            raise BadPattern(f"{spec.name}: unknown detector kind {kind!r}")

    def __call__(self, scanned: Scanned) -> bool:
        return self._check(scanned)

    def _byte_signature(self, s: Scanned) -> bool:
        return self._pattern in s.blob

    def _export_name(self, s: Scanned) -> bool:
        m = s.module
        return m is not None and any(self._substring in e.name for e in m.exports)

    def opcode_matches(self, op: str) -> bool:
        # A bare operator name ("xor") matches it at every integer width.
        return op == self._opcode or ("." not in self._opcode and op.endswith("." + self._opcode))

    def _histogram(self, s: Scanned) -> bool:
        counts = s.histogram
        total = sum(counts.values())
        if not total:
            return False
        hits = sum(n for op, n in counts.items() if self.opcode_matches(op))
        return hits / total >= self._ratio

    def _custom_fingerprint(self, s: Scanned) -> bool:
        m = s.module
        if m is None:
            return False
        return any(c.name == self._section and self._pattern in c.payload for c in m.customs)

    def _size_band(self, s: Scanned) -> bool:
        return self._lo <= len(s.blob) <= self._hi


def compile_detectors(specs) -> list[Detector]:
    seen = set()
    out = []
    for spec in specs:
        if spec.name in seen:
            raise DuplicateDetectorName(spec.name)
        seen.add(spec.name)
        out.append(Detector(spec))
    return out


def load_specs(path: str | Path) -> list[DetectorSpec]:
    """Read a JSON list of ``{"name", "kind", "params"}`` objects."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "detectors" in data:
        data = data["detectors"]
    if not isinstance(data, list):
        raise BadPattern(f"{path}: expected a JSON list of detector specs")
    return [DetectorSpec.from_json(obj) for obj in data]


def dump_specs(specs, path: str | Path) -> None:
    text = json.dumps([s.to_json() for s in specs], indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")
