"""Synthetic corpus of small arithmetic modules with planted detector-triggering features."""

from __future__ import annotations

import json
import random
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from divers import features as F
from divers.ir.codec import encode_module, normalize
from divers.ir.model import (
    KIND_FUNC,
    CustomSection,
    DataSegment,
    Export,
    FuncType,
    Function,
    FunctionBody,
    Module,
    RawSection,
    ins,
)

MANIFEST = "manifest.json"
FEATURE_KINDS = (
    "custom_section", "kernel", "xor_heavy", "rotl_heavy",
    "export_name", "data_signature", "size_trap",
)
# Per-file inclusion probabilities for the random part of the default corpus.
DEFAULT_MIX: Mapping[str, float] = {
    "custom_section": 0.8, "kernel": 0.7, "xor_heavy": 0.3, "rotl_heavy": 0.2,
}
_HIST_TARGETS = {
    "xor": (0.11, 0.135, 0.175, 0.22),
    "rotl": (0.05, 0.07, 0.09),
}
_FILLER_OPS = ("add", "sub", "mul", "and", "or", "shl", "shr_u")


@dataclass
class PlantPlan:
    customs: list[str] = field(default_factory=list)
    kernels: list[int] = field(default_factory=list)
    xor_level: int = 0
    rotl_level: int = 0
    export: bool = False
    data_signatures: list[int] = field(default_factory=list)
    size_trap: bool = False
    fillers: int | None = None

    def is_empty(self) -> bool:
        return not (self.customs or self.kernels or self.xor_level or self.rotl_level
                    or self.export or self.data_signatures or self.size_trap)


@dataclass
class CorpusFile:
    name: str
    blob: bytes
    planted: list[str]


class _Builder:
    def __init__(self):
        self.types: list[FuncType] = []
        self.functions: list[Function] = []
        self.exports: list[Export] = []

    def type_index(self, sig: FuncType) -> int:
        if sig not in self.types:
            self.types.append(sig)
        return self.types.index(sig)

    def add(self, sig: FuncType, body: FunctionBody, export: str | None = None) -> int:
        self.functions.append(Function(self.type_index(sig), body))
        idx = len(self.functions) - 1
        if export is not None:
            self.exports.append(Export(export, KIND_FUNC, idx))
        return idx


def _filler(rng: random.Random) -> tuple[FuncType, FunctionBody]:
    """A small xor-free arithmetic function with a loop or a branch."""
    shape = rng.choice(("loop", "branch", "straight"))
    c = lambda: rng.randint(1, 1 << 20)  # noqa: E731
    op = lambda: "i32." + rng.choice(_FILLER_OPS)  # noqa: E731
    if shape == "loop":
        instrs = (
            ins("block", None), ins("loop", None),
            ins("local.get", 0), ins("i32.eqz"), ins("br_if", 1),
            ins("local.get", 1), ins("local.get", 0), ins(op()), ins("i32.const", c()), ins(op()),
            ins("local.set", 1),
            ins("local.get", 0), ins("i32.const", 1), ins("i32.sub"), ins("local.set", 0),
            ins("br", 0), ins("end"), ins("end"),
            ins("local.get", 1), ins("end"),
        )
        return FuncType(("i32", "i32"), ("i32",)), FunctionBody((), instrs)
    if shape == "branch":
        instrs = (
            ins("local.get", 0), ins("local.get", 1), ins("i32.gt_u"),
            ins("if", "i32"),
            ins("local.get", 0), ins("i32.const", c()), ins(op()),
            ins("else"),
            ins("local.get", 1), ins("i32.const", c()), ins(op()),
            ins("end"), ins("end"),
        )
        return FuncType(("i32", "i32"), ("i32",)), FunctionBody((), instrs)
    instrs = [ins("local.get", 0)]
    for _ in range(rng.randint(2, 5)):
        instrs += [ins("i32.const", c()), ins(op())]
    instrs += [ins("local.tee", 1), ins("local.get", 1), ins("i32.add"), ins("end")]
    return FuncType(("i32",), ("i32",)), FunctionBody(((1, "i32"),), tuple(instrs))


def _pad(op: str, n: int, rng: random.Random) -> tuple[FuncType, FunctionBody]:
    """``local.get 0`` followed by ``n`` pairs of (const, op): exactly ``n`` uses of ``op``."""
    instrs = [ins("local.get", 0)]
    for _ in range(n):
        instrs += [ins("i32.const", rng.randint(1, 1 << 30)), ins(op)]
    instrs.append(ins("end"))
    return FuncType(("i32",), ("i32",)), FunctionBody((), tuple(instrs))


def _count(functions) -> tuple[int, dict[str, int]]:
    total = 0
    counts: dict[str, int] = {}
    for f in functions:
        for i in f.body.instructions:
            total += 1
            counts[i.op] = counts.get(i.op, 0) + 1
    return total, counts


def _level(ratio: float, op: str) -> int:
    return sum(1 for o, r in F.HISTOGRAMS if o == op and ratio >= r)


def _solve_pads(base_total: int, xor_level: int, rotl_level: int) -> tuple[int, int]:
    """Pad lengths whose module-wide ratios land inside the requested threshold bands."""
    tx = _HIST_TARGETS["xor"][xor_level - 1] if xor_level else 0.0
    tr = _HIST_TARGETS["rotl"][rotl_level - 1] if rotl_level else 0.0
    best = None
    for jx in range(0, 400) if xor_level else (0,):
        for jr in range(0, 200) if rotl_level else (0,):
            total = base_total + (2 * jx + 2 if jx else 0) + (2 * jr + 2 if jr else 0)
            rx, rr = jx / total, jr / total
            if _level(rx, "xor") != xor_level or _level(rr, "rotl") != rotl_level:
                continue
            err = abs(rx - tx) + abs(rr - tr)
            if best is None or err < best[0]:
                best = (err, jx, jr)
    if best is None:
        raise ValueError(f"cannot reach histogram levels xor={xor_level} rotl={rotl_level}")
    return best[1], best[2]


def _custom_payload(family: str, rng: random.Random) -> bytes:
    parts = [rng.randbytes(rng.randint(4, 24))]
    for pattern in F.custom_fingerprints()[family]:
        parts += [pattern, rng.randbytes(rng.randint(4, 24))]
    return b"".join(parts)


_MEMORY = RawSection(5, b"\x01\x00\x01")  # one memory, min 1 page, no max


def build_module(plan: PlantPlan, rng: random.Random) -> tuple[Module, list[str]]:
    """Assemble one module following ``plan``; returns it with the detector names it trips."""
    b = _Builder()
    planted: list[str] = []
    n_fill = plan.fillers if plan.fillers is not None else rng.randint(2, 4)
    for k in range(n_fill):
        sig, body = _filler(rng)
        # Leave the last filler unexported (and so unreachable) now and then.
        export = None if (k == n_fill - 1 and k and rng.random() < 0.5) else f"fn{k}"
        b.add(sig, body, export)
    for k in plan.kernels:
        kern = F.kernels()[k]
        b.add(kern.sig, kern.body, f"kern{k}")
        planted.append(F.kernel_detector_name(k))
    if plan.xor_level or plan.rotl_level:
        while True:
            base_total, _ = _count(b.functions)
            try:
                jx, jr = _solve_pads(base_total, plan.xor_level, plan.rotl_level)
                break
            except ValueError:
                # Too few instructions for the ratio steps to land in the band: add ballast.
                if base_total > 2000:
                    raise
                b.add(*_filler(rng), None)
        if jx:
            b.add(*_pad("i32.xor", jx, rng), "mix")
        if jr:
            b.add(*_pad("i32.rotl", jr, rng), "spin")
        total, counts = _count(b.functions)
        for opcode, ratio in F.HISTOGRAMS:
            hits = sum(n for op, n in counts.items()
                       if op == opcode or ("." not in opcode and op.endswith("." + opcode)))
            if hits / total >= ratio:
                planted.append(F.histogram_detector_name(opcode, ratio))
    if plan.export:
        b.exports.append(Export(F.PLANTED_EXPORT, KIND_FUNC, 0))
        planted += [F.export_detector_name(p) for p in F.EXPORT_PATTERNS if p in F.PLANTED_EXPORT]

    customs = []
    for family in plan.customs:
        customs.append(CustomSection(family, _custom_payload(family, rng), anchor=99))
        planted += [F.custom_detector_name(family, k) for k in range(F.FINGERPRINTS_PER_FAMILY)]

    data = []
    if plan.data_signatures:
        payload = b"".join(rng.randbytes(rng.randint(8, 32)) + F.data_signatures()[k]
                           for k in plan.data_signatures)
        data.append(DataSegment(0, 0, (ins("i32.const", 0), ins("end")), payload))
        planted += [F.data_detector_name(k) for k in plan.data_signatures]

    m = Module(
        types=tuple(b.types), functions=tuple(b.functions), exports=tuple(b.exports),
        data=tuple(data), customs=tuple(customs),
        raw_sections=(_MEMORY,) if (data or plan.size_trap) else (),
    )
    if plan.size_trap:
        m = _pad_to_size(m, F.TRAP_SIZE, rng)
        planted.append(F.TRAP_NAMES[0])
    return normalize(m), sorted(planted)


def _pad_to_size(m: Module, size: int, rng: random.Random) -> Module:
    from dataclasses import replace

    filler = b""
    offset = 4096
    for _ in range(8):
        seg = DataSegment(0, 0, (ins("i32.const", offset), ins("end")), filler)
        candidate = replace(m, data=m.data + (seg,))
        gap = size - len(encode_module(candidate))
        if gap == 0:
            return candidate
        filler = filler + rng.randbytes(gap) if gap > 0 else filler[:gap]
    raise ValueError(f"could not pad module to exactly {size} bytes")


def random_plan(rng: random.Random, mix: Mapping[str, float]) -> PlantPlan:
    plan = PlantPlan()
    if rng.random() < mix.get("custom_section", 0.0):
        plan.customs = rng.sample(F.CUSTOM_FAMILIES, rng.randint(1, 3))
    if rng.random() < mix.get("kernel", 0.0):
        plan.kernels = sorted(rng.sample(range(F.N_KERNELS), rng.randint(1, 3)))
    if rng.random() < mix.get("xor_heavy", 0.0):
        plan.xor_level = rng.randint(1, 2)
    if rng.random() < mix.get("rotl_heavy", 0.0):
        plan.rotl_level = rng.randint(1, 2)
    if rng.random() < mix.get("export_name", 0.0):
        plan.export = True
    if rng.random() < mix.get("data_signature", 0.0):
        plan.data_signatures = sorted(rng.sample(range(F.N_DATA_SIGNATURES), rng.randint(1, 2)))
    if rng.random() < mix.get("size_trap", 0.0):
        plan.size_trap = True
    return plan


def default_plans(n: int, rng: random.Random) -> list[PlantPlan]:
    """Corpus layout mirroring a mostly-evadable malware set.

    The first files are fixed: one exporting a miner-style function name and one
    carrying signatures in its data segment (neither can be rewritten by any
    transformation), one sitting in the size-band trap, and one tripping 18 detectors.
    """
    fixed = [
        PlantPlan(customs=rng.sample(F.CUSTOM_FAMILIES, 1), kernels=[0], export=True),
        PlantPlan(customs=rng.sample(F.CUSTOM_FAMILIES, 1), kernels=[1], data_signatures=[0, 1]),
        PlantPlan(kernels=[2], size_trap=True),
        PlantPlan(customs=rng.sample(F.CUSTOM_FAMILIES, 5), kernels=[3, 4], xor_level=1),
    ]
    plans = fixed[:n]
    while len(plans) < n:
        plan = random_plan(rng, DEFAULT_MIX)
        if not plan.is_empty():
            plans.append(plan)
    return plans


def synthesize_corpus(n: int, rng: random.Random,
                      feature_mix: Mapping[str, float] | None = None) -> list[CorpusFile]:
    """Generate ``n`` modules. ``feature_mix`` maps feature kinds to per-file probabilities;
    ``None`` selects the default layout and an empty mapping plants nothing."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if feature_mix is None:
        plans = default_plans(n, rng)
    else:
        unknown = set(feature_mix) - set(FEATURE_KINDS)
        if unknown:
            raise ValueError(f"unknown feature kinds: {sorted(unknown)}")
        plans = [random_plan(rng, feature_mix) for _ in range(n)]
    files = []
    width = max(2, len(str(n - 1)))
    for i, plan in enumerate(plans):
        m, planted = build_module(plan, rng)
        files.append(CorpusFile(f"bin_{i:0{width}d}.wasm", encode_module(m), planted))
    return files


def write_corpus(files: list[CorpusFile], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        (out / f.name).write_bytes(f.blob)
    manifest = [{"file": f.name, "planted": f.planted} for f in files]
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out


def read_corpus(corpus_dir: str | Path) -> list[tuple[str, bytes]]:
    """All ``.wasm`` files of a flat corpus directory, sorted by name."""
    root = Path(corpus_dir)
    return [(p.name, p.read_bytes()) for p in sorted(root.glob("*.wasm"))]


def read_manifest(corpus_dir: str | Path) -> dict[str, list[str]]:
    data = json.loads((Path(corpus_dir) / MANIFEST).read_text(encoding="utf-8"))
    return {entry["file"]: list(entry["planted"]) for entry in data}
