"""Catalog of detector-triggering features shared by the default ensemble and the corpus synthesizer.

Every constant here is derived from a fixed-seed generator, so the default
ensemble and the planted corpus agree without any configuration file.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import cache

from divers.ir import leb128
from divers.ir.codec import encode_body
from divers.ir.model import FuncType, FunctionBody, ins

_GEN = "divers-features-v1"

# Custom-section fingerprint families: section name -> three byte patterns.
CUSTOM_FAMILIES = (
    "producers",
    "build_id",
    "emscripten_metadata",
    "sourceMappingURL",
    "miner.config",
    "linking.meta",
    "target_features",
)
FINGERPRINTS_PER_FAMILY = 3

N_KERNELS = 12
KERNEL_SIGNATURE_LEN = 10
N_DATA_SIGNATURES = 7

EXPORT_PATTERNS = ("cryptonight", "_hash", "coinhive", "miner", "stratum", "keccak")
PLANTED_EXPORT = "cryptonight_hash"

# Instruction-histogram detectors: (opcode, min_ratio). Bare operator names match any width.
HISTOGRAMS = (
    ("xor", 0.10), ("xor", 0.12), ("xor", 0.15), ("xor", 0.20),
    ("rotl", 0.04), ("rotl", 0.06), ("rotl", 0.08),
    ("popcnt", 0.02), ("clz", 0.02), ("i64.rotr", 0.03),
)

# Size-band trap: a file sitting in band A can only leave it by first passing
# through band B, which is watched by three detectors. No single move can evade
# more than one other detector of the trap file, so entering B always costs fitness.
TRAP_BAND_A = (30_000, 41_000)
TRAP_BAND_B = (41_001, 43_000)
TRAP_SIZE = 40_900


@dataclass(frozen=True)
class Kernel:
    index: int
    sig: FuncType
    body: FunctionBody
    signature: bytes


@cache
def custom_fingerprints() -> dict[str, tuple[bytes, ...]]:
    rng = random.Random(f"{_GEN}:custom")
    return {
        family: tuple(rng.randbytes(5) for _ in range(FINGERPRINTS_PER_FAMILY))
        for family in CUSTOM_FAMILIES
    }


def custom_detector_name(family: str, k: int) -> str:
    return f"csf-{family}-{k}"


def _kernel(index: int) -> Kernel:
    rng = random.Random(f"{_GEN}:kernel:{index}")
    t = "i32" if index % 3 else "i64"
    ops = ("add", "mul", "sub", "and", "or", "shl", "shr_u")
    seed = rng.getrandbits(31) | (1 << 30)
    k2 = rng.getrandbits(16) + 3
    op1, op2 = rng.choice(ops), rng.choice(ops)
    # (param i32 <t>) (result <t>) (local <t>): mix the argument into an accumulator n times.
    instrs = (
        ins(f"{t}.const", seed),
        ins("local.set", 2),
        ins("block", None),
        ins("loop", None),
        ins("local.get", 0), ins("i32.eqz"), ins("br_if", 1),
        ins("local.get", 2), ins("local.get", 1), ins(f"{t}.{op1}"),
        ins(f"{t}.const", k2), ins(f"{t}.{op2}"),
        ins("local.set", 2),
        ins("local.get", 0), ins("i32.const", 1), ins("i32.sub"), ins("local.set", 0),
        ins("br", 0),
        ins("end"),
        ins("end"),
        ins("local.get", 2),
        ins("end"),
    )
    body = FunctionBody(((1, t),), instrs)
    sig = FuncType(("i32", t), (t,))
    # The signature starts with the body-size prefix, so any edit that resizes the body breaks it.
    content = encode_body(body)
    entry = leb128.encode_u(len(content)) + content
    return Kernel(index, sig, body, entry[:KERNEL_SIGNATURE_LEN])


@cache
def kernels() -> tuple[Kernel, ...]:
    return tuple(_kernel(i) for i in range(N_KERNELS))


def kernel_detector_name(k: int) -> str:
    return f"sig-kernel-{k}"


@cache
def data_signatures() -> tuple[bytes, ...]:
    rng = random.Random(f"{_GEN}:data")
    return tuple(rng.randbytes(8) for _ in range(N_DATA_SIGNATURES))


def data_detector_name(k: int) -> str:
    return f"sig-data-{k}"


def export_detector_name(pattern: str) -> str:
    return f"export-{pattern.strip('_')}"


def histogram_detector_name(opcode: str, ratio: float) -> str:
    return f"hist-{opcode.replace('.', '-')}-{round(ratio * 100):02d}"


TRAP_NAMES = ("size-trap-a", "size-trap-b1", "size-trap-b2", "size-trap-b3")
