"""Constructed corpus/ensemble pairs whose search behaviour is predictable.

``custom_section_scenario`` builds files whose only flags come from custom-section
fingerprints, all padded to one common size ``S``, and pairs them with the 21
fingerprint detectors plus a block of identical "size ceiling" detectors that
flag anything larger than ``S``. Under a low-acceptance chain every growing
transformation costs the whole ceiling block at once, and the only moves that
remove flags are payload replacements, which never grow a payload beyond the
64-byte cap the corpus payloads already sit near. Files carry no dead functions
and no unused types, so neither removal kind can shrink the module either; the
accepted moves are therefore dominated by ModifyCustomSection.
"""

from __future__ import annotations

import random
from dataclasses import replace

from divers import features as F
from divers.diversifier.structure import dead_functions, fresh_export_name
from divers.harness.corpus import _MEMORY, CorpusFile, PlantPlan, _pad_to_size, build_module
from divers.ir import Export, KIND_FUNC, encode_module, normalize
from divers.oracle.detectors import DetectorSpec

CEILING_DETECTORS = 6
CEILING_MAX = 2**31 - 1


def _seal(m):
    """Export every unreachable function so no removal transformation applies."""
    rng = random.Random(0)
    for fi in dead_functions(m):
        m = replace(m, exports=m.exports + (Export(fresh_export_name(m, rng), KIND_FUNC, fi),))
    if _MEMORY not in m.raw_sections:
        m = replace(m, raw_sections=m.raw_sections + (_MEMORY,))
    return normalize(m)


def custom_section_scenario(n: int, rng: random.Random, families: tuple[int, int] = (2, 4),
                            ceiling_detectors: int = CEILING_DETECTORS):
    """Return ``(files, specs)`` for ``n`` custom-section-flagged files of equal size."""
    if n < 1:
        raise ValueError("n must be at least 1")
    built = []
    for _ in range(n):
        plan = PlantPlan(customs=rng.sample(F.CUSTOM_FAMILIES, rng.randint(*families)), fillers=3)
        m, planted = build_module(plan, rng)
        built.append((_seal(m), planted))
    size = max(len(encode_module(m)) for m, _ in built) + 16
    files = []
    for i, (m, planted) in enumerate(built):
        padded = _pad_to_size(m, size, rng)
        files.append(CorpusFile(f"bin_{i:02d}.wasm", encode_module(padded), planted))

    specs = [DetectorSpec.custom_fingerprint(F.custom_detector_name(family, k), family, p.hex())
             for family, patterns in F.custom_fingerprints().items()
             for k, p in enumerate(patterns)]
    specs += [DetectorSpec.size_band(f"size-ceiling-{k}", size + 1, CEILING_MAX)
              for k in range(ceiling_detectors)]
    return files, specs
