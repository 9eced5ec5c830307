"""The default 60-detector synthetic ensemble."""

from __future__ import annotations

from divers import features as F
from divers.oracle.detectors import DetectorSpec


def default_specs() -> list[DetectorSpec]:
    specs: list[DetectorSpec] = []
    for family, patterns in F.custom_fingerprints().items():
        for k, pattern in enumerate(patterns):
            specs.append(DetectorSpec.custom_fingerprint(
                F.custom_detector_name(family, k), family, pattern.hex()))
    for kernel in F.kernels():
        specs.append(DetectorSpec.byte_signature(
            F.kernel_detector_name(kernel.index), kernel.signature.hex()))
    for opcode, ratio in F.HISTOGRAMS:
        specs.append(DetectorSpec.histogram(F.histogram_detector_name(opcode, ratio), opcode, ratio))
    for pattern in F.EXPORT_PATTERNS:
        specs.append(DetectorSpec.export_name(F.export_detector_name(pattern), pattern))
    a_name, *b_names = F.TRAP_NAMES
    specs.append(DetectorSpec.size_band(a_name, *F.TRAP_BAND_A))
    for name in b_names:
        specs.append(DetectorSpec.size_band(name, *F.TRAP_BAND_B))
    for k, sig in enumerate(F.data_signatures()):
        specs.append(DetectorSpec.byte_signature(F.data_detector_name(k), sig.hex()))
    return specs


def default_ensemble():
    from divers.oracle.core import build_synthetic_ensemble

    return build_synthetic_ensemble(default_specs())
