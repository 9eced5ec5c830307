"""Malware oracles: synthetic detector ensembles and a generic HTTP client."""

from __future__ import annotations

from pathlib import Path

from divers.oracle.core import (
    MalformedResponse,
    Oracle,
    OracleError,
    OracleReport,
    OracleUnavailable,
    SyntheticEnsemble,
    Verdict,
    build_synthetic_ensemble,
    fitness,
    is_benign,
)
from divers.oracle.defaults import default_ensemble, default_specs
from divers.oracle.detectors import (
    BadPattern,
    DetectorSpec,
    DuplicateDetectorName,
    dump_specs,
    load_specs,
)
from divers.oracle.http import HttpOracle, http_oracle

DEFAULT = "default"


def load_oracle(source: str | Path | None) -> Oracle:
    """Build an oracle from ``"default"``, an ``http(s)://`` endpoint or a detector JSON file."""
    if source is None or str(source) == DEFAULT:
        return default_ensemble()
    text = str(source)
    if text.startswith(("http://", "https://")):
        return http_oracle(text)
    return build_synthetic_ensemble(load_specs(text))


__all__ = [
    "MalformedResponse", "Oracle", "OracleError", "OracleReport", "OracleUnavailable",
    "SyntheticEnsemble", "Verdict", "build_synthetic_ensemble", "fitness", "is_benign",
    "default_ensemble", "default_specs", "BadPattern", "DetectorSpec", "DuplicateDetectorName",
    "dump_specs", "load_specs", "HttpOracle", "http_oracle", "load_oracle", "DEFAULT",
]
