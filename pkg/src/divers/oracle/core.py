"""Oracle reports, the caching/counting oracle base class and the synthetic ensemble."""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, field, replace

from divers.ir.model import Module
from divers.oracle.detectors import DetectorSpec, Scanned, compile_detectors


class OracleError(Exception):
    pass


class OracleUnavailable(OracleError):
    pass


class MalformedResponse(OracleError):
    pass


@dataclass(frozen=True)
class Verdict:
    detector_name: str
    flagged: bool


@dataclass(frozen=True)
class OracleReport:
    verdicts: tuple[Verdict, ...]
    fitness: int
    timestamp: float = field(default=0.0, compare=False)
    from_cache: bool = field(default=False, compare=False)

    @classmethod
    def from_verdicts(cls, verdicts, timestamp: float | None = None) -> OracleReport:
        verdicts = tuple(verdicts)
        names = [v.detector_name for v in verdicts]
        if len(set(names)) != len(names):
            raise MalformedResponse("duplicate detector names in report")
        return cls(verdicts, sum(v.flagged for v in verdicts),
                   time.time() if timestamp is None else timestamp)

    @property
    def flagged(self) -> frozenset[str]:
        return frozenset(v.detector_name for v in self.verdicts if v.flagged)

    @property
    def detector_names(self) -> tuple[str, ...]:
        return tuple(v.detector_name for v in self.verdicts)

    def fitness_over(self, names) -> int:
        return len(self.flagged & frozenset(names))


def fitness(report: OracleReport) -> int:
    """Number of detectors that flag the scanned binary."""
    return sum(1 for v in report.verdicts if v.flagged)


def is_benign(report: OracleReport) -> bool:
    return fitness(report) == 0


class Oracle:
    """Content-hash cache and call accounting shared by every oracle backend.

    ``oracle_calls`` counts evaluations that were not answered from the cache;
    ``cache_hits`` counts the rest. Both are safe to read from any thread.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._cache: dict[str, OracleReport] = {}
        self._calls = 0
        self._hits = 0

    def _evaluate(self, blob: bytes, module: Module | None) -> OracleReport:
        raise NotImplementedError

    def scan(self, blob: bytes, module: Module | None = None) -> OracleReport:
        """Scan ``blob``. ``module`` may be passed when it is known to encode to ``blob``."""
        blob = bytes(blob)
        key = hashlib.sha256(blob).hexdigest()
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._hits += 1
                return replace(hit, from_cache=True)
        report = self._evaluate(blob, module)
        with self._lock:
            self._calls += 1
            self._cache.setdefault(key, report)
        return report

    def oracle_calls(self) -> int:
        with self._lock:
            return self._calls

    def cache_hits(self) -> int:
        with self._lock:
            return self._hits

    def reset_counter(self) -> None:
        with self._lock:
            self._calls = 0
            self._hits = 0

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()


class SyntheticEnsemble(Oracle):
    """Local ensemble of pure detector predicates."""

    def __init__(self, specs):
        super().__init__()
        self.specs: tuple[DetectorSpec, ...] = tuple(specs)
        self.detectors = compile_detectors(self.specs)
        if not self.detectors:
            raise ValueError("an ensemble needs at least one detector")

    @property
    def detector_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.detectors)

    def __len__(self) -> int:
        return len(self.detectors)

    def _evaluate(self, blob: bytes, module: Module | None) -> OracleReport:
        scanned = Scanned(blob, module)
        return OracleReport.from_verdicts(Verdict(d.name, d(scanned)) for d in self.detectors)


def build_synthetic_ensemble(specs) -> SyntheticEnsemble:
    return SyntheticEnsemble(specs)
