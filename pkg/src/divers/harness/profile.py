"""Which transformations did the accepted moves of totally-evading runs use?"""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from divers.diversifier.kinds import Kind, behavioral
from divers.harness.traces import read_trace, trace_filename
from divers.search.core import IterationRecord


class EmptySelection(ValueError):
    pass


@dataclass
class ProfileReport:
    counts: dict[str, int]
    runs: int

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def behavioral(self) -> int:
        return sum(n for k, n in self.counts.items() if behavioral(Kind(k)))

    @property
    def non_behavioral(self) -> int:
        return self.total - self.behavioral

    @property
    def ranking(self) -> list[str]:
        return list(self.counts)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("kind", "count", "behavioral"))
        for kind, n in self.counts.items():
            w.writerow((kind, n, "true" if behavioral(Kind(kind)) else "false"))
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_bytes(self.csv_text().encode("utf-8"))
        return path


def _accepted_kinds(trace) -> Iterable[str]:
    for r in trace:
        if isinstance(r, IterationRecord):
            if r.accepted and r.transform is not None:
                yield r.transform.kind.value
        elif r.get("accepted") == "1" and r.get("kind"):
            yield r["kind"]


def profile_traces(traces: Sequence) -> ProfileReport:
    """Count accepted transformations by kind over the given traces (records or CSV rows)."""
    if not traces:
        raise EmptySelection("no runs selected")
    counts: dict[str, int] = {}
    for trace in traces:
        for kind in _accepted_kinds(trace):
            counts[kind] = counts.get(kind, 0) + 1
    ordered = dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
    return ProfileReport(ordered, len(traces))


def select_runs(rows, algorithm: str | None = None, sigma: float | None = None):
    """Totally-evading MCMC rows at the lowest-acceptance setting (largest sigma by default)."""
    if algorithm is None:
        pool = [r for r in rows if r.algorithm.startswith("mcmc")]
    else:
        pool = [r for r in rows if r.algorithm == algorithm]
    if sigma is None:
        sigmas = [r.sigma for r in pool if r.sigma is not None]
        sigma = max(sigmas) if sigmas else None
    return [r for r in pool if r.outcome == "Total" and r.sigma == sigma]


def profile_transformations(rows, traces_dir: str | Path, *, algorithm: str | None = None,
                            sigma: float | None = None) -> ProfileReport:
    selected = select_runs(rows, algorithm, sigma)
    if not selected:
        raise EmptySelection("no totally-evading runs under the selected configuration")
    traces = [read_trace(Path(traces_dir) / trace_filename(r.binary_id, r.algorithm, r.sigma, r.seed))
              for r in selected]
    return profile_traces(traces)
