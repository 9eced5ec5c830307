"""Per-run trace files."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from divers.diversifier.kinds import behavioral
from divers.search.core import IterationRecord

TRACE_COLUMNS = (
    "iteration", "fitness_after", "accepted", "oracle_calls_so_far",
    "fitness_before", "acceptance_probability", "status", "kind", "rule", "behavioral",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def trace_rows(trace: list[IterationRecord]):
    for r in trace:
        t = r.transform
        yield (
            r.iteration, r.fitness_after, r.accepted, r.oracle_calls_so_far,
            r.fitness_before, r.acceptance_probability, r.status,
            t.kind.value if t else None, t.rule_id if t else None,
            behavioral(t.kind) if t else None,
        )


def progress_csv_text(trace: list[IterationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in trace_rows(trace):
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def emit_progress_csv(trace: list[IterationRecord], path: str | Path) -> Path:
    """Write ``trace`` as UTF-8 CSV with a header line and LF line endings."""
    if not trace:
        raise ValueError("trace is empty")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(progress_csv_text(trace).encode("utf-8"))
    return path


def read_trace(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run_stem(binary_id: str, algorithm: str, sigma: float | None, seed: int) -> str:
    algo = algorithm.replace(":", "-")
    sig = "na" if sigma is None else format(sigma, "g")
    return f"{binary_id}_{algo}_{sig}_{seed}"


def trace_filename(binary_id: str, algorithm: str, sigma: float | None, seed: int) -> str:
    return f"trace_{run_stem(binary_id, algorithm, sigma, seed)}.csv"
