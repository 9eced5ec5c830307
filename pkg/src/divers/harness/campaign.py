"""Campaign runner: sweep (binary x algorithm x sigma x seed) and write rows, traces and summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from divers.diversifier.engine import Diversifier
from divers.ir.codec import content_hash, parse_module
from divers.ir.errors import WasmFormatError
from divers.oracle import Oracle, OracleError, load_oracle
from divers.search.core import (
    AcceptanceMode,
    SearchConfig,
    SearchError,
    SearchResult,
    baseline_evade,
    mcmc_evade,
)
from divers.harness.corpus import read_corpus
from divers.harness.traces import emit_progress_csv, run_stem, trace_filename

log = logging.getLogger(__name__)

ROW_COLUMNS = (
    "binary_id", "algorithm", "sigma", "seed", "initial_detectors", "outcome",
    "max_evaded", "oracle_calls", "stacked_transformations", "wall_time_ms",
)
ALGORITHMS = ("baseline", "mcmc", "mcmc:metropolis", "mcmc:greedy", "mcmc:paper-literal")
ERROR = "error"


class CampaignConfigError(ValueError):
    pass


@dataclass
class CampaignConfig:
    corpus: str
    output_dir: str
    oracle_config: str = "default"
    algorithms: list[str] = field(default_factory=lambda: ["baseline"])
    sigmas: list[float] = field(default_factory=lambda: [0.3])
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    max_iterations: int = 1000
    parallelism: int = 1
    size_budget_multiplier: float = 4.0
    record_timing: bool = False
    save_variants: bool = False
    diff_runtime_cmd: str | None = None

    def __post_init__(self):
        if not self.algorithms or not self.seeds:
            raise CampaignConfigError("algorithms and seeds must be non-empty")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise CampaignConfigError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        if any(a != "baseline" for a in self.algorithms) and not self.sigmas:
            raise CampaignConfigError("mcmc algorithms need at least one sigma")
        if self.max_iterations < 1 or self.parallelism < 1:
            raise CampaignConfigError("max_iterations and parallelism must be positive")

    @classmethod
    def from_json(cls, path: str | Path) -> CampaignConfig:
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise CampaignConfigError(f"unknown campaign config keys: {sorted(unknown)}")
        base = path.parent
        for key in ("corpus", "output_dir"):
            if key in data and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        oc = data.get("oracle_config")
        if oc and oc != "default" and not oc.startswith(("http://", "https://")) \
                and not Path(oc).is_absolute():
            data["oracle_config"] = str(base / oc)
        try:
            return cls(**data)
        except TypeError as exc:
            raise CampaignConfigError(str(exc)) from None


@dataclass(frozen=True)
class CampaignRow:
    binary_id: str
    algorithm: str
    sigma: float | None
    seed: int
    initial_detectors: int | None
    outcome: str
    max_evaded: int | None
    oracle_calls: int | None
    stacked_transformations: int | None
    wall_time_ms: int | None = None

    def sort_key(self):
        return (self.binary_id, self.algorithm, -1.0 if self.sigma is None else self.sigma, self.seed)

    def cells(self) -> list[str]:
        out = []
        for name in ROW_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif name == "sigma":
                out.append(format(v, "g"))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_cells(cls, d: dict[str, str]) -> CampaignRow:
        def num(key, conv=int):
            return conv(d[key]) if d.get(key, "") != "" else None

        return cls(d["binary_id"], d["algorithm"], num("sigma", float), int(d["seed"]),
                   num("initial_detectors"), d["outcome"], num("max_evaded"),
                   num("oracle_calls"), num("stacked_transformations"), num("wall_time_ms"))


@dataclass(frozen=True)
class RunSpec:
    file: str
    binary_id: str
    algorithm: str
    sigma: float | None
    seed: int


def _mode(algorithm: str) -> AcceptanceMode:
    _, _, mode = algorithm.partition(":")
    return AcceptanceMode(mode or AcceptanceMode.METROPOLIS)


def plan_runs(corpus: Sequence[tuple[str, bytes]], config: CampaignConfig) -> list[RunSpec]:
    runs = []
    for name, blob in corpus:
        bid = content_hash(blob)[:8]
        for algo in config.algorithms:
            sigmas = [None] if algo == "baseline" else list(config.sigmas)
            for sigma in sigmas:
                for seed in config.seeds:
                    runs.append(RunSpec(name, bid, algo, sigma, seed))
    return runs


def execute_run(spec: RunSpec, blob: bytes, oracle: Oracle, config: CampaignConfig,
                diversifier: Diversifier | None = None) -> SearchResult:
    w = parse_module(blob)
    sc = SearchConfig(
        max_iterations=config.max_iterations,
        sigma=spec.sigma if spec.sigma is not None else 0.0,
        acceptance_mode=AcceptanceMode.METROPOLIS if spec.algorithm == "baseline" else _mode(spec.algorithm),
        seed=spec.seed,
        size_budget_multiplier=config.size_budget_multiplier,
    )
    if spec.algorithm == "baseline":
        return baseline_evade(w, oracle, diversifier, sc)
    return mcmc_evade(w, oracle, diversifier, config=sc)


@dataclass
class CampaignOutput:
    rows: list[CampaignRow]
    output_dir: Path
    files: dict[str, str]  # binary_id -> corpus file name


def _row(spec: RunSpec, result: SearchResult | None, elapsed_ms: int, record_timing: bool) -> CampaignRow:
    wall = elapsed_ms if record_timing else None
    if result is None:
        return CampaignRow(spec.binary_id, spec.algorithm, spec.sigma, spec.seed,
                           None, ERROR, None, None, None, wall)
    outcome = ERROR if result.interrupted else result.outcome.value
    return CampaignRow(spec.binary_id, spec.algorithm, spec.sigma, spec.seed,
                       result.initial_fitness, outcome, result.max_evaded,
                       result.oracle_calls, result.stacked_transformations, wall)


def write_rows(rows: Sequence[CampaignRow], path: str | Path) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    path = Path(path)
    path.write_bytes(buf.getvalue().encode("utf-8"))
    return path


def read_rows(path: str | Path) -> list[CampaignRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ROW_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [CampaignRow.from_cells(d) for d in reader]


def run_campaign(config: CampaignConfig, oracle: Oracle | None = None) -> CampaignOutput:
    """Execute every run of ``config``; rows come back in (binary, algorithm, sigma, seed) order."""
    corpus = read_corpus(config.corpus)
    if not corpus:
        raise CampaignConfigError(f"no .wasm files in {config.corpus}")
    oracle = oracle or load_oracle(config.oracle_config)
    out = Path(config.output_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    if config.save_variants:
        (out / "variants").mkdir(exist_ok=True)
    blobs = {content_hash(b)[:8]: b for _, b in corpus}
    names = {content_hash(b)[:8]: n for n, b in corpus}
    runs = plan_runs(corpus, config)
    diversifier = Diversifier()

    def work(spec: RunSpec):
        start = time.perf_counter()
        result = None
        try:
            result = execute_run(spec, blobs[spec.binary_id], oracle, config, diversifier)
        except OracleError as exc:
            result = getattr(exc, "partial", None)
            log.error("%s %s seed=%s: oracle failure: %s", spec.file, spec.algorithm, spec.seed, exc)
        except (SearchError, WasmFormatError, ValueError) as exc:
            log.error("%s %s seed=%s: %s", spec.file, spec.algorithm, spec.seed, exc)
        elapsed = round((time.perf_counter() - start) * 1000)
        if result is not None and result.trace:
            key = (spec.binary_id, spec.algorithm, spec.sigma, spec.seed)
            emit_progress_csv(result.trace, out / "traces" / trace_filename(*key))
            if config.save_variants:
                (out / "variants" / f"{run_stem(*key)}.wasm").write_bytes(result.final_blob)
        return _row(spec, result, elapsed, config.record_timing), elapsed

    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            done = list(pool.map(work, runs))
    else:
        done = [work(spec) for spec in runs]

    order = sorted(range(len(runs)), key=lambda i: done[i][0].sort_key())
    rows = [done[i][0] for i in order]
    write_rows(rows, out / "rows.csv")
    _write_timings([(runs[i], done[i][1]) for i in order], out / "timings.csv")
    (out / "summary.md").write_text(summarize(rows, names), encoding="utf-8")

    from divers.harness.profile import EmptySelection, profile_transformations

    try:
        profile_transformations(rows, out / "traces").write_csv(out / "profile.csv")
    except EmptySelection:
        log.info("no totally-evading mcmc runs; profile.csv not written")
    if config.diff_runtime_cmd and config.save_variants:
        from divers.harness.diffcheck import run_diffcheck

        run_diffcheck(config.diff_runtime_cmd, rows, blobs, out)
    return CampaignOutput(rows, out, names)


def _write_timings(entries, path: Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("binary_id", "algorithm", "sigma", "seed", "wall_time_ms"))
    for spec, ms in entries:
        w.writerow((spec.binary_id, spec.algorithm,
                    "" if spec.sigma is None else format(spec.sigma, "g"), spec.seed, ms))
    path.write_text(buf.getvalue(), encoding="utf-8")


# -- summary tables ------------------------------------------------------------------


def config_label(algorithm: str, sigma: float | None) -> str:
    return algorithm if sigma is None else f"{algorithm} σ={format(sigma, 'g')}"


def evaded_label(evaded: int, initial: int) -> str:
    """``"26 (83.8%)"``: the percentage is truncated, not rounded, to one decimal."""
    if not initial:
        return str(evaded)
    tenths = 1000 * evaded // initial
    return f"{evaded} ({tenths // 10}.{tenths % 10}%)"


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.1f}"
    return str(x)


def summarize(rows: Sequence[CampaignRow], names: dict[str, str] | None = None) -> str:
    """Markdown tables: per-binary mean transformations to Total and best oracle calls per config."""
    names = names or {}
    binaries = sorted({r.binary_id for r in rows})
    configs = sorted({(r.algorithm, r.sigma) for r in rows},
                     key=lambda c: (c[0], -1.0 if c[1] is None else c[1]))
    by = {}
    for r in rows:
        by.setdefault((r.binary_id, r.algorithm, r.sigma), []).append(r)
    lines = ["# Campaign summary", ""]

    lines += ["## Configurations", "",
              "| config | runs | binaries with Total | Total runs | errors | median oracle_calls | median oracle_calls (Total runs) |",
              "|---|---|---|---|---|---|---|"]
    for algo, sigma in configs:
        sel = [r for r in rows if (r.algorithm, r.sigma) == (algo, sigma)]
        ok = [r for r in sel if r.outcome != ERROR]
        total = [r for r in ok if r.outcome == "Total"]
        nbin = len({r.binary_id for r in total})
        med_all = statistics.median(r.oracle_calls for r in ok) if ok else None
        med_tot = statistics.median(r.oracle_calls for r in total) if total else None
        lines.append(f"| {config_label(algo, sigma)} | {len(sel)} | {nbin}/{len(binaries)} | "
                     f"{len(total)} | {len(sel) - len(ok)} | {_fmt(med_all)} | {_fmt(med_tot)} |")
    lines.append("")

    for algo, sigma in configs:
        lines += [f"## Transformations to total evasion: {config_label(algo, sigma)}", "",
                  "| binary | file | initial detectors | Total seeds | mean_over_evading | mean_over_all | max evaded |",
                  "|---|---|---|---|---|---|---|"]
        for b in binaries:
            sel = [r for r in by.get((b, algo, sigma), []) if r.outcome != ERROR]
            if not sel:
                continue
            total = [r.stacked_transformations for r in sel if r.outcome == "Total"]
            mean_ev = statistics.fmean(total) if total else None
            mean_all = statistics.fmean(r.stacked_transformations for r in sel)
            init = sel[0].initial_detectors
            best = max(r.max_evaded for r in sel)
            evaded = evaded_label(best, init)
            lines.append(f"| {b} | {names.get(b, '')} | {init} | {len(total)}/{len(sel)} | "
                         f"{_fmt(mean_ev)} | {_fmt(mean_all)} | {evaded} |")
        lines.append("")

    lines += ["## Minimum oracle calls to total evasion", "",
              "| binary | " + " | ".join(config_label(*c) for c in configs) + " |",
              "|---|" + "---|" * len(configs)]
    for b in binaries:
        cells = []
        for algo, sigma in configs:
            calls = [r.oracle_calls for r in by.get((b, algo, sigma), []) if r.outcome == "Total"]
            cells.append(_fmt(min(calls)) if calls else "-")
        lines.append(f"| {b} | " + " | ".join(cells) + " |")
    lines.append("")
    return "\n".join(lines)
