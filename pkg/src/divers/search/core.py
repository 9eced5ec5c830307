"""Oracle-guided evasion search: unconditional stacking and MCMC acceptance."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum

from divers.diversifier.engine import Diversifier
from divers.diversifier.kinds import (
    NoApplicableTransformation,
    SizeBudgetExceeded,
    TransformRecord,
)
from divers.ir.codec import encode_module
from divers.ir.model import Module
from divers.oracle.core import Oracle, OracleError, OracleReport, fitness
from divers.rng import derive


class AcceptanceMode(str, Enum):
    PAPER_LITERAL = "paper-literal"
    METROPOLIS = "metropolis"
    GREEDY = "greedy"

    def __str__(self) -> str:
        return self.value


class Outcome(str, Enum):
    TOTAL = "Total"
    PARTIAL = "Partial"
    NONE = "None"

    def __str__(self) -> str:
        return self.value


class SearchError(Exception):
    pass


class NotDetected(SearchError):
    """The input binary is already benign, so there is nothing to evade."""


class MismatchedEnsemble(SearchError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    max_iterations: int = 1000
    sigma: float = 0.3
    acceptance_mode: AcceptanceMode = AcceptanceMode.METROPOLIS
    seed: int = 0
    size_budget_multiplier: float = 4.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.size_budget_multiplier <= 0:
            raise ValueError("size_budget_multiplier must be positive")
        object.__setattr__(self, "acceptance_mode", AcceptanceMode(self.acceptance_mode))


SCANNED = "scanned"
SKIPPED_SIZE = "size-budget"
SKIPPED_NONE = "no-transformation"


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    fitness_before: int
    fitness_after: int | None
    transform: TransformRecord | None
    accepted: bool
    oracle_calls_so_far: int
    acceptance_probability: float
    status: str = SCANNED
    flagged: frozenset[str] = field(default=frozenset(), repr=False)

    @property
    def scanned(self) -> bool:
        return self.status == SCANNED


@dataclass
class SearchResult:
    algorithm: str
    outcome: Outcome
    initial_flagged: frozenset[str]
    initial_fitness: int
    best_fitness: int
    final_module: Module
    final_blob: bytes
    final_report: OracleReport
    trace: list[IterationRecord]
    oracle_calls: int
    stacked_transformations: int
    cache_hits: int = 0
    interrupted: str | None = None

    @property
    def max_evaded(self) -> int:
        return max_evaded(self.trace, self.initial_flagged) if self.trace else 0


def acceptance_probability(previous_fitness: int, current_fitness: int, sigma: float,
                           mode: AcceptanceMode | str = AcceptanceMode.METROPOLIS) -> float:
    """Probability of moving the chain from ``previous_fitness`` to ``current_fitness``."""
    mode = AcceptanceMode(mode)
    if current_fitness < 1:
        raise ValueError("current_fitness must be positive; fitness 0 ends the search first")
    if mode is AcceptanceMode.GREEDY:
        return 1.0 if current_fitness <= previous_fitness else 0.0
    if mode is AcceptanceMode.PAPER_LITERAL:
        x = sigma * previous_fitness / current_fitness
    else:
        x = sigma * (previous_fitness - current_fitness)
    return 1.0 if x >= 0 else min(1.0, math.exp(x))


def classify_outcome(initial_report: OracleReport, final_report: OracleReport) -> Outcome:
    if set(initial_report.detector_names) != set(final_report.detector_names):
        raise MismatchedEnsemble("initial and final reports come from different ensembles")
    s0 = initial_report.flagged
    if not s0:
        raise ValueError("the initial report flags nothing")
    still = s0 & final_report.flagged
    if not still:
        return Outcome.TOTAL
    if still == s0:
        return Outcome.NONE
    return Outcome.PARTIAL


def max_evaded(trace, initial_flagged) -> int:
    s0 = frozenset(initial_flagged)
    scanned = [r for r in trace if r.scanned]
    if not scanned:
        return 0
    return max(len(s0) - len(s0 & r.flagged) for r in scanned)


class _Run:
    """State shared by both algorithms: accounting, tracing and best-variant retention."""

    def __init__(self, algorithm: str, w: Module, oracle: Oracle, diversifier, config,
                 ff: Callable[[OracleReport], int]):
        self.algorithm = algorithm
        self.oracle = oracle
        self.diversifier = diversifier or Diversifier()
        self.config = config
        self.ff = ff
        blob = encode_module(w)
        self.size_limit = int(config.size_budget_multiplier * len(blob))
        self.initial_report = oracle.scan(blob, w)
        self.s0 = self.initial_report.flagged
        if ff(self.initial_report) < 1 or not self.s0:
            raise NotDetected("input not detected")
        self.mutation_rng = derive(config.seed, "mutation")
        self.acceptance_rng = derive(config.seed, "acceptance")
        self.trace: list[IterationRecord] = []
        self.calls = 0
        self.hits = 0
        self.stacked = 0
        self.best = (self._key(self.initial_report, 0), w, blob, self.initial_report)

    def _key(self, report: OracleReport, iteration: int):
        return (report.fitness_over(self.s0), self.ff(report), iteration)

    def propose(self, current: Module):
        """Mutate and scan; returns (variant, report) or (skip status, record)."""
        try:
            variant = self.diversifier.mutate(current, self.mutation_rng, self.size_limit)
        except SizeBudgetExceeded as exc:
            return SKIPPED_SIZE, exc.record
        except NoApplicableTransformation:
            return SKIPPED_NONE, None
        report = self.oracle.scan(variant.blob, variant.module)
        self.calls += 1
        self.hits += report.from_cache
        return variant, report

    def skip(self, status, record, fitness_before):
        self.trace.append(IterationRecord(
            len(self.trace) + 1, fitness_before, None, record, False, self.calls, 0.0, status))

    def record(self, fitness_before, variant, report, accepted, probability):
        """Trace one scanned iteration. Only accepted variants join the chain and
        are candidates for the returned module."""
        iteration = len(self.trace) + 1
        if accepted:
            self.stacked += 1
            key = self._key(report, iteration)
            if key < self.best[0]:
                self.best = (key, variant.module, variant.blob, report)
        record = variant.record
        self.trace.append(IterationRecord(
            iteration, fitness_before, self.ff(report), record, accepted,
            self.calls, probability, SCANNED, report.flagged))

    def result(self, interrupted: str | None = None) -> SearchResult:
        key, module, blob, report = self.best
        return SearchResult(
            algorithm=self.algorithm,
            outcome=classify_outcome(self.initial_report, report),
            initial_flagged=self.s0,
            initial_fitness=self.ff(self.initial_report),
            best_fitness=self.ff(report),
            final_module=module,
            final_blob=blob,
            final_report=report,
            trace=self.trace,
            oracle_calls=self.calls,
            stacked_transformations=self.stacked,
            cache_hits=self.hits,
            interrupted=interrupted,
        )


def _guarded(loop):
    def run(state: _Run) -> SearchResult:
        try:
            loop(state)
        except OracleError as exc:
            exc.partial = state.result(interrupted=str(exc))
            raise
        return state.result()

    return run


@_guarded
def _baseline_loop(run: _Run) -> None:
    current = run.best[1]
    current_fitness = run.ff(run.initial_report)
    for _ in range(run.config.max_iterations):
        proposal = run.propose(current)
        if isinstance(proposal[0], str):
            run.skip(proposal[0], proposal[1], current_fitness)
            continue
        variant, report = proposal
        f = run.ff(report)
        run.record(current_fitness, variant, report, True, 1.0)
        if f == 0:
            return
        current, current_fitness = variant.module, f


@_guarded
def _mcmc_loop(run: _Run) -> None:
    cfg = run.config
    current = run.best[1]
    previous_fitness = run.ff(run.initial_report)
    for _ in range(cfg.max_iterations):
        proposal = run.propose(current)
        if isinstance(proposal[0], str):
            run.skip(proposal[0], proposal[1], previous_fitness)
            continue
        variant, report = proposal
        f = run.ff(report)
        if f == 0:
            run.record(previous_fitness, variant, report, True, 1.0)
            return
        probability = acceptance_probability(previous_fitness, f, cfg.sigma, cfg.acceptance_mode)
        accepted = run.acceptance_rng.random() < probability
        run.record(previous_fitness, variant, report, accepted, probability)
        if accepted:
            current, previous_fitness = variant.module, f


def baseline_evade(w: Module, oracle: Oracle, diversifier: Diversifier | None = None,
                   config: SearchConfig | None = None) -> SearchResult:
    """Stack random transformations, adopting every mutant, until the oracle says benign."""
    config = config or SearchConfig()
    return _baseline_loop(_Run("baseline", w, oracle, diversifier, config, fitness))


def mcmc_evade(w: Module, oracle: Oracle, diversifier: Diversifier | None = None,
               ff: Callable[[OracleReport], int] = fitness,
               config: SearchConfig | None = None) -> SearchResult:
    """Metropolis-style chain over variants, guided by the fitness ``ff``."""
    config = config or SearchConfig()
    return _mcmc_loop(_Run(f"mcmc:{config.acceptance_mode}", w, oracle, diversifier, config, ff))
