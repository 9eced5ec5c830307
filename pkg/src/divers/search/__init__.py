"""Evasion search algorithms and outcome classification."""

from divers.search.core import (
    AcceptanceMode,
    IterationRecord,
    MismatchedEnsemble,
    NotDetected,
    Outcome,
    SearchConfig,
    SearchError,
    SearchResult,
    acceptance_probability,
    baseline_evade,
    classify_outcome,
    max_evaded,
    mcmc_evade,
)

__all__ = [
    "AcceptanceMode", "IterationRecord", "MismatchedEnsemble", "NotDetected", "Outcome",
    "SearchConfig", "SearchError", "SearchResult", "acceptance_probability", "baseline_evade",
    "classify_outcome", "max_evaded", "mcmc_evade",
]
