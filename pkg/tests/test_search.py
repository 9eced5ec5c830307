import itertools
import math
import random
from dataclasses import replace

import pytest

from walker import independent_verdict
from divers import features as F
from divers.diversifier import Diversifier, Kind
from divers.harness.corpus import PlantPlan, build_module
from divers.ir import CustomSection, encode_module, parse_module
from divers.oracle import (
    DetectorSpec,
    Oracle,
    OracleReport,
    OracleUnavailable,
    Verdict,
    build_synthetic_ensemble,
    load_oracle,
)
from divers.search import (
    AcceptanceMode,
    IterationRecord,
    MismatchedEnsemble,
    NotDetected,
    Outcome,
    SearchConfig,
    acceptance_probability,
    baseline_evade,
    classify_outcome,
    max_evaded,
    mcmc_evade,
)

EVERYTHING = DetectorSpec.size_band("always", 0, 2**31 - 1)


def report_for(flagged, names):
    return OracleReport.from_verdicts(Verdict(n, n in flagged) for n in names)


class ScriptedOracle(Oracle):
    """Answers the first scan with ``initial`` flags, then follows ``fitnesses``."""

    def __init__(self, initial, fitnesses, n=8):
        super().__init__()
        self.names = [f"d{i}" for i in range(n)]
        self.sequence = iter([initial, *fitnesses])

    def _evaluate(self, blob, module):
        k = next(self.sequence)
        return report_for(set(self.names[:k]), self.names)


class FailingOracle(Oracle):
    def __init__(self, inner, fail_after):
        super().__init__()
        self.inner, self.left = inner, fail_after

    def _evaluate(self, blob, module):
        if self.left == 0:
            raise OracleUnavailable("stub outage")
        self.left -= 1
        return self.inner._evaluate(blob, module)


@pytest.fixture(scope="module")
def fingerprinted():
    """A corpus-style module carrying one fingerprinted custom section, and its sole detector."""
    m, _ = build_module(PlantPlan(customs=["producers"], fillers=3), random.Random(1))
    pattern = F.custom_fingerprints()["producers"][0]
    spec = DetectorSpec.custom_fingerprint("fp", "producers", pattern.hex())
    return m, spec


class TestAcceptanceProbability:
    def test_paper_literal_clamps(self):
        assert math.exp(0.3 * 5 / 3) > 1.6
        assert acceptance_probability(5, 3, 0.3, AcceptanceMode.PAPER_LITERAL) == 1.0

    def test_metropolis_spot_value(self):
        p = acceptance_probability(3, 5, 1.1, AcceptanceMode.METROPOLIS)
        assert abs(p - math.exp(-2.2)) < 1e-12
        assert round(p, 4) == 0.1108

    def test_greedy(self):
        assert acceptance_probability(2, 2, 5.0, AcceptanceMode.GREEDY) == 1.0
        assert acceptance_probability(5, 3, 0.0, AcceptanceMode.GREEDY) == 1.0
        assert acceptance_probability(3, 4, 100.0, AcceptanceMode.GREEDY) == 0.0

    def test_paper_literal_degenerate_everywhere(self):
        for prev, curr, sigma in itertools.product(range(1, 61), range(1, 61), (0.01, 0.3, 1.1)):
            assert acceptance_probability(prev, curr, sigma, AcceptanceMode.PAPER_LITERAL) == 1.0

    def test_metropolis_shape(self):
        assert acceptance_probability(5, 3, 1.1) == 1.0
        assert acceptance_probability(4, 4, 1.1) == 1.0
        assert acceptance_probability(3, 4, 0.01) > acceptance_probability(3, 4, 1.1)
        assert acceptance_probability(3, 4, 0.0) == 1.0

    def test_precondition(self):
        with pytest.raises(ValueError):
            acceptance_probability(3, 0, 0.3)


class TestClassification:
    names = ("A", "B", "C")

    def test_total(self):
        assert classify_outcome(report_for({"A", "B"}, self.names), report_for(set(), self.names)) \
            is Outcome.TOTAL

    def test_partial(self):
        assert classify_outcome(report_for({"A", "B"}, self.names), report_for({"B"}, self.names)) \
            is Outcome.PARTIAL

    def test_new_detector_does_not_matter(self):
        assert classify_outcome(report_for({"A"}, self.names), report_for({"A", "C"}, self.names)) \
            is Outcome.NONE
        assert classify_outcome(report_for({"A"}, self.names), report_for({"C"}, self.names)) \
            is Outcome.TOTAL

    def test_mismatched(self):
        with pytest.raises(MismatchedEnsemble):
            classify_outcome(report_for({"A"}, self.names), report_for(set(), ("A", "B")))


class TestMaxEvaded:
    def trace(self, flagged_sets):
        return [IterationRecord(i + 1, 0, len(f), None, True, i + 1, 1.0, flagged=frozenset(f))
                for i, f in enumerate(flagged_sets)]

    def test_reaching_zero(self):
        s0 = {"a", "b", "c"}
        assert max_evaded(self.trace([{"a", "b"}, set()]), s0) == 3

    def test_monotone(self):
        s0 = {"a", "b", "c", "d", "e"}
        trace = self.trace([{"a", "b", "c", "d", "e"}, {"a", "b", "c", "d"}, {"a", "b", "c"}])
        assert [r.fitness_after for r in trace] == [5, 4, 3]
        assert max_evaded(trace, s0) == 2

    def test_outsiders_ignored(self):
        assert max_evaded(self.trace([{"x", "y", "z"}]), {"a"}) == 1


class TestBaseline:
    def test_custom_section_only_ensemble(self, fingerprinted):
        m, spec = fingerprinted
        oracle = build_synthetic_ensemble([spec])
        result = baseline_evade(m, oracle, config=SearchConfig(seed=3))
        assert result.outcome is Outcome.TOTAL
        assert not independent_verdict(spec, result.final_blob)
        assert independent_verdict(spec, encode_module(m))
        scanned = [r for r in result.trace if r.scanned]
        assert scanned[-1].transform.kind is Kind.MODIFY_CUSTOM
        assert all(r.fitness_after == 1 for r in scanned[:-1])
        assert result.stacked_transformations == result.oracle_calls == len(scanned)

    def test_unsatisfiable(self, fingerprinted):
        m, _ = fingerprinted
        oracle = build_synthetic_ensemble([EVERYTHING])
        cfg = SearchConfig(max_iterations=150, seed=1, size_budget_multiplier=100)
        result = baseline_evade(m, oracle, config=cfg)
        assert result.outcome is Outcome.NONE
        assert result.oracle_calls == 150 == len(result.trace)
        assert result.stacked_transformations == result.oracle_calls

    def test_early_exit(self, fingerprinted):
        m, spec = fingerprinted
        oracle = build_synthetic_ensemble([spec])
        result = baseline_evade(m, oracle, config=SearchConfig(seed=5))
        assert result.trace[-1].fitness_after == 0
        assert all(r.fitness_after != 0 for r in result.trace[:-1])
        # the initial detection scan plus one query per scanned iteration
        assert oracle.oracle_calls() + oracle.cache_hits() == result.oracle_calls + 1

    def test_not_detected(self, fingerprinted):
        m, _ = fingerprinted
        clean = replace(m, customs=())
        with pytest.raises(NotDetected, match="input not detected"):
            baseline_evade(clean, build_synthetic_ensemble([fingerprinted[1]]))

    def test_size_budget_skips(self, fingerprinted):
        m, _ = fingerprinted
        cfg = SearchConfig(max_iterations=200, seed=2, size_budget_multiplier=1.05)
        result = baseline_evade(m, build_synthetic_ensemble([EVERYTHING]), config=cfg)
        skipped = [r for r in result.trace if r.status == "size-budget"]
        assert skipped and len(result.trace) == 200
        assert result.oracle_calls == 200 - len(skipped) == result.stacked_transformations
        assert len(result.final_blob) <= len(encode_module(m)) * 1.05

    def test_outage_propagates_with_partial_trace(self, fingerprinted):
        m, _ = fingerprinted
        oracle = FailingOracle(build_synthetic_ensemble([EVERYTHING]), fail_after=6)
        with pytest.raises(OracleUnavailable) as info:
            baseline_evade(m, oracle, config=SearchConfig(seed=0, size_budget_multiplier=100))
        partial = info.value.partial
        assert partial.interrupted and partial.oracle_calls == len(partial.trace) == 5


class TestMcmc:
    def test_greedy_sequence(self, fingerprinted):
        m, _ = fingerprinted
        oracle = ScriptedOracle(5, [3, 4, 3, 2])
        cfg = SearchConfig(max_iterations=4, seed=0, acceptance_mode=AcceptanceMode.GREEDY,
                           size_budget_multiplier=100)
        result = mcmc_evade(m, oracle, config=cfg)
        steps = [(r.fitness_before, r.fitness_after, r.accepted) for r in result.trace]
        assert steps == [(5, 3, True), (3, 4, False), (3, 3, True), (3, 2, True)]
        assert result.stacked_transformations == 3 < result.oracle_calls == 4
        assert result.best_fitness == 2 and result.outcome is Outcome.PARTIAL

    def test_paper_literal_accepts_everything(self, fingerprinted):
        m, _ = fingerprinted
        oracle = ScriptedOracle(2, [3, 5, 8, 8, 7])
        cfg = SearchConfig(max_iterations=5, sigma=0.01, seed=0,
                           acceptance_mode=AcceptanceMode.PAPER_LITERAL, size_budget_multiplier=100)
        result = mcmc_evade(m, oracle, config=cfg)
        assert all(r.accepted and r.acceptance_probability == 1.0 for r in result.trace)
        # worse states were all accepted, but the returned variant is the best chain state
        assert result.best_fitness == 2 and result.outcome is Outcome.NONE

    def test_rejected_candidates_are_never_returned(self, fingerprinted):
        m, _ = fingerprinted
        oracle = ScriptedOracle(5, [6, 6, 6], n=8)
        cfg = SearchConfig(max_iterations=3, seed=0, acceptance_mode=AcceptanceMode.GREEDY,
                           size_budget_multiplier=100)
        result = mcmc_evade(m, oracle, config=cfg)
        assert result.stacked_transformations == 0
        assert result.final_blob == encode_module(m)

    def test_greedy_monotone_on_corpus(self, corpus33):
        oracle = load_oracle("default")
        for f in corpus33[3:8]:
            cfg = SearchConfig(max_iterations=300, seed=4, acceptance_mode=AcceptanceMode.GREEDY)
            result = mcmc_evade(parse_module(f.blob), oracle, config=cfg)
            accepted = [r.fitness_after for r in result.trace if r.accepted]
            assert accepted == sorted(accepted, reverse=True)
            assert result.stacked_transformations == len(accepted) <= result.oracle_calls

    def test_total_certificate(self, corpus33):
        oracle = load_oracle("default")
        for f in corpus33[4:10]:
            result = mcmc_evade(parse_module(f.blob), oracle, config=SearchConfig(seed=1))
            if result.outcome is Outcome.TOTAL:
                fresh = load_oracle("default").scan(result.final_blob)
                assert not (fresh.flagged & result.initial_flagged)
                assert result.trace[-1].fitness_after == 0

    def test_determinism(self, corpus33):
        blob = corpus33[6].blob
        runs = []
        for _ in range(2):
            cfg = SearchConfig(max_iterations=200, seed=9, sigma=0.3)
            runs.append(mcmc_evade(parse_module(blob), load_oracle("default"), config=cfg))
        a, b = runs
        assert a.trace == b.trace and a.final_blob == b.final_blob
        assert (a.oracle_calls, a.stacked_transformations) == (b.oracle_calls, b.stacked_transformations)

    def test_custom_fitness_function(self, fingerprinted):
        m, spec = fingerprinted
        oracle = build_synthetic_ensemble([spec, DetectorSpec.export_name("never", "zzzz")])
        weighted = lambda r: 10 * r.fitness  # noqa: E731
        result = mcmc_evade(m, oracle, ff=weighted, config=SearchConfig(seed=3))
        assert result.outcome is Outcome.TOTAL and result.initial_fitness == 10

    def test_metropolis_uses_its_own_acceptance_stream(self, corpus33):
        blob = corpus33[7].blob
        base = baseline_evade(parse_module(blob), load_oracle("default"), config=SearchConfig(seed=2))
        mc = mcmc_evade(parse_module(blob), load_oracle("default"),
                        config=SearchConfig(seed=2, sigma=0.0))
        # sigma 0 accepts every move, so the chain replays the baseline exactly
        assert [r.transform for r in mc.trace] == [r.transform for r in base.trace]
        assert mc.oracle_calls == base.oracle_calls


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SearchConfig(sigma=-1)
    assert SearchConfig().max_iterations == 1000 and SearchConfig().size_budget_multiplier == 4.0
    assert SearchConfig(acceptance_mode="greedy").acceptance_mode is AcceptanceMode.GREEDY


def test_diversifier_restricted_kinds(fingerprinted):
    m, spec = fingerprinted
    only_custom = Diversifier(kinds=(Kind.MODIFY_CUSTOM,))
    result = baseline_evade(m, build_synthetic_ensemble([spec]), only_custom, SearchConfig(seed=0))
    assert result.outcome is Outcome.TOTAL
    assert {r.transform.kind for r in result.trace} == {Kind.MODIFY_CUSTOM}
    assert [c.name for c in result.final_module.customs] == [c.name for c in m.customs]
    assert isinstance(result.final_module.customs[0], CustomSection)
