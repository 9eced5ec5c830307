"""Command-line front end: ``divers <command> ...``.

Exit codes: 0 success, 1 domain error (one ``error: <message>`` line on
stderr), 2 usage error. Randomized commands take ``--seed``; when it is omitted
a seed is generated and printed so the run can be repeated.
"""

from __future__ import annotations

import argparse
import logging
import random
import secrets
import sys
from pathlib import Path

from divers.diversifier import Diversifier, TransformError, rule_catalog, verify_rule
from divers.harness.campaign import CampaignConfig, CampaignConfigError, read_rows, run_campaign
from divers.harness.corpus import synthesize_corpus, write_corpus
from divers.harness.profile import EmptySelection, profile_transformations
from divers.harness.traces import emit_progress_csv
from divers.ir import WasmFormatError, encode_module, parse_module
from divers.oracle import DEFAULT, BadPattern, DuplicateDetectorName, OracleError, load_oracle
from divers.rng import derive
from divers.search import (
    AcceptanceMode,
    SearchConfig,
    SearchError,
    baseline_evade,
    mcmc_evade,
)

log = logging.getLogger("divers")

DOMAIN_ERRORS = (
    OSError, ValueError, WasmFormatError, TransformError, SearchError, OracleError,
    CampaignConfigError, BadPattern, DuplicateDetectorName, EmptySelection,
)


class DomainError(Exception):
    pass


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def resolve_seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(32)
        print(f"seed: {args.seed}")
    return args.seed


def read_module(path: str):
    blob = Path(path).read_bytes()
    return blob, parse_module(blob)


# -- commands ----------------------------------------------------------------


def cmd_mutate(args) -> int:
    seed = resolve_seed(args)
    blob, m = read_module(args.input)
    rng = derive(seed, "mutation")
    limit = int(len(blob) * args.size_budget)
    diversifier = Diversifier()
    for _ in range(args.count):
        variant = diversifier.mutate(m, rng, limit)
        m = variant.module
        print(variant.record)
    Path(args.output).write_bytes(encode_module(m))
    return 0


def cmd_evade(args) -> int:
    seed = resolve_seed(args)
    _, w = read_module(args.input)
    oracle = load_oracle(args.oracle)
    config = SearchConfig(max_iterations=args.max_iter, sigma=args.sigma,
                          acceptance_mode=AcceptanceMode(args.mode), seed=seed,
                          size_budget_multiplier=args.size_budget)
    if args.algo == "baseline":
        result = baseline_evade(w, oracle, config=config)
    else:
        result = mcmc_evade(w, oracle, config=config)
    if args.output:
        Path(args.output).write_bytes(result.final_blob)
    if args.trace and result.trace:
        emit_progress_csv(result.trace, args.trace)
    print(f"outcome: {result.outcome}")
    print(f"oracle_calls: {result.oracle_calls}")
    print(f"stacked_transformations: {result.stacked_transformations}")
    print(f"initial_detectors: {len(result.initial_flagged)}")
    print(f"max_evaded: {result.max_evaded}")
    print(f"best_fitness: {result.best_fitness}")
    return 0


def cmd_campaign(args) -> int:
    config = CampaignConfig.from_json(args.config)
    out = run_campaign(config)
    totals = {r.binary_id for r in out.rows if r.outcome == "Total"}
    binaries = {r.binary_id for r in out.rows}
    print(f"runs: {len(out.rows)}")
    print(f"binaries with Total: {len(totals)}/{len(binaries)}")
    print(f"errors: {sum(r.outcome == 'error' for r in out.rows)}")
    print(f"output: {out.output_dir}")
    return 0


def cmd_profile(args) -> int:
    rows = read_rows(args.rows)
    report = profile_transformations(rows, args.traces, algorithm=args.algorithm, sigma=args.sigma)
    report.write_csv(args.output)
    for kind, n in report.counts.items():
        print(f"{kind}: {n}")
    print(f"behavioral: {report.behavioral}")
    print(f"non-behavioral: {report.non_behavioral}")
    print(f"runs: {report.runs}")
    return 0


def cmd_verify_rules(args) -> int:
    seed = resolve_seed(args)
    rng = random.Random(seed)
    failures = 0
    for rule in rule_catalog():
        report = verify_rule(rule, args.samples, rng)
        print(report)
        failures += not report.passed
    if failures:
        raise DomainError(f"{failures} rule(s) have counterexamples")
    return 0


def cmd_synth_corpus(args) -> int:
    seed = resolve_seed(args)
    files = synthesize_corpus(args.n, random.Random(seed))
    write_corpus(files, args.output)
    for f in files:
        print(f"{f.name}: {len(f.blob)} bytes, {len(f.planted)} planted")
    return 0


def cmd_scan(args) -> int:
    blob = Path(args.input).read_bytes()
    report = load_oracle(args.oracle).scan(blob)
    for v in report.verdicts:
        print(f"{v.detector_name}: {'flagged' if v.flagged else 'clean'}")
    print(f"fitness: {report.fitness}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="divers", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mutate", help="apply N stacked random transformations")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", dest="output", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--count", type=positive_int, required=True)
    s.add_argument("--size-budget", type=positive_float, default=4.0,
                   help="refuse variants larger than this multiple of the input (default 4)")
    s.set_defaults(func=cmd_mutate)

    s = sub.add_parser("evade", help="run one evasion search")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--oracle", default=DEFAULT, help="'default', detector JSON, or http(s) endpoint")
    s.add_argument("--algo", choices=("baseline", "mcmc"), required=True)
    s.add_argument("--sigma", type=non_negative_float, default=0.3)
    s.add_argument("--mode", choices=[m.value for m in AcceptanceMode],
                   default=AcceptanceMode.METROPOLIS.value)
    s.add_argument("--seed", type=int)
    s.add_argument("--max-iter", type=positive_int, default=1000)
    s.add_argument("--size-budget", type=positive_float, default=4.0)
    s.add_argument("--out", dest="output")
    s.add_argument("--trace")
    s.set_defaults(func=cmd_evade)

    s = sub.add_parser("campaign", help="run a campaign from a JSON config")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_campaign)

    s = sub.add_parser("profile", help="count accepted transformations of totally-evading runs")
    s.add_argument("--rows", required=True)
    s.add_argument("--traces", required=True)
    s.add_argument("--out", dest="output", required=True)
    s.add_argument("--algorithm", help="restrict to one algorithm label (default: all mcmc)")
    s.add_argument("--sigma", type=non_negative_float, help="default: the largest sigma present")
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("verify-rules", help="differential soundness check of the rule catalog")
    s.add_argument("--samples", type=positive_int, default=1000)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_verify_rules)

    s = sub.add_parser("synth-corpus", help="write a synthetic corpus and manifest")
    s.add_argument("--out", dest="output", required=True)
    s.add_argument("--n", type=positive_int, default=33)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth_corpus)

    s = sub.add_parser("scan", help="print per-detector verdicts and fitness")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--oracle", default=DEFAULT)
    s.set_defaults(func=cmd_scan)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DomainError, *DOMAIN_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
