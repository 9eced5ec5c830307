"""Peephole rewrite rules and their soundness checker.

Every rule rewrites a short window of modeled instructions into a window that
leaves the same operand stack and the same locals for every input valuation.
"""

from __future__ import annotations

import random
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from divers.diversifier.evaluator import BITS, MASK, UnmodeledInstruction, eval_fragment, to_signed
from divers.diversifier.kinds import PatternMismatch
from divers.ir.model import FunctionBody, Instruction, ins
from divers.ir.validate import typecheck_fragment

INT_TYPES = ("i32", "i64")

Matcher = Callable[[Sequence[Instruction], int, Sequence[str]], "int | None"]
Emitter = Callable[[Sequence[Instruction], Sequence[str], random.Random], list[Instruction]]
Sampler = Callable[[random.Random], "tuple[list[Instruction], list[Instruction], tuple[str, ...]]"]


@dataclass(frozen=True)
class RewriteRule:
    rule_id: str
    match: Matcher = field(repr=False)
    emit: Emitter = field(repr=False)
    sample: Sampler = field(repr=False)
    input_domain: str = "all operand and local valuations"
    description: str = ""


def producer_type(instr: Instruction, local_types: Sequence[str]) -> str | None:
    """Integer type pushed by a side-effect-free single-value producer, else None."""
    op = instr.op
    if op == "i32.const":
        return "i32"
    if op == "i64.const":
        return "i64"
    if op == "local.get":
        idx = instr.imm[0]
        if idx < len(local_types) and local_types[idx] in INT_TYPES:
            return local_types[idx]
    return None


def signed_const(t: str, value: int) -> Instruction:
    return ins(f"{t}.const", to_signed(value, BITS[t]))


def random_bits(rng: random.Random, t: str) -> int:
    return rng.getrandbits(BITS[t])


_EDGES = (0, 1, 2, 31, 32, 63, 64, -1, -2)


def sample_value(rng: random.Random, t: str) -> int:
    """Unsigned value of type ``t``, biased towards boundary cases."""
    bits = BITS[t]
    r = rng.random()
    if r < 0.2:
        return rng.choice(_EDGES) & MASK[t]
    if r < 0.3:
        return rng.choice((1 << (bits - 1), (1 << (bits - 1)) - 1))
    return rng.getrandbits(bits)


def _random_local_types(rng: random.Random) -> tuple[str, ...]:
    return tuple(rng.choice(INT_TYPES) for _ in range(rng.randint(1, 4)))


def _random_producer(rng: random.Random, t: str, local_types: Sequence[str]) -> Instruction:
    candidates = [i for i, lt in enumerate(local_types) if lt == t]
    if candidates and rng.random() < 0.6:
        return ins("local.get", rng.choice(candidates))
    return signed_const(t, sample_value(rng, t))


# -- rule families ------------------------------------------------------------


def _suffix_rule(rule_id: str, suffix: Callable[[str, random.Random], list[Instruction]],
                 description: str) -> RewriteRule:
    """Rule that appends a value-preserving suffix after an integer producer."""

    def match(instrs, i, local_types):
        return 1 if producer_type(instrs[i], local_types) else None

    def emit(window, local_types, rng):
        t = producer_type(window[0], local_types)
        if t is None:
            raise PatternMismatch(rule_id)
        return [window[0], *suffix(t, rng)]

    def sample(rng):
        lt = _random_local_types(rng)
        t = rng.choice(INT_TYPES)
        return [], [_random_producer(rng, t, lt)], lt

    return RewriteRule(rule_id, match, emit, sample, description=description)


def _identity(op: str, operand: int) -> Callable[[str, random.Random], list[Instruction]]:
    return lambda t, rng: [ins(f"{t}.const", operand), ins(f"{t}.{op}")]


def _inert_prefix(t: str, rng: random.Random) -> list[Instruction]:
    k = to_signed(rng.getrandbits(64), 64)
    return [ins("i64.const", k), ins("drop"), ins(f"{t}.const", 0), ins(f"{t}.shr_u")]


def _commute_rule(op: str) -> RewriteRule:
    rule_id = f"commute-{op}"

    def match(instrs, i, local_types):
        if i + 2 >= len(instrs):
            return None
        t = producer_type(instrs[i], local_types)
        if t is None or producer_type(instrs[i + 1], local_types) != t:
            return None
        return 3 if instrs[i + 2].op == f"{t}.{op}" else None

    def emit(window, local_types, rng):
        a, b, operator = window
        return [b, a, operator]

    def sample(rng):
        lt = _random_local_types(rng)
        t = rng.choice(INT_TYPES)
        window = [_random_producer(rng, t, lt), _random_producer(rng, t, lt), ins(f"{t}.{op}")]
        return [], window, lt

    return RewriteRule(rule_id, match, emit, sample,
                       description=f"swap the operands of a commutative {op}")


def _const_unfold() -> RewriteRule:
    def match(instrs, i, local_types):
        return 1 if instrs[i].op in ("i32.const", "i64.const") else None

    def emit(window, local_types, rng):
        t = window[0].op.split(".")[0]
        c = window[0].imm[0] & MASK[t]
        a = random_bits(rng, t)
        b = (c - a) & MASK[t]
        return [signed_const(t, a), signed_const(t, b), ins(f"{t}.add")]

    def sample(rng):
        t = rng.choice(INT_TYPES)
        return [], [signed_const(t, sample_value(rng, t))], ()

    return RewriteRule("const-unfold", match, emit, sample,
                       description="split a constant into a wrapping sum of two constants")


def _tee_expand() -> RewriteRule:
    def match(instrs, i, local_types):
        return 1 if instrs[i].op == "local.tee" else None

    def emit(window, local_types, rng):
        idx = window[0].imm[0]
        return [ins("local.set", idx), ins("local.get", idx)]

    def sample(rng):
        lt = _random_local_types(rng)
        idx = rng.randrange(len(lt))
        return [_random_producer(rng, lt[idx], lt)], [ins("local.tee", idx)], lt

    return RewriteRule("tee-expand", match, emit, sample,
                       description="replace local.tee with local.set followed by local.get")


def _sub_as_add() -> RewriteRule:
    def match(instrs, i, local_types):
        if i + 1 >= len(instrs):
            return None
        op = instrs[i].op
        if op in ("i32.const", "i64.const") and instrs[i + 1].op == op.split(".")[0] + ".sub":
            return 2
        return None

    def emit(window, local_types, rng):
        t = window[0].op.split(".")[0]
        return [signed_const(t, -window[0].imm[0]), ins(f"{t}.add")]

    def sample(rng):
        lt = _random_local_types(rng)
        t = rng.choice(INT_TYPES)
        setup = [_random_producer(rng, t, lt)]
        return setup, [signed_const(t, sample_value(rng, t)), ins(f"{t}.sub")], lt

    return RewriteRule("sub-as-add-of-negation", match, emit, sample,
                       description="x - c becomes x + (-c)")


def _nop_inject() -> RewriteRule:
    def match(instrs, i, local_types):
        return 1 if producer_type(instrs[i], local_types) else None

    def emit(window, local_types, rng):
        return [window[0], ins("nop")]

    def sample(rng):
        lt = _random_local_types(rng)
        return [], [_random_producer(rng, rng.choice(INT_TYPES), lt)], lt

    return RewriteRule("nop-inject", match, emit, sample, description="insert a nop")


def rule_catalog() -> list[RewriteRule]:
    return list(_CATALOG)


_CATALOG: tuple[RewriteRule, ...] = (
    _const_unfold(),
    _suffix_rule("inert-prefix-inject", _inert_prefix,
                 "push and drop a random i64, then shift the value right by zero"),
    _suffix_rule("shr-zero-identity", _identity("shr_u", 0), "x >> 0"),
    _suffix_rule("shl-zero-identity", _identity("shl", 0), "x << 0"),
    _suffix_rule("add-zero-identity", _identity("add", 0), "x + 0"),
    _suffix_rule("mul-one-identity", _identity("mul", 1), "x * 1"),
    _suffix_rule("or-zero-identity", _identity("or", 0), "x | 0"),
    _suffix_rule("xor-zero-identity", _identity("xor", 0), "x ^ 0"),
    _commute_rule("add"),
    _commute_rule("mul"),
    _tee_expand(),
    _sub_as_add(),
    _commute_rule("xor"),
    _commute_rule("and"),
    _commute_rule("or"),
    _nop_inject(),
)

RULES_BY_ID: dict[str, RewriteRule] = {r.rule_id: r for r in _CATALOG}


def get_rule(rule_id: str) -> RewriteRule:
    return RULES_BY_ID[rule_id]


def peephole_rewrite(body: FunctionBody, rule: RewriteRule, site: int, rng: random.Random,
                     params: Sequence[str] = ()) -> FunctionBody:
    """Apply ``rule`` at instruction offset ``site`` of ``body``."""
    if body.is_opaque:
        raise PatternMismatch(f"{rule.rule_id}: body is opaque")
    instrs = body.instructions
    local_types = tuple(params) + body.local_types
    if not 0 <= site < len(instrs):
        raise PatternMismatch(f"{rule.rule_id}: site {site} out of range")
    n = rule.match(instrs, site, local_types)
    if not n:
        raise PatternMismatch(f"{rule.rule_id} does not match at {site}")
    window = instrs[site : site + n]
    if not all(i.modeled for i in window):
        raise PatternMismatch(f"{rule.rule_id}: window contains unmodeled instructions")
    emitted = rule.emit(window, local_types, rng)
    return body.with_instructions((*instrs[:site], *emitted, *instrs[site + n :]))


# -- soundness ---------------------------------------------------------------


@dataclass
class SoundnessReport:
    rule_id: str
    samples: int
    passed: bool
    counterexample: dict | None = None

    def __str__(self) -> str:
        if self.passed:
            return f"{self.rule_id}: pass ({self.samples} samples)"
        cx = self.counterexample
        return (f"{self.rule_id}: FAIL locals={cx['locals']} "
                f"window=[{'; '.join(cx['window'])}] -> [{'; '.join(cx['rewritten'])}] "
                f"original={cx['original']} rewritten_result={cx['rewritten_result']}")


def verify_rule(rule: RewriteRule, samples: int, rng: random.Random) -> SoundnessReport:
    """Differential evaluation of original vs rewritten windows on random valuations."""
    for n in range(samples):
        setup, window, local_types = rule.sample(rng)
        fragment = [*setup, *window]
        if rule.match(fragment, len(setup), local_types) != len(window):
            raise PatternMismatch(f"{rule.rule_id}: sampler produced a non-matching window")
        emitted = rule.emit(window, local_types, rng)
        for i in (*fragment, *emitted):
            if not i.modeled:
                raise UnmodeledInstruction(f"{rule.rule_id}: {i.op}")
        rewritten = [*setup, *emitted]
        values = [sample_value(rng, t) for t in local_types]
        before = eval_fragment(fragment, values, local_types=local_types)
        after = eval_fragment(rewritten, values, local_types=local_types)
        types_ok = True
        try:
            types_ok = (typecheck_fragment(fragment, local_types)
                        == typecheck_fragment(rewritten, local_types))
        except ValueError:
            types_ok = False
        if before != after or not types_ok:
            return SoundnessReport(rule.rule_id, n + 1, False, {
                "locals": values,
                "window": [str(i) for i in fragment],
                "rewritten": [str(i) for i in rewritten],
                "original": before,
                "rewritten_result": after,
                "types_agree": types_ok,
            })
    return SoundnessReport(rule.rule_id, samples, True)
