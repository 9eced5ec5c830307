"""Random application of semantics-preserving transformations."""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field, replace

from divers.diversifier.codemotion import CODEMOTION_OPS
from divers.diversifier.kinds import (
    Kind,
    NoApplicableTransformation,
    NotApplicable,
    SizeBudgetExceeded,
    TransformRecord,
)
from divers.diversifier.rules import RewriteRule, peephole_rewrite, rule_catalog
from divers.diversifier.structure import STRUCTURE_OPS, remove_dead_function
from divers.ir.codec import encode_module, normalize
from divers.ir.model import Function, Module

ALL_KINDS: tuple[Kind, ...] = tuple(Kind)
SITE_TRIES = 32


def _draws(rng) -> int:
    return getattr(rng, "draws", 0)


def _candidate_sites(m: Module, fi: int, site: int, rules) -> list[RewriteRule]:
    f = m.functions[fi]
    local_types = m.types[f.type_index].params + f.body.local_types
    instrs = f.body.instructions
    if not instrs[site].modeled:
        return []
    return [r for r in rules if r.match(instrs, site, local_types)]


def peephole(m: Module, rng: random.Random, rules=None) -> tuple[Module, TransformRecord]:
    """Rewrite one uniformly sampled matching site with a rule that matches there."""
    rules = rule_catalog() if rules is None else list(rules)
    targets = [i for i, f in enumerate(m.functions) if not f.body.is_opaque]
    cumulative = []
    total = 0
    for fi in targets:
        total += len(m.functions[fi].body.instructions)
        cumulative.append(total)
    if total == 0 or not rules:
        raise NotApplicable(Kind.PEEPHOLE, "no decodable function bodies")

    choice = None
    for _ in range(SITE_TRIES):
        r = rng.randrange(total)
        k = bisect.bisect_right(cumulative, r)
        fi = targets[k]
        site = r - (cumulative[k - 1] if k else 0)
        matching = _candidate_sites(m, fi, site, rules)
        if matching:
            choice = (fi, site, matching)
            break
    if choice is None:
        every = []
        for fi in targets:
            for site in range(len(m.functions[fi].body.instructions)):
                matching = _candidate_sites(m, fi, site, rules)
                if matching:
                    every.append((fi, site, matching))
        if not every:
            raise NotApplicable(Kind.PEEPHOLE, "no rule matches any site")
        choice = rng.choice(every)

    fi, site, matching = choice
    rule = rng.choice(matching)
    f = m.functions[fi]
    body = peephole_rewrite(f.body, rule, site, rng, m.types[f.type_index].params)
    functions = list(m.functions)
    functions[fi] = Function(f.type_index, body)
    return replace(m, functions=tuple(functions)), TransformRecord(
        Kind.PEEPHOLE,
        rule.description or rule.rule_id,
        function_index=m.num_imported_funcs + fi,
        instruction_offset=site,
        rule_id=rule.rule_id,
    )


def apply_kind(m: Module, kind: Kind, rng: random.Random, rules=None):
    """Apply one transformation of ``kind``; raises ``NotApplicable``."""
    kind = Kind(kind)
    if kind is Kind.PEEPHOLE:
        return peephole(m, rng, rules)
    if kind is Kind.REMOVE_FUNCTION:
        return remove_dead_function(m, rng)
    if kind in STRUCTURE_OPS:
        return STRUCTURE_OPS[kind](m, rng)
    return CODEMOTION_OPS[kind](m, rng)


@dataclass
class Variant:
    module: Module
    record: TransformRecord
    blob: bytes


@dataclass
class Diversifier:
    """Draws one transformation uniformly among the applicable kinds.

    Inapplicable kinds are discarded and the draw repeated, so each applicable
    kind is chosen with equal probability.
    """

    kinds: tuple[Kind, ...] = ALL_KINDS
    rules: tuple[RewriteRule, ...] = field(default_factory=lambda: tuple(rule_catalog()))

    def apply(self, m: Module, rng: random.Random) -> tuple[Module, TransformRecord]:
        before = _draws(rng)
        pending = list(self.kinds)
        while pending:
            kind = pending.pop(rng.randrange(len(pending)))
            try:
                out, record = apply_kind(m, kind, rng, self.rules)
            except NotApplicable:
                continue
            out = normalize(out)
            return out, replace(record, rng_draws=_draws(rng) - before)
        raise NoApplicableTransformation("no transformation kind applies to this module")

    def mutate(self, m: Module, rng: random.Random, size_limit: int | None = None) -> Variant:
        out, record = self.apply(m, rng)
        blob = encode_module(out)
        if size_limit is not None and len(blob) > size_limit:
            raise SizeBudgetExceeded(len(blob), size_limit, record)
        return Variant(out, record, blob)


def apply_random(m: Module, rng: random.Random, size_limit: int | None = None,
                 kinds=ALL_KINDS) -> tuple[Module, TransformRecord]:
    v = Diversifier(tuple(kinds)).mutate(m, rng, size_limit)
    return v.module, v.record
