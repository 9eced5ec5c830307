"""Semantics-preserving transformations over decoded modules."""

from divers.diversifier.codemotion import codemotion_ops, if_branch_swap, loop_unroll
from divers.diversifier.engine import ALL_KINDS, Diversifier, Variant, apply_kind, apply_random
from divers.diversifier.evaluator import eval_fragment
from divers.diversifier.kinds import (
    BEHAVIORAL,
    Kind,
    NoApplicableTransformation,
    NoDeadFunction,
    NotApplicable,
    PatternMismatch,
    SizeBudgetExceeded,
    TransformError,
    TransformRecord,
)
from divers.diversifier.rules import (
    RULES_BY_ID,
    RewriteRule,
    SoundnessReport,
    get_rule,
    peephole_rewrite,
    rule_catalog,
    verify_rule,
)
from divers.diversifier.structure import remove_dead_function, structure_ops

__all__ = [
    "codemotion_ops", "if_branch_swap", "loop_unroll",
    "ALL_KINDS", "Diversifier", "Variant", "apply_kind", "apply_random", "eval_fragment",
    "BEHAVIORAL", "Kind", "NoApplicableTransformation", "NoDeadFunction", "NotApplicable",
    "PatternMismatch", "SizeBudgetExceeded", "TransformError", "TransformRecord",
    "RULES_BY_ID", "RewriteRule", "SoundnessReport", "get_rule", "peephole_rewrite",
    "rule_catalog", "verify_rule", "remove_dead_function", "structure_ops",
]
