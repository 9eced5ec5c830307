"""Control-flow transformations: loop unrolling and if-arm swapping."""

from __future__ import annotations

import random
from dataclasses import replace

from divers.diversifier.evaluator import _match_blocks
from divers.diversifier.kinds import Kind, NotApplicable, TransformRecord
from divers.ir.model import Function, Instruction, Module, ins
from divers.ir.validate import block_signature

_OPEN = ("block", "loop", "if")


def shift_labels(instrs, by: int = 1) -> list[Instruction]:
    """Add ``by`` to every branch target that escapes the fragment ``instrs``."""
    out = []
    depth = 0
    for i in instrs:
        op = i.op
        if op in ("br", "br_if") and i.imm[0] > depth:
            i = Instruction(op, (i.imm[0] + by,))
        elif op == "br_table":
            labels, default = i.imm
            fix = lambda lab: lab + by if lab > depth else lab  # noqa: E731
            new = (tuple(fix(x) for x in labels), fix(default))
            if new != i.imm:
                i = Instruction(op, new)
        if op in _OPEN:
            depth += 1
        elif op == "end":
            depth -= 1
        out.append(i)
    return out


def _sites(m: Module, pred):
    """All (defined index, offset, else, end) of structured instructions accepted by ``pred``."""
    found = []
    for fi, f in enumerate(m.functions):
        body = f.body
        if body.is_opaque:
            continue
        instrs = body.instructions
        for start, (els, end) in sorted(_match_blocks(instrs).items()):
            if pred(m, instrs, start, els, end):
                found.append((fi, start, els, end))
    return found


def _unrollable(m: Module, instrs, start, els, end) -> bool:
    if instrs[start].op != "loop":
        return False
    bt = instrs[start].imm[0]
    if bt is None or isinstance(bt, str):
        return True
    return bt < len(m.types) and not m.types[bt].params


def _replace_body(m: Module, fi: int, instrs) -> Module:
    f = m.functions[fi]
    functions = list(m.functions)
    functions[fi] = Function(f.type_index, f.body.with_instructions(tuple(instrs)))
    return replace(m, functions=tuple(functions))


def loop_unroll(m: Module, rng: random.Random) -> tuple[Module, TransformRecord]:
    """Peel one iteration off a loop.

    ``loop bt BODY end`` becomes::

        block bt
          block
            BODY'      ;; first iteration; a continue exits the inner block
            br 1       ;; falling through leaves the loop with its results
          end
          loop bt BODY' end
        end

    where ``BODY'`` has every branch that escapes the loop shifted by one.
    """
    sites = _sites(m, _unrollable)
    if not sites:
        raise NotApplicable(Kind.LOOP_UNROLL, "no loop with a parameterless block type")
    fi, start, _, end = rng.choice(sites)
    instrs = m.functions[fi].body.instructions
    bt = instrs[start].imm[0]
    body = shift_labels(instrs[start + 1 : end])
    unrolled = [
        ins("block", bt),
        ins("block", None),
        *body,
        ins("br", 1),
        ins("end"),
        ins("loop", bt),
        *body,
        ins("end"),
        ins("end"),
    ]
    new = [*instrs[:start], *unrolled, *instrs[end + 1 :]]
    index = m.num_imported_funcs + fi
    return _replace_body(m, fi, new), TransformRecord(
        Kind.LOOP_UNROLL,
        f"peeled one iteration of the loop at offset {start} ({end - start - 1} instructions)",
        function_index=index,
        instruction_offset=start,
    )


def _swappable(m: Module, instrs, start, els, end) -> bool:
    if instrs[start].op != "if":
        return False
    if els is not None:
        return True
    bt = instrs[start].imm[0]
    try:
        sig = block_signature(bt, m.types)
    except IndexError:
        return False
    return sig.params == sig.results


def if_branch_swap(m: Module, rng: random.Random) -> tuple[Module, TransformRecord]:
    """Negate an ``if`` condition with ``i32.eqz`` and exchange its arms."""
    sites = _sites(m, _swappable)
    if not sites:
        raise NotApplicable(Kind.IF_SWAP, "no if with a swappable pair of arms")
    fi, start, els, end = rng.choice(sites)
    instrs = m.functions[fi].body.instructions
    if els is None:
        then_arm, else_arm = list(instrs[start + 1 : end]), []
    else:
        then_arm, else_arm = list(instrs[start + 1 : els]), list(instrs[els + 1 : end])
    swapped = [ins("i32.eqz"), instrs[start], *else_arm]
    if then_arm:
        swapped += [ins("else"), *then_arm]
    swapped.append(ins("end"))
    new = [*instrs[:start], *swapped, *instrs[end + 1 :]]
    return _replace_body(m, fi, new), TransformRecord(
        Kind.IF_SWAP,
        f"negated the condition of the if at offset {start} and swapped its arms",
        function_index=m.num_imported_funcs + fi,
        instruction_offset=start,
    )


CODEMOTION_OPS = {Kind.LOOP_UNROLL: loop_unroll, Kind.IF_SWAP: if_branch_swap}


def codemotion_ops(m: Module, kind: Kind, rng: random.Random):
    try:
        op = CODEMOTION_OPS[Kind(kind)]
    except KeyError:
        raise NotApplicable(Kind(kind), "not a code-motion kind") from None
    return op(m, rng)
