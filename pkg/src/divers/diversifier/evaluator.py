"""Small-step evaluator for the modeled instruction subset.

Values are held as unsigned integers of their type's width; arithmetic wraps
exactly as the binary-format semantics require.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

from divers.ir.model import Instruction
from divers.ir.opcodes import MODELED
from divers.ir.validate import block_signature

MASK = {"i32": (1 << 32) - 1, "i64": (1 << 64) - 1}
BITS = {"i32": 32, "i64": 64}


class EvalError(Exception):
    pass


class StackUnderflow(EvalError):
    pass


class LocalIndexOutOfRange(EvalError):
    pass


class UnmodeledInstruction(EvalError):
    pass


class FuelExhausted(EvalError):
    pass


def to_signed(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


def _binop(t: str, op: str, a: int, b: int) -> int:
    mask = MASK[t]
    bits = BITS[t]
    if op == "add":
        return (a + b) & mask
    if op == "sub":
        return (a - b) & mask
    if op == "mul":
        return (a * b) & mask
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    if op == "shl":
        return (a << (b % bits)) & mask
    if op == "shr_u":
        return a >> (b % bits)
    if op == "shr_s":
        return (to_signed(a, bits) >> (b % bits)) & mask
    if op == "eq":
        return int(a == b)
    if op == "ne":
        return int(a != b)
    if op == "lt_u":
        return int(a < b)
    if op == "gt_u":
        return int(a > b)
    raise UnmodeledInstruction(f"{t}.{op}")


def _match_blocks(instrs: Sequence[Instruction]) -> dict[int, tuple[int | None, int]]:
    """Map each block/loop/if position to (else position, end position)."""
    out: dict[int, tuple[int | None, int]] = {}
    stack: list[list] = []
    for pc, instr in enumerate(instrs):
        op = instr.op
        if op in ("block", "loop", "if"):
            stack.append([pc, None])
        elif op == "else":
            if stack:
                stack[-1][1] = pc
        elif op == "end" and stack:
            start, els = stack.pop()
            out[start] = (els, pc)
    return out


def eval_fragment(
    instrs: Sequence[Instruction],
    locals: Sequence[int] = (),
    *,
    local_types: Sequence[str] | None = None,
    call: Callable[[int, list], None] | None = None,
    types=(),
    fuel: int = 1_000_000,
) -> tuple[list[int], list[int]]:
    """Run ``instrs`` from an empty operand stack; return (stack, locals).

    ``call(func_index, stack)`` services ``call`` instructions by popping the
    arguments from and pushing results onto ``stack``.
    """
    loc = list(locals)
    if local_types is not None:
        loc = [v & MASK.get(t, -1) for v, t in zip(loc, local_types)]
    stack: list[int] = []
    labels: list[tuple[int, int, int]] = []  # (continuation pc, stack height, arity)
    blocks = _match_blocks(instrs)
    else_end = {els: end for els, end in blocks.values() if els is not None}
    n = len(instrs)
    pc = 0

    def pop() -> int:
        if not stack:
            raise StackUnderflow(f"at {pc}: {instrs[pc]}")
        return stack.pop()

    def branch(depth: int) -> int | None:
        if depth >= len(labels):
            return None
        cont, height, arity = labels[-1 - depth]
        keep = stack[len(stack) - arity :] if arity else []
        if len(stack) - arity < height:
            raise StackUnderflow(f"branch at {pc}")
        del stack[height:]
        stack.extend(keep)
        del labels[len(labels) - 1 - depth :]
        return cont

    while pc < n:
        fuel -= 1
        if fuel < 0:
            raise FuelExhausted("evaluation did not terminate within the fuel budget")
        instr = instrs[pc]
        op = instr.op
        if op not in MODELED:
            raise UnmodeledInstruction(op)
        t, _, name = op.partition(".")
        if t in MASK and name:
            if name == "const":
                stack.append(instr.imm[0] & MASK[t])
            elif name == "eqz":
                stack.append(int(pop() == 0))
            else:
                b = pop()
                a = pop()
                stack.append(_binop(t, name, a, b))
            pc += 1
            continue
        if op == "local.get" or op == "local.set" or op == "local.tee":
            idx = instr.imm[0]
            if idx >= len(loc):
                raise LocalIndexOutOfRange(f"local {idx} at {pc}")
            if op == "local.get":
                stack.append(loc[idx])
            elif op == "local.set":
                loc[idx] = pop()
            else:
                loc[idx] = pop()
                stack.append(loc[idx])
            pc += 1
        elif op == "nop":
            pc += 1
        elif op == "drop":
            pop()
            pc += 1
        elif op in ("block", "loop", "if"):
            sig = block_signature(instr.imm[0], types)
            els, end = blocks.get(pc, (None, None))
            if end is None:
                raise EvalError(f"unterminated {op} at {pc}")
            if op == "if":
                cond = pop()
            height = len(stack) - len(sig.params)
            if height < 0:
                raise StackUnderflow(f"block params at {pc}")
            if op == "loop":
                labels.append((pc, height, len(sig.params)))
                pc += 1
            else:
                labels.append((end + 1, height, len(sig.results)))
                if op == "if" and not cond:
                    pc = els + 1 if els is not None else end
                else:
                    pc += 1
        elif op == "else":
            # Reached by falling out of the then-arm: continue at the matching end.
            pc = else_end[pc]
        elif op == "end":
            if labels:
                labels.pop()
                pc += 1
            else:
                break
        elif op == "br" or op == "br_if":
            if op == "br_if" and not pop():
                pc += 1
                continue
            cont = branch(instr.imm[0])
            if cont is None:
                break
            pc = cont
        elif op == "call":
            if call is None:
                raise UnmodeledInstruction("call requires a call handler")
            call(instr.imm[0], stack)
            pc += 1
    return stack, loc
