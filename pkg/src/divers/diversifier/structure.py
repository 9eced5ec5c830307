"""Module-structure transformations and index renumbering."""

from __future__ import annotations

import random
import string
from collections.abc import Callable
from dataclasses import replace

from divers.diversifier.evaluator import BITS
from divers.diversifier.kinds import Kind, NoDeadFunction, NotApplicable, TransformRecord
from divers.diversifier.rules import INT_TYPES, signed_const
from divers.ir.codec import SECTION_RANK, _encode_sections
from divers.ir.model import (
    KIND_FUNC,
    KIND_TAG,
    CustomSection,
    Export,
    FuncType,
    Function,
    FunctionBody,
    Global,
    Import,
    Instruction,
    Module,
    ins,
)
from divers.ir.opcodes import BINARY_INT_OPS, COMPARE_INT_OPS

PAD_NAMESPACE = "divers_pad"
MAX_CUSTOM_PAYLOAD = 64
_VALTYPES = ("i32", "i64", "f32", "f64")


# -- renumbering ---------------------------------------------------------------


def _remap_instrs(instrs, fn_map=None, type_map=None):
    """Return (new tuple, changed) with function/type references rewritten."""
    out = None
    for pos, i in enumerate(instrs):
        new = None
        op = i.op
        if fn_map is not None and op in ("call", "ref.func"):
            target = fn_map(i.imm[0])
            if target != i.imm[0]:
                new = Instruction(op, (target,))
        elif type_map is not None:
            if op == "call_indirect":
                t = type_map(i.imm[0])
                if t != i.imm[0]:
                    new = Instruction(op, (t, i.imm[1]))
            elif op in ("block", "loop", "if") and isinstance(i.imm[0], int):
                t = type_map(i.imm[0])
                if t != i.imm[0]:
                    new = Instruction(op, (t,))
        if new is not None:
            if out is None:
                out = list(instrs[:pos])
            out.append(new)
        elif out is not None:
            out.append(i)
    if out is None:
        return instrs, False
    return tuple(out), True


def _remap_body(body: FunctionBody, fn_map=None, type_map=None) -> FunctionBody:
    instrs, changed = _remap_instrs(body.instructions, fn_map, type_map)
    return body.with_instructions(instrs) if changed else body


def renumberable(m: Module) -> bool:
    """Function indices can only be rewritten when every reference is decoded."""
    return m.elements is not None and not any(f.body.is_opaque for f in m.functions)


def remap_functions(m: Module, fn_map: Callable[[int], int]) -> Module:
    functions = []
    for f in m.functions:
        body = _remap_body(f.body, fn_map=fn_map)
        functions.append(f if body is f.body else Function(f.type_index, body))
    functions = tuple(functions)
    exports = tuple(
        Export(e.name, e.kind, fn_map(e.index)) if e.kind == KIND_FUNC else e for e in m.exports
    )
    elements = tuple(
        replace(s, offset=_remap_instrs(s.offset, fn_map)[0],
                functions=tuple(fn_map(f) for f in s.functions))
        for s in m.elements
    )
    globals_ = tuple(replace(g, init=_remap_instrs(g.init, fn_map)[0]) for g in m.globals)
    start = None if m.start is None else fn_map(m.start)
    return replace(m, functions=functions, exports=exports, elements=elements,
                   globals=globals_, start=start)


def remap_types(m: Module, type_map: Callable[[int], int]) -> Module:
    functions = []
    for f in m.functions:
        body = _remap_body(f.body, type_map=type_map)
        t = type_map(f.type_index)
        functions.append(f if (body is f.body and t == f.type_index) else Function(t, body))
    imports = tuple(
        replace(i, desc=type_map(i.desc)) if i.kind == KIND_FUNC else i for i in m.imports
    )
    return replace(m, functions=tuple(functions), imports=imports)


# -- reachability --------------------------------------------------------------


def _refs(instrs):
    return [i.imm[0] for i in instrs if i.op in ("call", "ref.func")]


def function_roots(m: Module) -> set[int]:
    roots = set(range(m.num_imported_funcs))
    roots.update(e.index for e in m.exports if e.kind == KIND_FUNC)
    if m.start is not None:
        roots.add(m.start)
    for seg in m.elements or ():
        roots.update(seg.functions)
        roots.update(_refs(seg.offset))
    for g in m.globals:
        roots.update(_refs(g.init))
    return roots


def reachable_functions(m: Module) -> set[int]:
    n_imp = m.num_imported_funcs
    seen = set(function_roots(m))
    work = sorted(seen)
    while work:
        f = work.pop()
        if f < n_imp:
            continue
        body = m.functions[f - n_imp].body
        if body.is_opaque:
            continue
        for target in _refs(body.instructions):
            if target not in seen:
                seen.add(target)
                work.append(target)
    return seen


def dead_functions(m: Module) -> list[int]:
    """Defined functions (combined index space) unreachable from the root set."""
    if not renumberable(m):
        return []
    live = reachable_functions(m)
    n_imp = m.num_imported_funcs
    return [n_imp + i for i in range(len(m.functions)) if n_imp + i not in live]


def remove_dead_function(m: Module, rng: random.Random) -> tuple[Module, TransformRecord]:
    dead = dead_functions(m)
    if not dead:
        raise NoDeadFunction("every function is reachable" if renumberable(m)
                             else "module has opaque references")
    victim = rng.choice(dead)
    n_imp = m.num_imported_funcs
    functions = m.functions[: victim - n_imp] + m.functions[victim - n_imp + 1 :]
    out = remap_functions(replace(m, functions=functions),
                          lambda f: f - 1 if f > victim else f)
    return out, TransformRecord(Kind.REMOVE_FUNCTION, f"removed unreachable function {victim}",
                                function_index=victim)


# -- random generators ---------------------------------------------------------


def random_name(rng: random.Random, lo: int = 4, hi: int = 12) -> str:
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(lo, hi)))


def fresh_export_name(m: Module, rng: random.Random) -> str:
    taken = {e.name for e in m.exports}
    while True:
        name = "x" + "%08x" % rng.getrandbits(32)
        if name not in taken:
            return name


def random_signature(rng: random.Random, valtypes=_VALTYPES) -> FuncType:
    params = tuple(rng.choice(valtypes) for _ in range(rng.randint(0, 3)))
    results = tuple(rng.choice(valtypes) for _ in range(rng.randint(0, 1)))
    return FuncType(params, results)


def _random_expr(rng, t: str, local_types, depth: int) -> list[Instruction]:
    choices = [i for i, lt in enumerate(local_types) if lt == t]
    if depth <= 0 or rng.random() < 0.35:
        if choices and rng.random() < 0.6:
            return [ins("local.get", rng.choice(choices))]
        return [signed_const(t, rng.getrandbits(BITS[t]))]
    if t == "i32" and rng.random() < 0.2:
        ct = rng.choice(INT_TYPES)
        return [*_random_expr(rng, ct, local_types, depth - 1),
                *_random_expr(rng, ct, local_types, depth - 1),
                ins(f"{ct}.{rng.choice(COMPARE_INT_OPS)}")]
    return [*_random_expr(rng, t, local_types, depth - 1),
            *_random_expr(rng, t, local_types, depth - 1),
            ins(f"{t}.{rng.choice(BINARY_INT_OPS)}")]


def random_body(rng: random.Random, sig: FuncType) -> FunctionBody:
    """Small, type-correct body over the modeled subset for an integer-only signature."""
    extra = tuple(rng.choice(INT_TYPES) for _ in range(rng.randint(0, 2)))
    local_types = sig.params + extra
    instrs: list[Instruction] = []
    for _ in range(rng.randint(0, 2) if extra else 0):
        idx = len(sig.params) + rng.randrange(len(extra))
        instrs += _random_expr(rng, local_types[idx], local_types, 2)
        instrs.append(ins("local.set", idx))
    for t in sig.results:
        instrs += _random_expr(rng, t, local_types, 3)
    instrs.append(ins("end"))
    locals_ = tuple((1, t) for t in extra)
    return FunctionBody(locals_, tuple(instrs))


def _type_index_for(m: Module, sig: FuncType) -> tuple[Module, int]:
    try:
        return m, m.types.index(sig)
    except ValueError:
        return replace(m, types=m.types + (sig,)), len(m.types)


# -- structure operations -------------------------------------------------------


def add_type_def(m: Module, rng: random.Random):
    sig = random_signature(rng)
    out = replace(m, types=m.types + (sig,))
    return out, TransformRecord(Kind.ADD_TYPE, f"added type {len(m.types)} {sig}")


def _present_ranks(m: Module) -> list[int]:
    return [0] + sorted(SECTION_RANK[s] for s in _encode_sections(m))


def add_custom_section(m: Module, rng: random.Random):
    name = random_name(rng)
    payload = rng.randbytes(rng.randint(0, MAX_CUSTOM_PAYLOAD))
    anchor = rng.choice(_present_ranks(m))
    sec = CustomSection(name, payload, anchor)
    out = replace(m, customs=m.customs + (sec,))
    return out, TransformRecord(Kind.ADD_CUSTOM, f"added custom section {name!r} ({len(payload)} bytes)")


def modify_custom_section(m: Module, rng: random.Random):
    if not m.customs:
        raise NotApplicable(Kind.MODIFY_CUSTOM, "no custom sections")
    idx = rng.randrange(len(m.customs))
    old = m.customs[idx]
    payload = rng.randbytes(rng.randint(0, MAX_CUSTOM_PAYLOAD))
    customs = list(m.customs)
    customs[idx] = CustomSection(old.name, payload, old.anchor)
    out = replace(m, customs=tuple(customs))
    return out, TransformRecord(
        Kind.MODIFY_CUSTOM,
        f"replaced payload of custom section {old.name!r} ({len(old.payload)} -> {len(payload)} bytes)",
    )


def _int_signatures(m: Module) -> list[FuncType]:
    return [t for t in m.types
            if len(t.results) <= 1 and all(v in INT_TYPES for v in t.params + t.results)]


def add_function(m: Module, rng: random.Random):
    existing = _int_signatures(m)
    if existing and rng.random() < 0.5:
        sig = rng.choice(existing)
    else:
        sig = random_signature(rng, INT_TYPES)
    out, tidx = _type_index_for(m, sig)
    body = random_body(rng, sig)
    out = replace(out, functions=out.functions + (Function(tidx, body),))
    new_index = out.num_funcs - 1
    return out, TransformRecord(
        Kind.ADD_FUNCTION,
        f"added unexported function {new_index} {sig} with {len(body.instructions)} instructions",
        function_index=new_index,
    )


def add_export(m: Module, rng: random.Random):
    if m.num_funcs == 0:
        raise NotApplicable(Kind.ADD_EXPORT, "no functions")
    target = rng.randrange(m.num_funcs)
    name = fresh_export_name(m, rng)
    out = replace(m, exports=m.exports + (Export(name, KIND_FUNC, target),))
    return out, TransformRecord(Kind.ADD_EXPORT, f"exported function {target} as {name!r}",
                                function_index=target)


def add_import(m: Module, rng: random.Random):
    if not renumberable(m):
        raise NotApplicable(Kind.ADD_IMPORT, "module has opaque function references")
    if m.types and rng.random() < 0.7:
        out, tidx = m, rng.randrange(len(m.types))
    else:
        out, tidx = _type_index_for(m, random_signature(rng))
    n_imp = m.num_imported_funcs
    name = random_name(rng)
    out = replace(out, imports=out.imports + (Import(PAD_NAMESPACE, name, KIND_FUNC, tidx),))
    out = remap_functions(out, lambda f: f + 1 if f >= n_imp else f)
    return out, TransformRecord(
        Kind.ADD_IMPORT, f"imported {PAD_NAMESPACE}.{name} as function {n_imp} (type {tidx})"
    )


def add_global(m: Module, rng: random.Random):
    t = rng.choice(INT_TYPES)
    mutable = rng.random() < 0.5
    g = Global(t, mutable, (signed_const(t, rng.getrandbits(BITS[t])), ins("end")))
    out = replace(m, globals=m.globals + (g,))
    return out, TransformRecord(
        Kind.ADD_GLOBAL, f"added {'mutable ' if mutable else ''}{t} global {m.num_globals}"
    )


def referenced_types(m: Module) -> set[int]:
    used = {f.type_index for f in m.functions}
    used.update(i.desc for i in m.imports if i.kind == KIND_FUNC)
    for f in m.functions:
        for i in f.body.instructions or ():
            if i.op == "call_indirect":
                used.add(i.imm[0])
            elif i.op in ("block", "loop", "if") and isinstance(i.imm[0], int):
                used.add(i.imm[0])
    return used


def unused_types(m: Module) -> list[int]:
    if any(f.body.is_opaque for f in m.functions):
        return []
    if any(i.kind == KIND_TAG for i in m.imports) or any(s.id == 13 for s in m.raw_sections):
        return []
    used = referenced_types(m)
    return [t for t in range(len(m.types)) if t not in used]


def remove_unused_type(m: Module, rng: random.Random):
    candidates = unused_types(m)
    if not candidates:
        raise NotApplicable(Kind.REMOVE_TYPE, "every type is referenced")
    victim = rng.choice(candidates)
    out = replace(m, types=m.types[:victim] + m.types[victim + 1 :])
    out = remap_types(out, lambda t: t - 1 if t > victim else t)
    return out, TransformRecord(Kind.REMOVE_TYPE, f"removed unused type {victim} {m.types[victim]}")


STRUCTURE_OPS = {
    Kind.ADD_TYPE: add_type_def,
    Kind.ADD_CUSTOM: add_custom_section,
    Kind.MODIFY_CUSTOM: modify_custom_section,
    Kind.ADD_FUNCTION: add_function,
    Kind.ADD_EXPORT: add_export,
    Kind.ADD_IMPORT: add_import,
    Kind.ADD_GLOBAL: add_global,
    Kind.REMOVE_TYPE: remove_unused_type,
}


def structure_ops(m: Module, kind: Kind, rng: random.Random):
    try:
        op = STRUCTURE_OPS[Kind(kind)]
    except KeyError:
        raise NotApplicable(Kind(kind), "not a structure kind") from None
    return op(m, rng)
