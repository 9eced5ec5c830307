"""Module validation: index bounds, well-nesting and operand-stack typing."""

from __future__ import annotations

from dataclasses import dataclass

from divers.ir.codec import encode_module
from divers.ir.model import (
    KIND_FUNC,
    KIND_GLOBAL,
    KIND_NAMES,
    FuncType,
    FunctionBody,
    Instruction,
    Module,
)
from divers.ir.opcodes import BINARY_INT_OPS, COMPARE_INT_OPS


@dataclass(frozen=True)
class ValidityReport:
    ok: bool
    rule: str | None = None
    detail: str | None = None

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "valid" if self.ok else f"invalid [{self.rule}]: {self.detail}"


class _Invalid(Exception):
    def __init__(self, rule: str, detail: str):
        super().__init__(detail)
        self.rule = rule
        self.detail = detail


class _Untypeable(Exception):
    pass


_TYPED_NUMERIC: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {}
for _t in ("i32", "i64"):
    for _op in BINARY_INT_OPS:
        _TYPED_NUMERIC[f"{_t}.{_op}"] = ((_t, _t), (_t,))
    for _op in COMPARE_INT_OPS:
        _TYPED_NUMERIC[f"{_t}.{_op}"] = ((_t, _t), ("i32",))
    _TYPED_NUMERIC[f"{_t}.eqz"] = ((_t,), ("i32",))

_CONST_TYPE = {"i32.const": "i32", "i64.const": "i64", "f32.const": "f32", "f64.const": "f64"}


def block_signature(bt, types) -> FuncType:
    if bt is None:
        return FuncType()
    if isinstance(bt, str):
        return FuncType((), (bt,))
    return types[bt]


class _Frame:
    __slots__ = ("op", "params", "results", "height", "unreachable")

    def __init__(self, op, params, results, height):
        self.op = op
        self.params = params
        self.results = results
        self.height = height
        self.unreachable = False

    @property
    def label_types(self):
        return self.params if self.op == "loop" else self.results


class TypeChecker:
    """Operand-stack type checker for the modeled instruction subset.

    ``module`` supplies call/global signatures; it may be None for fragments
    that use neither.
    """

    def __init__(self, local_types, module: Module | None = None, types=()):
        self.local_types = tuple(local_types)
        self.module = module
        self.types = module.types if module is not None else tuple(types)
        self.vals: list = []
        self.ctrls: list[_Frame] = []

    def _push(self, t):
        self.vals.append(t)

    def _pop(self, expect=None):
        frame = self.ctrls[-1]
        if len(self.vals) == frame.height:
            if frame.unreachable:
                return expect
            raise _Invalid("stack-underflow", "operand stack underflow")
        actual = self.vals.pop()
        if expect is not None and actual is not None and actual != expect:
            raise _Invalid("type-mismatch", f"expected {expect}, got {actual}")
        return actual if actual is not None else expect

    def _pop_many(self, types):
        for t in reversed(types):
            self._pop(t)

    def _push_frame(self, op, params, results):
        self.ctrls.append(_Frame(op, tuple(params), tuple(results), len(self.vals)))
        for t in params:
            self._push(t)

    def _pop_frame(self) -> _Frame:
        if not self.ctrls:
            raise _Invalid("nesting", "end without matching block")
        frame = self.ctrls[-1]
        self._pop_many(frame.results)
        if len(self.vals) != frame.height:
            raise _Invalid("type-mismatch", "values left on stack at block end")
        self.ctrls.pop()
        return frame

    def _unreachable(self):
        frame = self.ctrls[-1]
        del self.vals[frame.height :]
        frame.unreachable = True

    def _label(self, depth: int) -> _Frame:
        if depth >= len(self.ctrls):
            raise _Invalid("label-depth", f"branch depth {depth} out of range")
        return self.ctrls[-1 - depth]

    def _local(self, idx: int) -> str:
        if idx >= len(self.local_types):
            raise _Invalid("local-index", f"local {idx} out of range")
        return self.local_types[idx]

    def run_function(self, sig: FuncType, instrs) -> None:
        self.vals = []
        self.ctrls = []
        self._push_frame("func", (), sig.results)
        for pos, instr in enumerate(instrs):
            if not self.ctrls:
                raise _Invalid("nesting", f"instruction after final end at {pos}")
            self.step(instr)
        if self.ctrls:
            raise _Invalid("nesting", "function body not terminated by end")

    def run_fragment(self, instrs, entry=()) -> list:
        """Type a fragment; return the resulting stack types."""
        self.vals = []
        self.ctrls = []
        self._push_frame("frag", tuple(entry), ())
        for instr in instrs:
            self.step(instr)
        if len(self.ctrls) != 1:
            raise _Invalid("nesting", "fragment is not well-nested")
        return list(self.vals)

    def step(self, instr: Instruction) -> None:
        op = instr.op
        sig = _TYPED_NUMERIC.get(op)
        if sig is not None:
            self._pop_many(sig[0])
            for t in sig[1]:
                self._push(t)
            return
        if op in _CONST_TYPE:
            self._push(_CONST_TYPE[op])
        elif op == "nop":
            pass
        elif op == "drop":
            self._pop()
        elif op == "local.get":
            self._push(self._local(instr.imm[0]))
        elif op == "local.set":
            self._pop(self._local(instr.imm[0]))
        elif op == "local.tee":
            t = self._local(instr.imm[0])
            self._pop(t)
            self._push(t)
        elif op in ("global.get", "global.set"):
            if self.module is None:
                raise _Untypeable(op)
            idx = instr.imm[0]
            if idx >= self.module.num_globals:
                raise _Invalid("global-index", f"global {idx} out of range")
            t, mutable = self.module.global_type(idx)
            if op == "global.get":
                self._push(t)
            else:
                if not mutable:
                    raise _Invalid("global-mutability", f"global {idx} is immutable")
                self._pop(t)
        elif op == "call":
            if self.module is None:
                raise _Untypeable(op)
            idx = instr.imm[0]
            if idx >= self.module.num_funcs:
                raise _Invalid("call-index", f"call target {idx} out of range")
            ft = self.module.func_type(idx)
            self._pop_many(ft.params)
            for t in ft.results:
                self._push(t)
        elif op in ("block", "loop", "if"):
            bt = instr.imm[0]
            if isinstance(bt, int) and bt >= len(self.types):
                raise _Invalid("type-index", f"block type {bt} out of range")
            ft = block_signature(bt, self.types)
            if op == "if":
                self._pop("i32")
            self._pop_many(ft.params)
            self._push_frame(op, ft.params, ft.results)
        elif op == "else":
            if self.ctrls[-1].op != "if":
                raise _Invalid("nesting", "else outside if")
            frame = self._pop_frame()
            self._push_frame("else", frame.params, frame.results)
        elif op == "end":
            if self.ctrls[-1].op == "frag":
                raise _Invalid("nesting", "unbalanced end in fragment")
            frame = self._pop_frame()
            if frame.op == "if" and frame.params != frame.results:
                raise _Invalid("type-mismatch", "if without else must not change the stack")
            for t in frame.results:
                self._push(t)
        elif op == "br":
            self._pop_many(self._label(instr.imm[0]).label_types)
            self._unreachable()
        elif op == "br_if":
            self._pop("i32")
            lt = self._label(instr.imm[0]).label_types
            self._pop_many(lt)
            for t in lt:
                self._push(t)
        elif op == "unreachable":
            self._unreachable()
        elif op == "return":
            self._pop_many(self.ctrls[0].results)
            self._unreachable()
        else:
            raise _Untypeable(op)


def typecheck_fragment(instrs, local_types, entry=(), module: Module | None = None) -> list:
    """Stack types after running ``instrs`` from ``entry``; raises ValueError if ill-typed."""
    try:
        return TypeChecker(local_types, module).run_fragment(instrs, entry)
    except _Invalid as exc:
        raise ValueError(f"{exc.rule}: {exc.detail}") from None
    except _Untypeable as exc:
        raise ValueError(f"untypeable instruction {exc}") from None


def _check_structure(m: Module, body: FunctionBody, n_locals: int, where: str) -> None:
    """Nesting, label and index checks that hold for any decoded body."""
    depth = 0
    kinds: list[str] = []
    instrs = body.instructions
    for pos, instr in enumerate(instrs):
        if depth < 0:
            raise _Invalid("nesting", f"{where}: instruction after final end")
        op = instr.op
        if op in ("block", "loop", "if"):
            bt = instr.imm[0]
            if isinstance(bt, int) and bt >= len(m.types):
                raise _Invalid("type-index", f"{where}: block type {bt} out of range")
            depth += 1
            kinds.append(op)
        elif op == "else":
            if not kinds or kinds[-1] != "if":
                raise _Invalid("nesting", f"{where}: else outside if")
            kinds[-1] = "else"
        elif op == "end":
            depth -= 1
            if kinds:
                kinds.pop()
        elif op in ("br", "br_if"):
            if instr.imm[0] > depth:
                raise _Invalid("label-depth", f"{where}: branch depth {instr.imm[0]} at {pos}")
        elif op == "br_table":
            labels, default = instr.imm
            if max((*labels, default)) > depth:
                raise _Invalid("label-depth", f"{where}: br_table depth out of range at {pos}")
        elif op in ("local.get", "local.set", "local.tee"):
            if instr.imm[0] >= n_locals:
                raise _Invalid("local-index", f"{where}: local {instr.imm[0]} out of range")
        elif op in ("call", "ref.func"):
            if instr.imm[0] >= m.num_funcs:
                raise _Invalid("call-index", f"{where}: function {instr.imm[0]} out of range")
        elif op == "call_indirect":
            if instr.imm[0] >= len(m.types):
                raise _Invalid("type-index", f"{where}: call_indirect type out of range")
        elif op in ("global.get", "global.set"):
            if instr.imm[0] >= m.num_globals:
                raise _Invalid("global-index", f"{where}: global {instr.imm[0]} out of range")
    if depth != -1:
        raise _Invalid("nesting", f"{where}: body is not well-nested")


def _check_const_expr(m: Module, expr, expect: str | None, where: str) -> None:
    if not expr or expr[-1].op != "end":
        raise _Invalid("const-expr", f"{where}: missing end")
    if len(expr) == 2 and expect is not None:
        head = expr[0]
        t = _CONST_TYPE.get(head.op)
        if head.op == "global.get":
            if head.imm[0] >= len(m.imported(KIND_GLOBAL)):
                raise _Invalid("const-expr", f"{where}: global.get of non-imported global")
            t = m.global_type(head.imm[0])[0]
        if t is not None and t != expect:
            raise _Invalid("type-mismatch", f"{where}: initializer has type {t}, expected {expect}")


def _validate(m: Module) -> None:
    n_types = len(m.types)
    for i, imp in enumerate(m.imports):
        if imp.kind == KIND_FUNC and imp.desc >= n_types:
            raise _Invalid("type-index", f"import {i} references missing type {imp.desc}")
    for i, fn in enumerate(m.functions):
        if fn.type_index >= n_types:
            raise _Invalid("type-index", f"function {i} references missing type {fn.type_index}")
    for i, g in enumerate(m.globals):
        _check_const_expr(m, g.init, g.valtype, f"global {i}")
    names = set()
    for e in m.exports:
        if e.name in names:
            raise _Invalid("export-name", f"duplicate export name {e.name!r}")
        names.add(e.name)
        if e.kind not in KIND_NAMES or e.index >= m.count_items(e.kind):
            raise _Invalid(
                "export-index",
                f"dangling export {e.name!r} -> {KIND_NAMES.get(e.kind, e.kind)} {e.index}",
            )
    if m.start is not None:
        if m.start >= m.num_funcs:
            raise _Invalid("start-index", f"start function {m.start} out of range")
        if m.func_type(m.start) != FuncType():
            raise _Invalid("type-mismatch", "start function must have type () -> ()")
    for i, seg in enumerate(m.elements or ()):
        _check_const_expr(m, seg.offset, "i32", f"element {i}")
        for f in seg.functions:
            if f >= m.num_funcs:
                raise _Invalid("element-index", f"element {i} references function {f}")
    for i, d in enumerate(m.data):
        if d.flags != 1:
            _check_const_expr(m, d.offset, "i32", f"data {i}")
    for i, fn in enumerate(m.functions):
        body = fn.body
        if body.is_opaque:
            continue
        local_types = m.local_types(i)
        where = f"function {m.num_imported_funcs + i}"
        _check_structure(m, body, len(local_types), where)
        try:
            TypeChecker(local_types, m).run_function(m.types[fn.type_index], body.instructions)
        except _Untypeable:
            pass
        except _Invalid as exc:
            raise _Invalid(exc.rule, f"{where}: {exc.detail}") from None


def validate_module(m: Module) -> ValidityReport:
    try:
        _validate(m)
    except _Invalid as exc:
        return ValidityReport(False, exc.rule, exc.detail)
    return ValidityReport(True)


def module_stats(m: Module) -> tuple[int, int, int]:
    """(size in bytes, instruction count, function count) over defined functions."""
    size = len(encode_module(m))
    n_instr = sum(len(f.body.instructions) for f in m.functions if not f.body.is_opaque)
    return size, n_instr, len(m.functions)
