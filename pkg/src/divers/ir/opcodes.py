"""Opcode table for the core instruction space (MVP plus common post-MVP extensions).

Immediate kinds:
    none, block, label, br_table, func, call_indirect, local, global, table,
    memarg, zero, i32, i64, f32, f64, select_t, reftype, u32x1, u32x2
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class OpInfo:
    name: str
    code: int
    imm: str = "none"
    prefix: int | None = None


_TABLE: list[OpInfo] = [
    OpInfo("unreachable", 0x00),
    OpInfo("nop", 0x01),
    OpInfo("block", 0x02, "block"),
    OpInfo("loop", 0x03, "block"),
    OpInfo("if", 0x04, "block"),
    OpInfo("else", 0x05),
    OpInfo("end", 0x0B),
    OpInfo("br", 0x0C, "label"),
    OpInfo("br_if", 0x0D, "label"),
    OpInfo("br_table", 0x0E, "br_table"),
    OpInfo("return", 0x0F),
    OpInfo("call", 0x10, "func"),
    OpInfo("call_indirect", 0x11, "call_indirect"),
    OpInfo("drop", 0x1A),
    OpInfo("select", 0x1B),
    OpInfo("select_t", 0x1C, "select_t"),
    OpInfo("local.get", 0x20, "local"),
    OpInfo("local.set", 0x21, "local"),
    OpInfo("local.tee", 0x22, "local"),
    OpInfo("global.get", 0x23, "global"),
    OpInfo("global.set", 0x24, "global"),
    OpInfo("table.get", 0x25, "table"),
    OpInfo("table.set", 0x26, "table"),
    OpInfo("memory.size", 0x3F, "zero"),
    OpInfo("memory.grow", 0x40, "zero"),
    OpInfo("i32.const", 0x41, "i32"),
    OpInfo("i64.const", 0x42, "i64"),
    OpInfo("f32.const", 0x43, "f32"),
    OpInfo("f64.const", 0x44, "f64"),
    OpInfo("ref.null", 0xD0, "reftype"),
    OpInfo("ref.is_null", 0xD1),
    OpInfo("ref.func", 0xD2, "func"),
]

_MEMOPS = (
    "i32.load i64.load f32.load f64.load i32.load8_s i32.load8_u i32.load16_s "
    "i32.load16_u i64.load8_s i64.load8_u i64.load16_s i64.load16_u i64.load32_s "
    "i64.load32_u i32.store i64.store f32.store f64.store i32.store8 i32.store16 "
    "i64.store8 i64.store16 i64.store32"
).split()
for _i, _n in enumerate(_MEMOPS):
    _TABLE.append(OpInfo(_n, 0x28 + _i, "memarg"))

_NUMERIC = (
    "i32.eqz i32.eq i32.ne i32.lt_s i32.lt_u i32.gt_s i32.gt_u i32.le_s i32.le_u i32.ge_s i32.ge_u "
    "i64.eqz i64.eq i64.ne i64.lt_s i64.lt_u i64.gt_s i64.gt_u i64.le_s i64.le_u i64.ge_s i64.ge_u "
    "f32.eq f32.ne f32.lt f32.gt f32.le f32.ge "
    "f64.eq f64.ne f64.lt f64.gt f64.le f64.ge "
    "i32.clz i32.ctz i32.popcnt i32.add i32.sub i32.mul i32.div_s i32.div_u i32.rem_s i32.rem_u "
    "i32.and i32.or i32.xor i32.shl i32.shr_s i32.shr_u i32.rotl i32.rotr "
    "i64.clz i64.ctz i64.popcnt i64.add i64.sub i64.mul i64.div_s i64.div_u i64.rem_s i64.rem_u "
    "i64.and i64.or i64.xor i64.shl i64.shr_s i64.shr_u i64.rotl i64.rotr "
    "f32.abs f32.neg f32.ceil f32.floor f32.trunc f32.nearest f32.sqrt f32.add f32.sub f32.mul "
    "f32.div f32.min f32.max f32.copysign "
    "f64.abs f64.neg f64.ceil f64.floor f64.trunc f64.nearest f64.sqrt f64.add f64.sub f64.mul "
    "f64.div f64.min f64.max f64.copysign "
    "i32.wrap_i64 i32.trunc_f32_s i32.trunc_f32_u i32.trunc_f64_s i32.trunc_f64_u "
    "i64.extend_i32_s i64.extend_i32_u i64.trunc_f32_s i64.trunc_f32_u i64.trunc_f64_s "
    "i64.trunc_f64_u f32.convert_i32_s f32.convert_i32_u f32.convert_i64_s f32.convert_i64_u "
    "f32.demote_f64 f64.convert_i32_s f64.convert_i32_u f64.convert_i64_s f64.convert_i64_u "
    "f64.promote_f32 i32.reinterpret_f32 i64.reinterpret_f64 f32.reinterpret_i32 "
    "f64.reinterpret_i64 i32.extend8_s i32.extend16_s i64.extend8_s i64.extend16_s i64.extend32_s"
).split()
for _i, _n in enumerate(_NUMERIC):
    _TABLE.append(OpInfo(_n, 0x45 + _i))

_PREFIXED_FC = [
    ("i32.trunc_sat_f32_s", "none"),
    ("i32.trunc_sat_f32_u", "none"),
    ("i32.trunc_sat_f64_s", "none"),
    ("i32.trunc_sat_f64_u", "none"),
    ("i64.trunc_sat_f32_s", "none"),
    ("i64.trunc_sat_f32_u", "none"),
    ("i64.trunc_sat_f64_s", "none"),
    ("i64.trunc_sat_f64_u", "none"),
    ("memory.init", "u32x2"),
    ("data.drop", "u32x1"),
    ("memory.copy", "u32x2"),
    ("memory.fill", "u32x1"),
    ("table.init", "u32x2"),
    ("elem.drop", "u32x1"),
    ("table.copy", "u32x2"),
    ("table.grow", "u32x1"),
    ("table.size", "u32x1"),
    ("table.fill", "u32x1"),
]
for _i, (_n, _k) in enumerate(_PREFIXED_FC):
    _TABLE.append(OpInfo(_n, _i, _k, prefix=0xFC))

BY_NAME: dict[str, OpInfo] = {op.name: op for op in _TABLE}
BY_CODE: dict[int, OpInfo] = {op.code: op for op in _TABLE if op.prefix is None}
BY_PREFIXED: dict[tuple[int, int], OpInfo] = {
    (op.prefix, op.code): op for op in _TABLE if op.prefix is not None
}

assert BY_NAME["i64.extend32_s"].code == 0xC4
assert BY_NAME["i32.store"].code == 0x36 and BY_NAME["i64.store32"].code == 0x3E

VALTYPES: dict[int, str] = {
    0x7F: "i32",
    0x7E: "i64",
    0x7D: "f32",
    0x7C: "f64",
    0x7B: "v128",
    0x70: "funcref",
    0x6F: "externref",
}
VALTYPE_CODES: dict[str, int] = {v: k for k, v in VALTYPES.items()}

# Instructions the mini-evaluator and the rewrite engine understand.
MODELED: frozenset[str] = frozenset(
    [
        "i32.const", "i64.const", "drop", "nop",
        "local.get", "local.set", "local.tee",
        "block", "loop", "if", "else", "end", "br", "br_if", "call",
        "i32.eqz", "i64.eqz",
    ]
    + [
        f"{t}.{op}"
        for t in ("i32", "i64")
        for op in ("add", "sub", "mul", "and", "or", "xor", "shl", "shr_u", "shr_s",
                   "eq", "ne", "lt_u", "gt_u")
    ]
)

BINARY_INT_OPS = ("add", "sub", "mul", "and", "or", "xor", "shl", "shr_u", "shr_s")
COMPARE_INT_OPS = ("eq", "ne", "lt_u", "gt_u")
