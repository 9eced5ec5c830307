"""Binary decoder/encoder for WebAssembly 1.0 modules.

Decoding keeps the original bytes of every section, function body and
instruction.  Encoding reuses those bytes wherever the decoded content is
unchanged, so ``encode_module(parse_module(b)) == b`` even for producers that
emit padded LEB128 values.
"""

from __future__ import annotations

import hashlib
from dataclasses import replace

from divers.ir import leb128
from divers.ir.errors import (
    IndexOverflow,
    MalformedModule,
    MalformedPreamble,
    TruncatedSection,
    UnknownSectionOrdering,
    UnsupportedInstruction,
)
from divers.ir.model import (
    KIND_FUNC,
    KIND_GLOBAL,
    KIND_MEMORY,
    KIND_TABLE,
    KIND_TAG,
    CustomSection,
    DataSegment,
    ElementSegment,
    Export,
    FuncType,
    Function,
    FunctionBody,
    Global,
    Import,
    Instruction,
    Module,
    RawSection,
)
from divers.ir.opcodes import BY_CODE, BY_NAME, BY_PREFIXED, VALTYPE_CODES, VALTYPES

MAGIC = b"\x00asm"
VERSION = b"\x01\x00\x00\x00"
PREAMBLE = MAGIC + VERSION

# Canonical order of non-custom sections (tag=13 and datacount=12 slot in).
SECTION_ORDER = (1, 2, 3, 4, 5, 13, 6, 7, 8, 9, 12, 10, 11)
SECTION_RANK = {sid: i + 1 for i, sid in enumerate(SECTION_ORDER)}
RAW_SECTION_IDS = frozenset({4, 5, 12, 13})
U32_MAX = (1 << 32) - 1


class _Reader:
    __slots__ = ("buf", "pos", "end", "section")

    def __init__(self, buf: bytes, pos: int, end: int, section: int):
        self.buf = buf
        self.pos = pos
        self.end = end
        self.section = section

    def _check(self, n: int) -> None:
        if self.pos + n > self.end:
            raise TruncatedSection(self.section)

    def byte(self) -> int:
        self._check(1)
        b = self.buf[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        self._check(n)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def _leb(self, fn, bits):
        try:
            value, pos = fn(self.buf, self.pos, bits)
        except leb128.DecodeError as exc:
            if "truncated" in str(exc):
                raise TruncatedSection(self.section) from exc
            raise MalformedModule(self.section, str(exc)) from exc
        if pos > self.end:
            raise TruncatedSection(self.section)
        self.pos = pos
        return value

    def u32(self) -> int:
        return self._leb(leb128.decode_u, 32)

    def u64(self) -> int:
        return self._leb(leb128.decode_u, 64)

    def s32(self) -> int:
        return self._leb(leb128.decode_s, 32)

    def s33(self) -> int:
        return self._leb(leb128.decode_s, 33)

    def s64(self) -> int:
        return self._leb(leb128.decode_s, 64)

    def name(self) -> str:
        n = self.u32()
        data = self.take(n)
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedModule(self.section, "invalid UTF-8 name") from exc

    def valtype(self) -> str:
        b = self.byte()
        try:
            return VALTYPES[b]
        except KeyError:
            raise MalformedModule(self.section, f"unknown value type 0x{b:02x}") from None

    def done(self) -> bool:
        return self.pos >= self.end


# -- instructions -----------------------------------------------------------


def _read_instruction(r: _Reader) -> Instruction:
    start = r.pos
    b = r.byte()
    if b == 0xFC:
        sub = r.u32()
        info = BY_PREFIXED.get((0xFC, sub))
    else:
        info = BY_CODE.get(b)
    if info is None:
        raise UnsupportedInstruction(f"opcode 0x{b:02x} at offset {start}")
    kind = info.imm
    if kind == "none":
        imm: tuple = ()
    elif kind in ("label", "func", "local", "global", "table", "u32x1"):
        imm = (r.u32(),)
    elif kind == "i32":
        imm = (r.s32(),)
    elif kind == "i64":
        imm = (r.s64(),)
    elif kind == "block":
        t = r.buf[r.pos] if r.pos < r.end else None
        if t == 0x40:
            r.pos += 1
            imm = (None,)
        elif t in VALTYPES:
            r.pos += 1
            imm = (VALTYPES[t],)
        else:
            idx = r.s33()
            if idx < 0:
                raise MalformedModule(r.section, "bad block type")
            imm = (idx,)
    elif kind == "br_table":
        n = r.u32()
        labels = tuple(r.u32() for _ in range(n))
        imm = (labels, r.u32())
    elif kind in ("call_indirect", "u32x2"):
        imm = (r.u32(), r.u32())
    elif kind == "memarg":
        align = r.u32()
        if align & 0x40:
            mem = r.u32()
            imm = (align, r.u64(), mem)
        else:
            imm = (align, r.u64())
    elif kind == "zero":
        imm = (r.byte(),)
    elif kind == "f32":
        imm = (r.take(4),)
    elif kind == "f64":
        imm = (r.take(8),)
    elif kind == "select_t":
        n = r.u32()
        imm = (tuple(r.valtype() for _ in range(n)),)
    elif kind == "reftype":
        imm = (r.valtype(),)
    else:  # pragma: no cover - table is closed
        raise AssertionError(kind)
    return Instruction(info.name, imm, r.buf[start : r.pos])


def _read_expr(r: _Reader) -> tuple[Instruction, ...]:
    """Read instructions up to and including the `end` closing depth 0."""
    out = []
    depth = 0
    while True:
        instr = _read_instruction(r)
        out.append(instr)
        op = instr.op
        if op in ("block", "loop", "if"):
            depth += 1
        elif op == "end":
            if depth == 0:
                return tuple(out)
            depth -= 1


def decode_instructions(code: bytes) -> tuple[Instruction, ...]:
    """Decode a flat instruction stream (no trailing-end requirement)."""
    r = _Reader(code, 0, len(code), 10)
    out = []
    while not r.done():
        out.append(_read_instruction(r))
    return tuple(out)


def _u32(value: int) -> bytes:
    if not 0 <= value <= U32_MAX:
        raise IndexOverflow(value)
    return leb128.encode_u(value)


def encode_instruction(instr: Instruction) -> bytes:
    if instr.raw is not None:
        return instr.raw
    info = BY_NAME[instr.op]
    head = bytes([info.prefix]) + _u32(info.code) if info.prefix is not None else bytes([info.code])
    kind = info.imm
    imm = instr.imm
    if kind == "none":
        return head
    if kind in ("label", "func", "local", "global", "table", "u32x1"):
        return head + _u32(imm[0])
    if kind == "i32":
        v = imm[0]
        if v >= 1 << 31:
            v -= 1 << 32
        return head + leb128.encode_s(v)
    if kind == "i64":
        v = imm[0]
        if v >= 1 << 63:
            v -= 1 << 64
        return head + leb128.encode_s(v)
    if kind == "block":
        bt = imm[0]
        if bt is None:
            return head + b"\x40"
        if isinstance(bt, str):
            return head + bytes([VALTYPE_CODES[bt]])
        return head + leb128.encode_s(bt)
    if kind == "br_table":
        labels, default = imm
        return head + _u32(len(labels)) + b"".join(_u32(x) for x in labels) + _u32(default)
    if kind in ("call_indirect", "u32x2"):
        return head + _u32(imm[0]) + _u32(imm[1])
    if kind == "memarg":
        if len(imm) == 3:
            return head + _u32(imm[0]) + _u32(imm[2]) + leb128.encode_u(imm[1])
        return head + _u32(imm[0]) + leb128.encode_u(imm[1])
    if kind == "zero":
        return head + bytes([imm[0]])
    if kind in ("f32", "f64"):
        return head + imm[0]
    if kind == "select_t":
        return head + _u32(len(imm[0])) + bytes(VALTYPE_CODES[t] for t in imm[0])
    if kind == "reftype":
        return head + bytes([VALTYPE_CODES[imm[0]]])
    raise AssertionError(kind)  # pragma: no cover


def encode_instructions(instrs) -> bytes:
    return b"".join([encode_instruction(i) for i in instrs])


# -- sections ---------------------------------------------------------------


def _read_limits(r: _Reader) -> None:
    flag = r.byte()
    wide = flag & 0x04
    (r.u64 if wide else r.u32)()
    if flag & 0x01:
        (r.u64 if wide else r.u32)()


def _read_import(r: _Reader) -> Import:
    module = r.name()
    name = r.name()
    kind = r.byte()
    start = r.pos
    if kind == KIND_FUNC:
        desc = r.u32()
    elif kind == KIND_GLOBAL:
        vt = r.valtype()
        mut = r.byte()
        desc = (vt, bool(mut))
    elif kind == KIND_TABLE:
        r.valtype()
        _read_limits(r)
        desc = r.buf[start : r.pos]
    elif kind == KIND_MEMORY:
        _read_limits(r)
        desc = r.buf[start : r.pos]
    elif kind == KIND_TAG:
        r.byte()
        r.u32()
        desc = r.buf[start : r.pos]
    else:
        raise MalformedModule(2, f"unknown import kind {kind}")
    return Import(module, name, kind, desc)


def _read_body(r: _Reader) -> FunctionBody:
    entry_start = r.pos
    size = r.u32()
    body_start = r.pos
    body_end = body_start + size
    if body_end > r.end:
        raise TruncatedSection(10)
    raw = r.buf[entry_start:body_end]
    br = _Reader(r.buf, body_start, body_end, 10)
    n_groups = br.u32()
    locals_ = tuple((br.u32(), br.valtype()) for _ in range(n_groups))
    r.pos = body_end
    try:
        instrs = _read_expr(br)
        if br.pos != body_end:
            raise MalformedModule(10, "trailing bytes after function body")
    except UnsupportedInstruction:
        return FunctionBody(locals_, None, opaque=r.buf[body_start:body_end], raw=raw)
    return FunctionBody(locals_, instrs, raw=raw)


def raw_vector_count(payload: bytes) -> int:
    if not payload:
        return 0
    value, _ = leb128.decode_u(payload, 0)
    return value


def parse_module(blob: bytes) -> Module:
    """Decode a binary module."""
    blob = bytes(blob)
    if len(blob) < 8 or blob[:4] != MAGIC or blob[4:8] != VERSION:
        raise MalformedPreamble()
    pos = 8
    last_rank = 0
    fields: dict = {}
    origin: dict = {}
    customs: list[CustomSection] = []
    raws: list[RawSection] = []
    func_types: tuple[int, ...] = ()
    bodies: tuple[FunctionBody, ...] = ()
    while pos < len(blob):
        sec_start = pos
        sid = blob[pos]
        hdr = _Reader(blob, pos + 1, len(blob), sid)
        size = hdr.u32()
        body_start = hdr.pos
        end = body_start + size
        if end > len(blob):
            raise TruncatedSection(sid)
        raw = blob[sec_start:end]
        payload = blob[body_start:end]
        r = _Reader(blob, body_start, end, sid)
        pos = end
        if sid == 0:
            name = r.name()
            customs.append(CustomSection(name, blob[r.pos : end], last_rank, raw=raw))
            continue
        rank = SECTION_RANK.get(sid)
        if rank is None:
            raise UnknownSectionOrdering(f"unknown section id {sid}")
        if rank <= last_rank:
            raise UnknownSectionOrdering(f"section {sid} out of order")
        last_rank = rank
        if sid in RAW_SECTION_IDS:
            raws.append(RawSection(sid, payload))
            origin[sid] = (payload, raw)
            continue
        n = r.u32()
        if sid == 1:
            types = []
            for _ in range(n):
                form = r.byte()
                if form != 0x60:
                    raise MalformedModule(1, f"unsupported type form 0x{form:02x}")
                params = tuple(r.valtype() for _ in range(r.u32()))
                results = tuple(r.valtype() for _ in range(r.u32()))
                types.append(FuncType(params, results))
            fields["types"] = value = tuple(types)
        elif sid == 2:
            fields["imports"] = value = tuple(_read_import(r) for _ in range(n))
        elif sid == 3:
            func_types = value = tuple(r.u32() for _ in range(n))
        elif sid == 6:
            gl = []
            for _ in range(n):
                vt = r.valtype()
                mut = bool(r.byte())
                gl.append(Global(vt, mut, _read_expr(r)))
            fields["globals"] = value = tuple(gl)
        elif sid == 7:
            fields["exports"] = value = tuple(
                Export(r.name(), r.byte(), r.u32()) for _ in range(n)
            )
        elif sid == 8:
            fields["start"] = value = n
        elif sid == 9:
            segs = []
            for _ in range(n):
                flag = r.u32()
                if flag != 0:
                    segs = None
                    break
                offset = _read_expr(r)
                segs.append(ElementSegment(offset, tuple(r.u32() for _ in range(r.u32()))))
            if segs is None:
                fields["elements"] = None
                raws.append(RawSection(9, payload))
                origin[9] = (payload, raw)
                continue
            fields["elements"] = value = tuple(segs)
        elif sid == 10:
            bodies = value = tuple(_read_body(r) for _ in range(n))
        elif sid == 11:
            segs = []
            for _ in range(n):
                flag = r.u32()
                if flag == 0:
                    mem, offset = 0, _read_expr(r)
                elif flag == 1:
                    mem, offset = 0, ()
                elif flag == 2:
                    mem = r.u32()
                    offset = _read_expr(r)
                else:
                    raise MalformedModule(11, f"bad data segment flag {flag}")
                data = r.take(r.u32())
                segs.append(DataSegment(flag, mem, offset, data))
            fields["data"] = value = tuple(segs)
        else:  # pragma: no cover
            raise AssertionError(sid)
        if r.pos != end:
            raise MalformedModule(sid, "section size mismatch")
        origin[sid] = (value, raw)
    if len(func_types) != len(bodies):
        raise MalformedModule(10, "function and code section counts differ")
    functions = tuple(Function(t, b) for t, b in zip(func_types, bodies))
    return Module(
        functions=functions,
        customs=tuple(customs),
        raw_sections=tuple(raws),
        origin=origin,
        **fields,
    )


def _section(sid: int, payload: bytes) -> bytes:
    return bytes([sid]) + _u32(len(payload)) + payload


def _vec(items: list[bytes]) -> bytes:
    return _u32(len(items)) + b"".join(items)


def _name(s: str) -> bytes:
    data = s.encode("utf-8")
    return _u32(len(data)) + data


def encode_body(body: FunctionBody) -> bytes:
    """Encode locals + instructions (without the size prefix)."""
    if body.is_opaque:
        return body.opaque
    locs = _vec([_u32(c) + bytes([VALTYPE_CODES[t]]) for c, t in body.locals])
    return locs + encode_instructions(body.instructions)


def _body_entry(body: FunctionBody) -> bytes:
    if body.raw is not None:
        return body.raw
    content = body.encoded
    return _u32(len(content)) + content


def _encode_import(imp: Import) -> bytes:
    head = _name(imp.module) + _name(imp.name) + bytes([imp.kind])
    if imp.kind == KIND_FUNC:
        return head + _u32(imp.desc)
    if imp.kind == KIND_GLOBAL:
        vt, mut = imp.desc
        return head + bytes([VALTYPE_CODES[vt], int(mut)])
    return head + imp.desc


def _snapshot(m: Module, sid: int):
    if sid == 1:
        return m.types
    if sid == 2:
        return m.imports
    if sid == 3:
        return tuple(f.type_index for f in m.functions)
    if sid == 6:
        return m.globals
    if sid == 7:
        return m.exports
    if sid == 8:
        return m.start
    if sid == 9:
        return m.elements
    if sid == 10:
        return tuple(f.body for f in m.functions)
    if sid == 11:
        return m.data
    raise AssertionError(sid)


def _same(sid: int, a, b) -> bool:
    if sid == 10:
        return len(a) == len(b) and all(x is y for x, y in zip(a, b))
    return a == b


def _encode_payload(m: Module, sid: int) -> bytes | None:
    """Canonical payload of a modeled section, or None when empty/absent."""
    if sid == 1:
        if not m.types:
            return None
        return _vec([
            b"\x60"
            + _vec([bytes([VALTYPE_CODES[p]]) for p in t.params])
            + _vec([bytes([VALTYPE_CODES[p]]) for p in t.results])
            for t in m.types
        ])
    if sid == 2:
        return _vec([_encode_import(i) for i in m.imports]) if m.imports else None
    if sid == 3:
        return _vec([_u32(f.type_index) for f in m.functions]) if m.functions else None
    if sid == 6:
        if not m.globals:
            return None
        return _vec([
            bytes([VALTYPE_CODES[g.valtype], int(g.mutable)]) + encode_instructions(g.init)
            for g in m.globals
        ])
    if sid == 7:
        if not m.exports:
            return None
        return _vec([_name(e.name) + bytes([e.kind]) + _u32(e.index) for e in m.exports])
    if sid == 8:
        return None if m.start is None else _u32(m.start)
    if sid == 9:
        if not m.elements:
            return None
        return _vec([
            b"\x00" + encode_instructions(s.offset) + _vec([_u32(f) for f in s.functions])
            for s in m.elements
        ])
    if sid == 10:
        return _vec([_body_entry(f.body) for f in m.functions]) if m.functions else None
    if sid == 11:
        if not m.data:
            return None
        segs = []
        for d in m.data:
            if d.flags == 0:
                seg = b"\x00" + encode_instructions(d.offset)
            elif d.flags == 1:
                seg = b"\x01"
            else:
                seg = b"\x02" + _u32(d.memory) + encode_instructions(d.offset)
            segs.append(seg + _u32(len(d.payload)) + d.payload)
        return _vec(segs)
    raise AssertionError(sid)


def _encode_sections(m: Module) -> dict[int, bytes]:
    """Map section id -> full section bytes for every section that is emitted."""
    out: dict[int, bytes] = {}
    for raw in m.raw_sections:
        orig = m.origin.get(raw.id)
        if orig is not None and orig[0] == raw.payload:
            out[raw.id] = orig[1]
        else:
            out[raw.id] = _section(raw.id, raw.payload)
    for sid in (1, 2, 3, 6, 7, 8, 9, 10, 11):
        if sid == 9 and m.elements is None:
            continue
        orig = m.origin.get(sid)
        if orig is not None and _same(sid, orig[0], _snapshot(m, sid)):
            out[sid] = orig[1]
            continue
        payload = _encode_payload(m, sid)
        if payload is not None:
            out[sid] = _section(sid, payload)
    return out


def _effective_anchor(anchor: int, present: set[int]) -> int:
    while anchor > 0 and anchor not in present:
        anchor -= 1
    return anchor


def normalize(m: Module) -> Module:
    """Canonical custom-section placement, as a re-parse would observe it."""
    present = {SECTION_RANK[s] for s in _encode_sections(m)}
    fixed = [
        (c if (a := _effective_anchor(c.anchor, present)) == c.anchor else replace(c, anchor=a))
        for c in m.customs
    ]
    fixed.sort(key=lambda c: c.anchor)
    fixed_t = tuple(fixed)
    if fixed_t == m.customs and all(a is b for a, b in zip(fixed_t, m.customs)):
        return m
    return replace(m, customs=fixed_t)


def _encode_custom(c: CustomSection) -> bytes:
    if c.raw is not None:
        return c.raw
    return _section(0, _name(c.name) + c.payload)


def encode_module(m: Module) -> bytes:
    sections = _encode_sections(m)
    present = {SECTION_RANK[s] for s in sections}
    by_anchor: dict[int, list[CustomSection]] = {}
    for c in m.customs:
        by_anchor.setdefault(_effective_anchor(c.anchor, present), []).append(c)
    parts = [PREAMBLE]
    parts.extend(_encode_custom(c) for c in by_anchor.get(0, ()))
    for sid in SECTION_ORDER:
        sec = sections.get(sid)
        if sec is None:
            continue
        parts.append(sec)
        parts.extend(_encode_custom(c) for c in by_anchor.get(SECTION_RANK[sid], ()))
    return b"".join(parts)


def content_hash(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()
