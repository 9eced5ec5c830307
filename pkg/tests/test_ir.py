import hashlib
import random
from dataclasses import replace

import pytest
import wasmtime
from hypothesis import given, settings
from hypothesis import strategies as st

import walker
from conftest import wasm_valid
from divers.diversifier import Kind, apply_kind, apply_random
from divers.harness.corpus import PlantPlan, build_module
from divers.ir import (
    PREAMBLE,
    CustomSection,
    Export,
    FuncType,
    Function,
    FunctionBody,
    IndexOverflow,
    KIND_FUNC,
    MalformedPreamble,
    Module,
    TruncatedSection,
    UnknownSectionOrdering,
    content_hash,
    encode_module,
    ins,
    module_stats,
    parse_module,
    validate_module,
)
from divers.rng import derive


def one_function_module(*instrs, results=("i32",)):
    return Module(
        types=(FuncType((), results),),
        functions=(Function(0, FunctionBody((), (*instrs, ins("end")))),),
        exports=(Export("f", KIND_FUNC, 0),),
    )


class TestParse:
    def test_preamble_only_module_is_empty(self):
        m = parse_module(PREAMBLE)
        assert m == Module()
        assert (m.types, m.imports, m.functions, m.globals, m.exports) == ((), (), (), (), ())
        assert m.start is None and m.data == () and m.customs == ()

    @pytest.mark.parametrize("blob", [b"", b"\0asm", b"\0asm\x02\0\0\0", b"wasm\x01\0\0\0"])
    def test_bad_preamble(self, blob):
        with pytest.raises(MalformedPreamble):
            parse_module(blob)

    def test_truncated_section_reports_its_id(self, sample_blob):
        sid = walker.sections(sample_blob)[0][0]
        with pytest.raises(TruncatedSection) as info:
            parse_module(sample_blob[:12])
        assert info.value.section_id == sid

    def test_out_of_order_sections_rejected(self):
        # function section (3) followed by a type section (1)
        blob = PREAMBLE + b"\x03\x01\x00" + b"\x01\x01\x00"
        with pytest.raises(UnknownSectionOrdering):
            parse_module(blob)

    def test_three_function_corpus_module(self):
        m, _ = build_module(PlantPlan(customs=["producers"], fillers=3), random.Random(5))
        blob = encode_module(m)
        parsed = parse_module(blob)
        assert len(parsed.functions) == 3
        assert walker.defined_function_count(blob) == 3
        assert len(walker.code_bodies(blob)) == 3


class TestEncode:
    def test_empty_module_is_the_preamble(self):
        assert encode_module(Module()) == PREAMBLE == b"\0asm\x01\0\0\0"

    def test_custom_section_written_verbatim(self):
        m = apply_kind(one_function_module(ins("i32.const", 1)), Kind.ADD_TYPE, random.Random(0))[0]
        payload = bytes(range(40))
        m = replace(m, customs=(CustomSection("meta", payload, anchor=99),))
        blob = encode_module(m)
        assert b"meta" in blob and payload in blob
        assert ("meta", payload) in walker.custom_sections(blob)

    def test_const_body_decodes_independently(self):
        blob = encode_module(one_function_module(ins("i32.const", 7)))
        assert walker.code_bodies(blob) == [[(0x41, (7,)), (0x0B, ())]]
        assert wasm_valid(blob)
        store = wasmtime.Store()
        inst = wasmtime.Instance(store, wasmtime.Module(store.engine, blob), [])
        assert inst.exports(store)["f"](store) == 7

    def test_wat_compiled_module_matches(self):
        blob = wasmtime.wat2wasm('(module (func (export "f") (result i32) i32.const 7))')
        m = parse_module(blob)
        assert m.functions[0].body.instructions == (ins("i32.const", 7), ins("end"))

    def test_index_overflow(self):
        m = replace(one_function_module(ins("i32.const", 0)),
                    exports=(Export("f", KIND_FUNC, 2**32),))
        with pytest.raises(IndexOverflow):
            encode_module(m)

    def test_new_custom_section_preserves_other_bytes(self, sample_blob):
        m = parse_module(sample_blob)
        m2 = replace(m, customs=m.customs + (CustomSection("x", b"abc", anchor=99),))
        blob = encode_module(m2)
        assert blob.startswith(sample_blob)


class TestRoundTrip:
    def test_wat_sample(self, sample_blob):
        assert encode_module(parse_module(sample_blob)) == sample_blob

    def test_corpus(self, corpus33):
        for f in corpus33:
            m = parse_module(f.blob)
            assert encode_module(m) == f.blob
            assert parse_module(encode_module(m)) == m

    def test_mutated_modules(self, sample_blob):
        m = parse_module(sample_blob)
        rng = derive(3, "mutation")
        for _ in range(60):
            m, _ = apply_random(m, rng)
            blob = encode_module(m)
            again = parse_module(blob)
            assert again == m
            assert encode_module(again) == blob

    def test_unmodeled_bytes_survive(self):
        # f32 arithmetic and memory ops are carried opaquely
        blob = wasmtime.wat2wasm("""(module (memory 1)
          (func (export "g") (param f32) (result f32)
            local.get 0 f32.const 1.5 f32.mul f32.sqrt
            i32.const 0 f32.load offset=4 f32.add))""")
        m = parse_module(blob)
        assert encode_module(m) == blob
        assert any(not i.modeled for i in m.functions[0].body.instructions)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(-(2**31), 2**31 - 1), min_size=1, max_size=12))
    def test_constant_lists(self, values):
        instrs = [ins("i32.const", v) for v in values] + [ins("drop")] * (len(values) - 1)
        blob = encode_module(one_function_module(*instrs))
        assert wasm_valid(blob)
        assert parse_module(blob) == one_function_module(*instrs)
        assert [imm[0] for op, imm in walker.code_bodies(blob)[0] if op == 0x41] == values


class TestValidate:
    def test_empty_module_passes(self):
        assert validate_module(Module()).ok

    def test_dangling_export(self):
        m = replace(one_function_module(ins("i32.const", 0)), exports=(Export("f", KIND_FUNC, 5),))
        report = validate_module(m)
        assert not report.ok
        assert "export" in report.rule
        assert not wasm_valid(encode_module(m))

    def test_type_mismatch(self):
        m = one_function_module(ins("i64.const", 0))
        assert not validate_module(m).ok
        assert not wasm_valid(encode_module(m))

    def test_unbalanced_nesting(self):
        m = Module(types=(FuncType(),),
                   functions=(Function(0, FunctionBody((), (ins("block", None), ins("end")))),))
        assert not validate_module(m).ok

    def test_corpus_agrees_with_wasmtime(self, corpus33):
        for f in corpus33:
            assert validate_module(parse_module(f.blob)).ok
            assert wasm_valid(f.blob)


class TestStats:
    def test_empty(self):
        assert module_stats(Module()) == (8, 0, 0)

    def test_add_function_adds_one(self, sample_blob):
        m = parse_module(sample_blob)
        m2, _ = apply_kind(m, Kind.ADD_FUNCTION, random.Random(1))
        assert module_stats(m2)[2] == module_stats(m)[2] + 1

    def test_planted_body_count_matches_walker(self):
        body = [ins("local.get", 0)]
        for k in range(19):
            body += [ins("i32.const", k + 1), ins("i32.xor")]
        planted = FunctionBody((), tuple(body))  # 39 instructions + end = 40
        m, _ = build_module(PlantPlan(customs=["build_id"], fillers=2), random.Random(2))
        t = len(m.types)
        m = replace(m, types=m.types + (FuncType(("i32",), ("i32",)),),
                    functions=m.functions + (Function(t, planted.with_instructions(
                        (*planted.instructions, ins("end")))),))
        blob = encode_module(m)
        size, n_instr, n_func = module_stats(m)
        bodies = walker.code_bodies(blob)
        assert len(bodies[-1]) == 40
        assert n_instr == sum(len(b) for b in bodies) == 40 + sum(len(b) for b in bodies[:-1])
        assert size == len(blob) and n_func == len(bodies)

    def test_imports_not_counted(self, sample_blob):
        m, _ = apply_kind(parse_module(sample_blob), Kind.ADD_IMPORT, random.Random(0))
        assert module_stats(m)[2] == len(m.functions) == walker.defined_function_count(encode_module(m))


class TestContentHash:
    def test_empty(self):
        assert content_hash(b"") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"

    def test_copy_and_format(self, sample_blob):
        digest = content_hash(sample_blob)
        assert digest == content_hash(bytes(bytearray(sample_blob)))
        assert digest == hashlib.sha256(sample_blob).hexdigest()
        assert len(digest) == 64 and digest == digest.lower()

    def test_equal_structure_different_bytes(self):
        # a non-minimal LEB for the section size parses to the same module
        canonical = encode_module(one_function_module(ins("i32.const", 7)))
        sid, payload = walker.sections(canonical)[0]
        padded = PREAMBLE + bytes([sid, 0x80 | len(payload), 0x00]) + payload + canonical[
            8 + 2 + len(payload):]
        assert parse_module(padded) == parse_module(canonical)
        assert content_hash(padded) != content_hash(canonical)
