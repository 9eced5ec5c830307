import random
from dataclasses import replace

import pytest

import walker
from conftest import SAMPLE_CALLS, run_exports, wasm_valid
from divers.diversifier import (
    ALL_KINDS,
    BEHAVIORAL,
    Diversifier,
    Kind,
    NoApplicableTransformation,
    NoDeadFunction,
    NotApplicable,
    SizeBudgetExceeded,
    apply_kind,
    apply_random,
    codemotion_ops,
    eval_fragment,
    remove_dead_function,
    structure_ops,
)
from divers.diversifier.kinds import behavioral
from divers.diversifier.structure import PAD_NAMESPACE, reachable_functions
from divers.ir import (
    CustomSection,
    ElementSegment,
    Export,
    FuncType,
    Function,
    FunctionBody,
    KIND_FUNC,
    Module,
    RawSection,
    encode_module,
    ins,
    parse_module,
    validate_module,
)
from divers.rng import derive

I32_I32 = FuncType(("i32",), ("i32",))


def call_chain_module(element_refs=()):
    """f0 (exported) calls f1; f2 is never called."""
    f0 = FunctionBody((), (ins("local.get", 0), ins("call", 1), ins("end")))
    f1 = FunctionBody((), (ins("local.get", 0), ins("i32.const", 1), ins("i32.add"), ins("end")))
    f2 = FunctionBody((), (ins("local.get", 0), ins("call", 1), ins("i32.const", 2), ins("i32.mul"),
                           ins("end")))
    m = Module(types=(I32_I32,), functions=tuple(Function(0, b) for b in (f0, f1, f2)),
               exports=(Export("main", KIND_FUNC, 0),))
    if element_refs:
        m = replace(m, raw_sections=(RawSection(4, b"\x01\x70\x00\x04"),),
                    elements=(ElementSegment((ins("i32.const", 0), ins("end")), tuple(element_refs)),))
    return m


def export_surface(m: Module):
    return {e.name: (e.kind, m.func_type(e.index) if e.kind == KIND_FUNC else None) for e in m.exports}


class TestKinds:
    def test_behavioral_partition(self):
        assert {k for k in Kind if behavioral(k)} == {
            Kind.PEEPHOLE, Kind.LOOP_UNROLL, Kind.IF_SWAP, Kind.REMOVE_FUNCTION}
        assert BEHAVIORAL | {k for k in Kind if not behavioral(k)} == set(Kind)
        assert len(Kind) == 12 and set(ALL_KINDS) == set(Kind)

    def test_empty_module_only_module_level_kinds(self):
        seen = set()
        for seed in range(200):
            _, record = apply_random(Module(), random.Random(seed))
            seen.add(record.kind)
            assert (record.function_index is None) == (record.kind != Kind.ADD_FUNCTION)
        assert seen == {Kind.ADD_TYPE, Kind.ADD_CUSTOM, Kind.ADD_FUNCTION, Kind.ADD_IMPORT,
                        Kind.ADD_GLOBAL}

    def test_no_applicable_kind(self):
        with pytest.raises(NoApplicableTransformation):
            Diversifier(kinds=(Kind.MODIFY_CUSTOM, Kind.LOOP_UNROLL)).apply(Module(), random.Random(0))

    def test_determinism(self, sample_blob):
        m = parse_module(sample_blob)
        for seed in range(20):
            a = apply_random(m, derive(seed, "mutation"))
            b = apply_random(m, derive(seed, "mutation"))
            assert a == b
            assert encode_module(a[0]) == encode_module(b[0])

    def test_records(self, sample_blob):
        m = parse_module(sample_blob)
        rng = derive(11, "mutation")
        for _ in range(200):
            m, rec = apply_random(m, rng)
            assert rec.rng_draws > 0 and rec.description
            site_kinds = {Kind.PEEPHOLE, Kind.LOOP_UNROLL, Kind.IF_SWAP}
            if rec.kind in site_kinds:
                assert rec.function_index is not None and rec.instruction_offset is not None
                assert m.imported(KIND_FUNC) == [] or rec.function_index >= 0
            if rec.kind == Kind.PEEPHOLE:
                assert rec.rule_id
            if rec.kind in {Kind.ADD_TYPE, Kind.ADD_CUSTOM, Kind.MODIFY_CUSTOM, Kind.ADD_IMPORT,
                            Kind.ADD_GLOBAL, Kind.REMOVE_TYPE}:
                assert rec.function_index is None

    def test_size_budget(self, sample_blob):
        m = parse_module(sample_blob)
        with pytest.raises(SizeBudgetExceeded) as info:
            Diversifier(kinds=(Kind.ADD_FUNCTION,)).mutate(m, random.Random(0), len(sample_blob))
        assert info.value.size > info.value.limit == len(sample_blob)


class TestValidity:
    def test_thousand_stacked_steps(self, corpus33):
        m = parse_module(corpus33[5].blob)
        rng = derive(1, "mutation")
        for step in range(1000):
            m, rec = apply_random(m, rng)
            report = validate_module(m)
            assert report.ok, (step, rec, report)
            if step % 50 == 0:
                assert wasm_valid(encode_module(m)), (step, rec)
        assert wasm_valid(encode_module(m))

    def test_every_kind_on_the_sample(self, sample_blob):
        m0 = parse_module(sample_blob)
        m0 = replace(m0, customs=(CustomSection("meta", b"x" * 10, anchor=99),))
        for kind in Kind:
            for seed in range(10):
                try:
                    m, _ = apply_kind(m0, kind, random.Random(seed))
                except NotApplicable:
                    assert kind == Kind.REMOVE_TYPE
                    continue
                assert validate_module(m).ok, kind
                assert wasm_valid(encode_module(m)), kind

    def test_export_surface_preserved(self, sample_blob):
        m = parse_module(sample_blob)
        before = export_surface(m)
        rng = derive(4, "mutation")
        for _ in range(300):
            m, _ = apply_random(m, rng)
            after = export_surface(m)
            assert {k: after[k] for k in before} == before


class TestBehaviour:
    @pytest.mark.parametrize("seed", range(4))
    def test_wasmtime_differential(self, sample_blob, seed):
        reference = run_exports(sample_blob, SAMPLE_CALLS)
        m = parse_module(sample_blob)
        rng = derive(seed, "mutation")
        for step in range(1, 201):
            m, _ = apply_random(m, rng)
            if step % 40 == 0:
                assert run_exports(encode_module(m), SAMPLE_CALLS) == reference

    def test_corpus_differential(self, corpus33):
        for f in corpus33[3:9]:
            m = parse_module(f.blob)
            calls = [(e.name, tuple([7] * len(m.func_type(e.index).params)))
                     for e in m.exports if e.kind == KIND_FUNC]
            reference = run_exports(f.blob, calls)
            rng = derive(2, "mutation")
            for _ in range(150):
                m, _ = apply_random(m, rng)
            assert run_exports(encode_module(m), calls) == reference


class TestRemoveDeadFunction:
    def test_only_uncalled_function_removed(self):
        m = call_chain_module()
        assert reachable_functions(m) == {0, 1}
        out, rec = remove_dead_function(m, random.Random(0))
        assert rec.kind == Kind.REMOVE_FUNCTION and rec.function_index == 2
        assert len(out.functions) == 2
        assert out.functions[:2] == m.functions[:2]
        assert validate_module(out).ok

    def test_element_reference_roots(self):
        m = call_chain_module(element_refs=(2,))
        assert validate_module(m).ok
        with pytest.raises(NoDeadFunction):
            remove_dead_function(m, random.Random(0))

    def test_renumbering_after_removal(self):
        # f0 dead, f1 exported and calling f2, f3 dead: every later index shifts down
        dead = FunctionBody((), (ins("local.get", 0), ins("end")))
        main = FunctionBody((), (ins("local.get", 0), ins("call", 2), ins("end")))
        base = call_chain_module()
        m = replace(base, functions=(Function(0, dead), Function(0, main), base.functions[1],
                                     Function(0, base.functions[2].body)),
                    exports=(Export("main", KIND_FUNC, 1),))
        assert validate_module(m).ok and reachable_functions(m) == {1, 2}
        for _ in range(2):
            m, _ = remove_dead_function(m, random.Random(0))
        blob = encode_module(m)
        assert wasm_valid(blob)
        n = walker.defined_function_count(blob)
        assert n == 2
        assert walker.call_targets(blob) == {1} and all(t < n for t in walker.call_targets(blob))
        assert reachable_functions(parse_module(blob)) == {0, 1}
        assert run_exports(blob, [("main", (41,))]) == [42]


class TestStructure:
    def one_function(self):
        body = FunctionBody((), (ins("local.get", 0), ins("end")))
        return Module(types=(I32_I32,), functions=(Function(0, body),))

    def test_add_export(self):
        m = self.one_function()
        out, rec = structure_ops(m, Kind.ADD_EXPORT, random.Random(0))
        assert len(out.exports) == 1
        assert out.exports[0].kind == KIND_FUNC and out.exports[0].index == 0
        assert rec.function_index == 0

    def test_modify_custom_needs_a_section(self):
        with pytest.raises(NotApplicable):
            structure_ops(self.one_function(), Kind.MODIFY_CUSTOM, random.Random(0))

    def test_modify_custom_payload_bound(self):
        m = replace(self.one_function(), customs=(CustomSection("a", b"1" * 300, anchor=99),))
        for seed in range(50):
            out, _ = structure_ops(m, Kind.MODIFY_CUSTOM, random.Random(seed))
            assert out.customs[0].name == "a" and len(out.customs[0].payload) <= 256

    def test_add_import_is_padding_only(self, sample_blob):
        m = parse_module(sample_blob)
        before = walker.imports(sample_blob)
        for seed in range(3):
            m, rec = structure_ops(m, Kind.ADD_IMPORT, random.Random(seed))
        blob = encode_module(m)
        added = walker.imports(blob)[len(before):]
        assert len(added) == 3 and {mod for mod, _, _ in added} == {PAD_NAMESPACE} == {"divers_pad"}
        n_imported = len(walker.imports(blob))
        assert all(t >= n_imported for t in walker.call_targets(blob))
        assert run_exports(blob, SAMPLE_CALLS) == run_exports(sample_blob, SAMPLE_CALLS)

    def test_add_function_is_dead_and_valid(self):
        m = self.one_function()
        out, _ = structure_ops(m, Kind.ADD_FUNCTION, random.Random(3))
        assert len(out.functions) == 2 and out.exports == m.exports
        assert 1 not in walker.call_targets(encode_module(out))
        assert wasm_valid(encode_module(out))

    def test_remove_unused_type(self):
        m = replace(self.one_function(), types=(I32_I32, FuncType(("i64",), ())))
        out, _ = structure_ops(m, Kind.REMOVE_TYPE, random.Random(0))
        assert out.types == (I32_I32,)
        with pytest.raises(NotApplicable):
            structure_ops(out, Kind.REMOVE_TYPE, random.Random(0))


class TestCodemotion:
    def if_module(self):
        body = FunctionBody((), (
            ins("local.get", 0), ins("if", "i32"), ins("i32.const", 1), ins("else"),
            ins("i32.const", 2), ins("end"), ins("end")))
        return Module(types=(I32_I32,), functions=(Function(0, body),),
                      exports=(Export("f", KIND_FUNC, 0),))

    def test_if_swap_shape(self):
        out, rec = codemotion_ops(self.if_module(), Kind.IF_SWAP, random.Random(0))
        assert out.functions[0].body.instructions == (
            ins("local.get", 0), ins("i32.eqz"), ins("if", "i32"), ins("i32.const", 2), ins("else"),
            ins("i32.const", 1), ins("end"), ins("end"))
        assert rec.instruction_offset == 1
        blob = encode_module(out)
        assert run_exports(blob, [("f", (0,)), ("f", (5,))]) == [2, 1]

    def test_unroll_needs_a_loop(self):
        with pytest.raises(NotApplicable):
            codemotion_ops(self.if_module(), Kind.LOOP_UNROLL, random.Random(0))

    def test_unroll_preserves_final_locals(self):
        body = (ins("block", None), ins("loop", None),
                ins("local.get", 0), ins("i32.eqz"), ins("br_if", 1),
                ins("local.get", 1), ins("local.get", 0), ins("i32.xor"), ins("i32.const", 3),
                ins("i32.mul"), ins("local.set", 1),
                ins("local.get", 0), ins("i32.const", 1), ins("i32.sub"), ins("local.set", 0),
                ins("br", 0), ins("end"), ins("end"), ins("local.get", 1), ins("end"))
        m = Module(types=(FuncType(("i32", "i32"), ("i32",)),),
                   functions=(Function(0, FunctionBody((), body)),),
                   exports=(Export("f", KIND_FUNC, 0),))
        out, rec = codemotion_ops(m, Kind.LOOP_UNROLL, random.Random(0))
        unrolled = out.functions[0].body.instructions
        assert len(unrolled) > len(body) and validate_module(out).ok
        rng = random.Random(9)
        lt = ("i32", "i32")
        for _ in range(100):
            values = [rng.randrange(0, 40), rng.getrandbits(32)]
            assert eval_fragment(unrolled[:-1], values, local_types=lt) == \
                eval_fragment(body[:-1], values, local_types=lt)
        calls = [("f", (n, 12345)) for n in (0, 1, 2, 17)]
        assert run_exports(encode_module(out), calls) == run_exports(encode_module(m), calls)
