import random

import pytest
import wasmtime

from divers.harness.corpus import synthesize_corpus

SAMPLE_WAT = r"""
(module
  (memory 1)
  (global $g (mut i32) (i32.const 7))
  (func $helper (param i32 i64) (result i64)
    local.get 1 local.get 0 i64.extend_i32_u i64.add)
  (func $dead (result i32) i32.const 99)
  (func $sum (export "sum") (param $n i32) (result i32) (local $acc i32)
    block $out
      loop $top
        local.get $n i32.eqz br_if $out
        local.get $acc local.get $n i32.add local.set $acc
        local.get $n i32.const 1 i32.sub local.set $n
        br $top
      end
    end
    local.get $acc)
  (func (export "pick") (param i32) (result i32)
    local.get 0
    if (result i32) i32.const 10 i32.const 3 i32.mul else i32.const 20 i32.const 5 i32.xor end)
  (func (export "mix") (param i32 i64) (result i64)
    local.get 0 local.get 1 call $helper i64.const 3 i64.shl
    i32.const 5 i32.const 9 i32.add drop)
  (func (export "lp") (param i32) (result i32)
    loop (result i32)
      local.get 0 i32.const 1 i32.add local.tee 0 i32.const 10 i32.lt_u br_if 0
      local.get 0
    end)
  (data (i32.const 0) "hello")
)
"""

SAMPLE_CALLS = (("sum", (10,)), ("sum", (0,)), ("pick", (0,)), ("pick", (1,)),
                ("mix", (3, 4)), ("lp", (0,)), ("lp", (42,)))

_ENGINE = wasmtime.Engine()


def wasm_valid(blob: bytes) -> bool:
    try:
        wasmtime.Module.validate(_ENGINE, blob)
    except wasmtime.WasmtimeError:
        return False
    return True


def instantiate(blob: bytes):
    """Instantiate with every import stubbed by a trapping host function."""
    store = wasmtime.Store(_ENGINE)
    module = wasmtime.Module(_ENGINE, blob)
    imports = []
    for imp in module.imports:
        ty = imp.type
        if isinstance(ty, wasmtime.FuncType):
            def trap(*_):
                raise RuntimeError("padding import called")
            imports.append(wasmtime.Func(store, ty, trap))
        elif isinstance(ty, wasmtime.GlobalType):
            zero = wasmtime.Val.i64(0) if str(ty.content) == "i64" else wasmtime.Val.i32(0)
            imports.append(wasmtime.Global(store, ty, zero))
        else:
            raise AssertionError(f"unexpected import type {ty}")
    return store, wasmtime.Instance(store, module, imports)


def run_exports(blob: bytes, calls):
    results = []
    for name, args in calls:
        store, inst = instantiate(blob)
        try:
            results.append(inst.exports(store)[name](store, *args))
        except wasmtime.Trap as exc:
            results.append(f"trap: {exc.message.splitlines()[0]}")
    return results


@pytest.fixture(scope="session")
def sample_blob() -> bytes:
    return wasmtime.wat2wasm(SAMPLE_WAT)


@pytest.fixture(scope="session")
def corpus33():
    return synthesize_corpus(33, random.Random(0))
