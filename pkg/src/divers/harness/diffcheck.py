"""Optional spot check of saved variants on an external runtime.

``diff_runtime_cmd`` is a template such as
``wasmtime run --invoke {func} {file} {args}``; it is run once for the original
and once for the variant of every exported function, with every parameter set
to 1, and the printed results are compared.
"""

from __future__ import annotations

import csv
import logging
import shlex
import subprocess
import tempfile
from pathlib import Path

from divers.harness.traces import run_stem
from divers.ir.codec import parse_module
from divers.ir.model import KIND_FUNC

log = logging.getLogger(__name__)


def _invoke(template: str, path: Path, func: str, args: list[str], timeout: float) -> str:
    cmd = template.format(file=shlex.quote(str(path)), func=shlex.quote(func), args=" ".join(args))
    try:
        proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True, timeout=timeout)
    except (OSError, subprocess.TimeoutExpired) as exc:
        return f"<{type(exc).__name__}>"
    return proc.stdout.strip() if proc.returncode == 0 else f"<exit {proc.returncode}>"


def run_diffcheck(template: str, rows, blobs: dict[str, bytes], out: Path,
                  timeout: float = 10.0) -> Path:
    path = out / "diffcheck.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh, tempfile.TemporaryDirectory() as tmp:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("binary_id", "algorithm", "sigma", "seed", "func", "original", "variant", "match"))
        for r in rows:
            variant = out / "variants" / f"{run_stem(r.binary_id, r.algorithm, r.sigma, r.seed)}.wasm"
            if r.outcome != "Total" or not variant.exists():
                continue
            original = Path(tmp) / f"{r.binary_id}.wasm"
            original.write_bytes(blobs[r.binary_id])
            m = parse_module(blobs[r.binary_id])
            for e in m.exports:
                if e.kind != KIND_FUNC:
                    continue
                args = ["1"] * len(m.func_type(e.index).params)
                a = _invoke(template, original, e.name, args, timeout)
                b = _invoke(template, variant, e.name, args, timeout)
                if a != b:
                    log.warning("behaviour differs for %s:%s (%s vs %s)", variant.name, e.name, a, b)
                w.writerow((r.binary_id, r.algorithm, "" if r.sigma is None else format(r.sigma, "g"),
                            r.seed, e.name, a, b, "true" if a == b else "false"))
    return path
