"""Command-line driver: run programs, benchmark kernels, convert, reorder, inspect.

Exit codes: 0 success, 1 parse error, 2 semantic error, 3 I/O or file-format
error, 4 runtime error. ``SPARTA_THREADS`` sets the default worker count;
``--threads`` overrides it.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import codegen, dsl, engine, ingest, ir, reorder, storage
from .errors import IngestError, SemanticError, SpartaError

__all__ = ["main", "BenchRecord"]


def _default_threads() -> int:
    env = os.environ.get("SPARTA_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _config(threads: int) -> engine.ExecConfig:
    if threads > 1:
        return engine.ExecConfig("par", workers=threads)
    return engine.ExecConfig("seq")


def _read_input(spec: str) -> storage.CooTensor:
    """Load a tensor from a file path or a synth:banded:N:NNZ spec."""
    if spec.startswith("synth:"):
        parts = spec.split(":")
        if len(parts) != 4 or parts[1] != "banded":
            raise SemanticError(f"unknown synthetic input {spec!r} "
                                "(expected synth:banded:N:NNZ)")
        try:
            n, nnz = int(parts[2]), int(parts[3])
        except ValueError:
            raise SemanticError(f"bad synthetic sizes in {spec!r}") from None
        return ingest.banded_matrix(n, nnz)
    return ingest.read_tensor(spec)


# ---------------------------------------------------------------------------
# run


def cmd_run(args) -> int:
    try:
        source = open(args.program, "r", encoding="utf-8").read()
    except OSError as exc:
        raise IngestError(f"{args.program}: {exc.strerror or exc}") from None
    ast = dsl.parse(source)
    module = ir.lower_ast(ast)
    static = {l.name: l.extent for l in module.labels if l.extent is not None}

    if args.dump_ir:
        print(ir.dump_module(module), end="")
    if args.dump_loops:
        for op in module.ops:
            if isinstance(op, ir.TensorOp):
                nest = codegen.generate(ir.build_schedule(op), static)
                print(codegen.render(nest), end="")

    env = engine.run_program(module, _config(args.threads), reorder_data=args.reorder)
    last_out = None
    for op in module.ops:
        if isinstance(op, ir.TensorOp):
            result = env[op.out.name]
            last_out = op.out.name
            print(f"{op.out.name}: shape={tuple(np.shape(result))} "
                  f"sum={float(np.sum(result)):.17g}")
    if args.out and last_out is not None:
        arr = np.asarray(env[last_out])
        ingest.write_dense(arr, arr.shape, args.out)
    return 0


# ---------------------------------------------------------------------------
# bench


@dataclass(frozen=True)
class BenchRecord:
    kernel: str
    input_id: str
    format_name: str
    mode: str
    workers: int
    repeats: int
    times: tuple[float, ...]
    mean_s: float
    min_s: float

    def __post_init__(self):
        if self.repeats < 1 or len(self.times) != self.repeats:
            raise SemanticError("bench needs at least one repeat")
        if any(t <= 0 for t in self.times):
            raise SemanticError("non-positive wall time recorded")

    def csv_row(self) -> list:
        return [self.kernel, self.input_id, self.format_name, self.mode,
                self.workers, self.repeats,
                f"{self.mean_s:.9f}", f"{self.min_s:.9f}"]


CSV_HEADER = ["kernel", "input", "format", "mode", "workers", "repeats", "mean_s", "min_s"]

_KERNEL_RANK = {"spmv": 2, "spmm": 2, "ttv": 3, "ttm": 3}
_DENSE_COLS = 32  # inner extent of the generated dense operand for spmm/ttm


def bench_kernel(kernel: str, coo: storage.CooTensor, format_name: str,
                 cfg: engine.ExecConfig, repeats: int, input_id: str) -> BenchRecord:
    """Time one kernel; ingestion, compression, and output zeroing stay untimed."""
    rank = _KERNEL_RANK[kernel]
    if coo.rank != rank:
        raise SemanticError(f"kernel {kernel!r} needs a rank-{rank} input, "
                            f"got rank {coo.rank}")
    attrs = storage.preset_attrs(format_name, rank)
    sp = storage.compress(coo, attrs)
    op = engine.make_kernel_op(kernel, attrs)
    nest = codegen.generate(ir.build_schedule(op))

    out_l, a_l, b_l = engine.KERNELS[kernel]
    extents = dict(zip(a_l, coo.shape))
    if kernel in ("spmm", "ttm"):
        extents["r"] = _DENSE_COLS
    b = np.ones(tuple(extents[l] for l in b_l))
    out = np.zeros(tuple(extents[l] for l in out_l))
    binding = engine.Binding({"A": sp, "B": b, "C": out}, extents)

    engine.run(nest, binding, cfg)  # warm-up: JIT compile and first touch
    times = []
    for _ in range(repeats):
        out.reshape(-1)[:] = 0.0
        t0 = time.perf_counter()
        engine.run(nest, binding, cfg)
        times.append(time.perf_counter() - t0)
    mode = "par" if cfg.mode == "par" else "seq"
    return BenchRecord(kernel, input_id, format_name, mode,
                       cfg.workers if mode == "par" else 1,
                       repeats, tuple(times),
                       float(np.mean(times)), float(np.min(times)))


def cmd_bench(args) -> int:
    coo = _read_input(args.input)
    fmt = args.format
    if fmt is None:
        fmt = "CSR" if _KERNEL_RANK[args.kernel] == 2 else "CSF"
    if args.reorder:
        coo = reorder.apply_permutations(coo, reorder.lexi_order(coo, args.iters))
    rec = bench_kernel(args.kernel, coo, fmt, _config(args.threads),
                       args.repeats, args.input)
    print(",".join(str(v) for v in rec.csv_row()))
    if args.csv:
        fresh = not os.path.exists(args.csv) or os.path.getsize(args.csv) == 0
        with open(args.csv, "a", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            if fresh:
                writer.writerow(CSV_HEADER)
            writer.writerow(rec.csv_row())
    return 0


# ---------------------------------------------------------------------------
# convert / reorder / inspect


def _format_array(arr: np.ndarray, limit: int = 48) -> str:
    vals = list(arr[:limit])
    body = ",".join(f"{v:g}" if isinstance(v, float) else str(int(v)) for v in vals)
    if len(arr) > limit:
        body += f",... ({len(arr)} total)"
    return f"[{body}]"


def _dump_levels(sp: storage.SpTensor, format_name: str) -> str:
    shape = "x".join(str(e) for e in sp.shape)
    lines = [f"format {format_name} shape {shape} vals {len(sp.vals)}"]
    for lvl, dim in enumerate(sp.dims):
        parts = [f"level {lvl} {dim.attr}:"]
        if dim.attr is not storage.FormatAttr.S:
            parts.append(f"pos={_format_array(dim.pos)}")
        if dim.attr is not storage.FormatAttr.D:
            parts.append(f"crd={_format_array(dim.crd)}")
        lines.append(" ".join(parts))
    lines.append(f"vals={_format_array(sp.vals.astype(float))}")
    return "\n".join(lines) + "\n"


def cmd_convert(args) -> int:
    coo = _read_input(args.input)
    if args.from_format:
        # round-trip through the claimed source encoding to validate it
        coo = storage.decompress(storage.compress(
            coo, storage.preset_attrs(args.from_format, coo.rank)))
    sp = storage.compress(coo, storage.preset_attrs(args.to, coo.rank))
    text = _dump_levels(sp, args.to)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def cmd_reorder(args) -> int:
    coo = _read_input(args.input)
    perms = reorder.lexi_order(coo, max_iters=args.iters)
    ordered = reorder.apply_permutations(coo, perms)
    before = reorder.clustering_metric(coo)
    after = reorder.clustering_metric(ordered)
    print(f"clustering_metric before={before:.6f} after={after:.6f}")
    print(f"identity={perms.is_identity()}")
    if args.out:
        ingest.write_coo(ordered, args.out, declare_extents=True)
    return 0


def cmd_inspect(args) -> int:
    coo = _read_input(args.input)
    sp = storage.compress(coo, storage.preset_attrs(args.format, coo.rank))
    print(_dump_levels(sp, args.format), end="")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparta",
        description="Mixed sparse/dense tensor algebra mini-compiler")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="compile and execute a .ta program")
    p.add_argument("program")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--reorder", action="store_true",
                   help="reorder read tensors for locality")
    p.add_argument("--dump-ir", action="store_true")
    p.add_argument("--dump-loops", action="store_true")
    p.add_argument("--out", help="write the last computed tensor to this path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="time a kernel on an input")
    p.add_argument("kernel", choices=sorted(_KERNEL_RANK))
    p.add_argument("input", help="tensor file or synth:banded:N:NNZ")
    p.add_argument("--format", choices=storage.PRESET_FORMATS)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--repeats", type=int, default=25)
    p.add_argument("--csv", help="append the record to this CSV file")
    p.add_argument("--reorder", action="store_true")
    p.add_argument("--iters", type=int, default=5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("convert", help="re-encode a tensor and dump its levels")
    p.add_argument("input")
    p.add_argument("--from", dest="from_format", choices=storage.PRESET_FORMATS)
    p.add_argument("--to", required=True, choices=storage.PRESET_FORMATS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("reorder", help="cluster nonzeros and report the metric")
    p.add_argument("input")
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reorder)

    p = sub.add_parser("inspect", help="print pos/crd/val arrays per level")
    p.add_argument("input")
    p.add_argument("--format", required=True, choices=storage.PRESET_FORMATS)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpartaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
