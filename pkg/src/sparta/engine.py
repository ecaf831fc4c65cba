"""Loop-nest execution, sequential or task-parallel, plus program-level driving.

Two execution paths share the same nest semantics:

* :func:`interpret` walks the nest in Python; it is the slow reference.
* :func:`run` compiles the nest to a native kernel (memoized per structure)
  and executes it, either in one call or chunked across a worker pool.

Parallel runs split the outermost loop into contiguous chunks that workers
pull from a shared cursor. Chunks own disjoint output rows, so the result is
bitwise identical to a sequential run. When the outermost index is summed
away (it does not appear in the output), the engine silently falls back to
sequential execution.
"""

from __future__ import annotations

import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import codegen as cg
from . import ingest, ir, reorder
from .dsl import ExprClass
from .errors import EngineError, SemanticError
from .ir import TaModule, TensorOp, TensorSym
from .storage import FormatAttr, SpTensor, compress

__all__ = [
    "Binding", "ExecConfig", "KERNELS", "make_kernel_op",
    "interpret", "run", "run_program", "dense_oracle", "oracle_product",
]


@dataclass(frozen=True)
class ExecConfig:
    mode: Literal["seq", "par"] = "seq"
    workers: int = 1
    grain: int | None = None  # outer iterations per task; None picks a default

    def __post_init__(self):
        if self.workers < 1:
            raise EngineError("worker count must be >= 1")
        if self.grain is not None and self.grain < 1:
            raise EngineError("grain must be >= 1")


@dataclass
class Binding:
    """Operand tensors plus the resolved extent of every global index."""

    tensors: dict[str, SpTensor | np.ndarray]
    extents: dict[str, int]


# ---------------------------------------------------------------------------
# binding preparation


@dataclass
class _Prepared:
    pos: dict[tuple[str, int], np.ndarray]
    crd: dict[tuple[str, int], np.ndarray]
    vals: dict[str, np.ndarray]
    out_flat: np.ndarray
    out_shape: tuple[int, ...]
    extents: dict[str, int]


def _flat_f64(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype != np.float64:
        arr = arr.astype(np.float64)
    flat = arr.reshape(-1)
    if flat.base is not None and not arr.flags.c_contiguous:
        raise EngineError(f"{what}: dense array must be C-contiguous")
    return flat


def _prepare(nest: cg.LoopNest, binding: Binding) -> _Prepared:
    ext = binding.extents
    for idx in nest.indices:
        if idx not in ext:
            raise EngineError(f"extent of index {idx!r} is unresolved")

    pos: dict[tuple[str, int], np.ndarray] = {}
    crd: dict[tuple[str, int], np.ndarray] = {}
    vals: dict[str, np.ndarray] = {}
    out_info = nest.operands[2]
    out_shape = tuple(ext[l] for l in out_info.labels)

    for n, info in enumerate(nest.operands):
        want_shape = tuple(ext[l] for l in info.labels)
        bound = binding.tensors.get(info.name)
        if bound is None:
            if n == 2:
                bound = np.zeros(out_shape, dtype=np.float64)
                binding.tensors[info.name] = bound
            else:
                raise EngineError(f"operand {info.name!r} is not bound")
        if isinstance(bound, SpTensor):
            if bound.shape != want_shape:
                raise EngineError(
                    f"{info.name}: tensor shape {bound.shape} != extents {want_shape}")
            if bound.attrs != info.attrs and not (info.is_dense and bound.is_dense):
                raise EngineError(
                    f"{info.name}: bound format {bound.attrs} != declared {info.attrs}")
            for lvl, dim in enumerate(bound.dims):
                if dim.attr is FormatAttr.D and (len(dim.pos) != 1 or dim.pos[0] != bound.shape[lvl]):
                    raise EngineError(
                        f"{info.name}: level {lvl} pos does not match extent {bound.shape[lvl]}")
                pos[(info.name, lvl)] = dim.pos
                crd[(info.name, lvl)] = dim.crd
            vals[info.name] = _flat_f64(bound.vals, info.name)
        else:
            arr = np.asarray(bound, dtype=np.float64)
            if arr.shape != want_shape and arr.shape != (int(np.prod(want_shape)),):
                raise EngineError(
                    f"{info.name}: array shape {arr.shape} != extents {want_shape}")
            if not info.is_dense:
                raise EngineError(f"{info.name}: sparse operand bound to a plain array")
            vals[info.name] = _flat_f64(arr, info.name)
    return _Prepared(pos, crd, vals, vals[out_info.name], out_shape, dict(ext))


# ---------------------------------------------------------------------------
# reference interpreter


def interpret(nest: cg.LoopNest, binding: Binding) -> np.ndarray:
    """Execute the nest by tree-walking; bounds-checked reference path."""
    prep = _prepare(nest, binding)
    env: dict[str, int] = {}

    def ev(e: cg.Expr) -> int:
        if isinstance(e, cg.Const):
            return e.value
        if isinstance(e, cg.Var):
            return env[e.name]
        if isinstance(e, cg.ExtentRef):
            return prep.extents[e.index]
        if isinstance(e, cg.PosAt):
            arr = prep.pos[(e.operand, e.level)]
            at = ev(e.at)
            if not 0 <= at < len(arr):
                raise EngineError(f"{e.operand}.d{e.level}.pos[{at}] out of bounds")
            return int(arr[at])
        if isinstance(e, cg.CrdAt):
            arr = prep.crd[(e.operand, e.level)]
            at = ev(e.at)
            if not 0 <= at < len(arr):
                raise EngineError(f"{e.operand}.d{e.level}.crd[{at}] out of bounds")
            return int(arr[at])
        if isinstance(e, cg.Add):
            return ev(e.lhs) + ev(e.rhs)
        if isinstance(e, cg.Mul):
            return ev(e.lhs) * ev(e.rhs)
        raise TypeError(f"unknown expression {e!r}")

    c = nest.compute
    out, av, bv = prep.vals[c.out], prep.vals[c.a], prep.vals[c.b]
    levels = nest.levels

    def load(arr: np.ndarray, vidx: int, what: str) -> float:
        if not 0 <= vidx < len(arr):
            raise EngineError(f"value index {vidx} out of bounds for {what}")
        return arr[vidx]

    def walk(d: int) -> None:
        if d == len(levels):
            oi = ev(c.out_vidx)
            prod = load(av, ev(c.a_vidx), c.a) * load(bv, ev(c.b_vidx), c.b)
            if not 0 <= oi < len(out):
                raise EngineError(f"value index {oi} out of bounds for {c.out}")
            out[oi] += prod
            return
        lvl = levels[d]
        if isinstance(lvl, cg.DenseLoop):
            for v in range(ev(lvl.hi)):
                env[lvl.index] = v
                walk(d + 1)
        elif isinstance(lvl, cg.CompressedLoop):
            lo, hi = ev(lvl.lo), ev(lvl.hi)
            arr = prep.crd[(lvl.operand, lvl.level)]
            for p in range(lo, hi):
                env[lvl.pvar] = p
                env[lvl.index] = int(arr[p]) if 0 <= p < len(arr) else _oob(lvl, p)
                walk(d + 1)
        else:
            p = ev(lvl.at)
            arr = prep.crd[(lvl.operand, lvl.level)]
            env[lvl.index] = int(arr[p]) if 0 <= p < len(arr) else _oob(lvl, p)
            walk(d + 1)

    walk(0)
    return prep.out_flat.reshape(prep.out_shape)


def _oob(lvl, p):
    raise EngineError(f"{lvl.operand}.d{lvl.level}.crd[{p}] out of bounds")


# ---------------------------------------------------------------------------
# compiled execution


_KERNEL_CACHE: dict[str, object] = {}
_KERNEL_LOCK = threading.Lock()
_POOLS: dict[int, ThreadPoolExecutor] = {}
_POOL_LOCK = threading.Lock()


def _emit_source(nest: cg.LoopNest) -> tuple[str, list]:
    """Translate the nest into Python source for JIT compilation.

    Returns the source and an argument plan: each entry is one of
    ("pos", name, lvl), ("crd", name, lvl), ("vals", opnum), ("ext", index).
    """
    idx_no = {idx: n for n, idx in enumerate(nest.indices)}
    op_no: dict[str, int] = {}
    for n, info in enumerate(nest.operands):
        op_no.setdefault(info.name, n)

    used_pos: set[tuple[str, int]] = set()
    used_crd: set[tuple[str, int]] = set()
    used_ext: set[str] = set()

    def scan(e: cg.Expr) -> None:
        if isinstance(e, cg.PosAt):
            used_pos.add((e.operand, e.level))
            scan(e.at)
        elif isinstance(e, cg.CrdAt):
            used_crd.add((e.operand, e.level))
            scan(e.at)
        elif isinstance(e, cg.ExtentRef):
            used_ext.add(e.index)
        elif isinstance(e, (cg.Add, cg.Mul)):
            scan(e.lhs)
            scan(e.rhs)

    for lvl in nest.levels:
        if isinstance(lvl, cg.DenseLoop):
            scan(lvl.hi)
        elif isinstance(lvl, cg.CompressedLoop):
            scan(lvl.lo)
            scan(lvl.hi)
            used_crd.add((lvl.operand, lvl.level))
        else:
            used_crd.add((lvl.operand, lvl.level))
            scan(lvl.at)
    for e in (nest.compute.out_vidx, nest.compute.a_vidx, nest.compute.b_vidx):
        scan(e)

    plan: list = []
    args: list[str] = ["lo", "hi"]
    for idx in nest.indices:
        if idx in used_ext:
            plan.append(("ext", idx))
            args.append(f"e{idx_no[idx]}")
    max_level = max((lvl for _, lvl in used_pos | used_crd), default=-1)
    for name, n in sorted(op_no.items(), key=lambda kv: kv[1]):
        for lvl in range(max_level + 1):
            if (name, lvl) in used_pos:
                plan.append(("pos", name, lvl))
                args.append(f"a{n}_pos{lvl}")
            if (name, lvl) in used_crd:
                plan.append(("crd", name, lvl))
                args.append(f"a{n}_crd{lvl}")
    for n in range(3):
        plan.append(("vals", n))
        args.append(f"a{n}_vals")

    def px(e: cg.Expr) -> str:
        if isinstance(e, cg.Const):
            return str(e.value)
        if isinstance(e, cg.Var):
            return names[e.name]
        if isinstance(e, cg.ExtentRef):
            return f"e{idx_no[e.index]}"
        if isinstance(e, cg.PosAt):
            return f"a{op_no[e.operand]}_pos{e.level}[{px(e.at)}]"
        if isinstance(e, cg.CrdAt):
            return f"a{op_no[e.operand]}_crd{e.level}[{px(e.at)}]"
        if isinstance(e, cg.Add):
            return f"({px(e.lhs)} + {px(e.rhs)})"
        if isinstance(e, cg.Mul):
            return f"({px(e.lhs)} * {px(e.rhs)})"
        raise TypeError(f"unknown expression {e!r}")

    names: dict[str, str] = {}
    for lvl in nest.levels:
        if isinstance(lvl, cg.CompressedLoop):
            names[lvl.pvar] = f"q{idx_no[lvl.index]}"
        names[lvl.index] = f"v{idx_no[lvl.index]}"

    lines = [f"def kernel({', '.join(args)}):"]
    depth = 1

    def emit(text: str) -> None:
        lines.append("    " * depth + text)

    for d, lvl in enumerate(nest.levels):
        if isinstance(lvl, cg.DenseLoop):
            bound = "range(lo, hi)" if d == 0 else f"range({px(lvl.hi)})"
            emit(f"for {names[lvl.index]} in {bound}:")
            depth += 1
        elif isinstance(lvl, cg.CompressedLoop):
            q = names[lvl.pvar]
            bound = "range(lo, hi)" if d == 0 else f"range({px(lvl.lo)}, {px(lvl.hi)})"
            emit(f"for {q} in {bound}:")
            depth += 1
            emit(f"{names[lvl.index]} = a{op_no[lvl.operand]}_crd{lvl.level}[{q}]")
        else:
            emit(f"{names[lvl.index]} = a{op_no[lvl.operand]}_crd{lvl.level}[{px(lvl.at)}]")
    c = nest.compute
    emit(f"a{op_no[c.out]}_vals[{px(c.out_vidx)}] += "
         f"a{op_no[c.a]}_vals[{px(c.a_vidx)}] * a{op_no[c.b]}_vals[{px(c.b_vidx)}]")
    return "\n".join(lines) + "\n", plan


def _compile_kernel(source: str):
    with _KERNEL_LOCK:
        kern = _KERNEL_CACHE.get(source)
        if kern is None:
            import numba

            ns: dict = {}
            exec(source, ns)  # source is generated by _emit_source, not user input
            kern = numba.njit(nogil=True, boundscheck=True, fastmath=False)(ns["kernel"])
            _KERNEL_CACHE[source] = kern
        return kern


def _pool(workers: int) -> ThreadPoolExecutor:
    with _POOL_LOCK:
        pool = _POOLS.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=workers,
                                      thread_name_prefix=f"sparta-w{workers}")
            _POOLS[workers] = pool
        return pool


def _outer_domain(nest: cg.LoopNest, prep: _Prepared) -> tuple[int, int]:
    outer = nest.levels[0]

    def ev(e: cg.Expr) -> int:
        if isinstance(e, cg.Const):
            return e.value
        if isinstance(e, cg.ExtentRef):
            return prep.extents[e.index]
        if isinstance(e, cg.PosAt):
            return int(prep.pos[(e.operand, e.level)][ev(e.at)])
        if isinstance(e, cg.Add):
            return ev(e.lhs) + ev(e.rhs)
        if isinstance(e, cg.Mul):
            return ev(e.lhs) * ev(e.rhs)
        raise EngineError("outer bound depends on a loop variable")

    if isinstance(outer, cg.DenseLoop):
        return 0, ev(outer.hi)
    if isinstance(outer, cg.CompressedLoop):
        return ev(outer.lo), ev(outer.hi)
    raise EngineError("nest cannot start with a singleton bind")


def _chunks(nest: cg.LoopNest, prep: _Prepared, lo: int, hi: int,
            grain: int) -> list[tuple[int, int]]:
    bounds = list(range(lo, hi, grain)) + [hi]
    outer = nest.levels[0]
    if isinstance(outer, cg.CompressedLoop):
        # positions sharing a coordinate must stay in one chunk so output
        # rows are written by exactly one task (CN stores duplicates)
        crd = prep.crd[(outer.operand, outer.level)]
        for k in range(1, len(bounds) - 1):
            b = bounds[k]
            while lo < b < hi and crd[b] == crd[b - 1]:
                b += 1
            bounds[k] = b
    out: list[tuple[int, int]] = []
    for a, b in zip(bounds, bounds[1:]):
        if b > a:
            out.append((a, b))
    return out


def run(nest: cg.LoopNest, binding: Binding, cfg: ExecConfig = ExecConfig()) -> np.ndarray:
    """Execute a nest against bound tensors; returns the dense output array.

    The output operand accumulates in place when the binding carries it
    (programs fill it first); otherwise a zero array is allocated.
    """
    prep = _prepare(nest, binding)
    source, plan = _emit_source(nest)
    kern = _compile_kernel(source)

    args = []
    for item in plan:
        if item[0] == "ext":
            args.append(prep.extents[item[1]])
        elif item[0] == "pos":
            args.append(prep.pos[(item[1], item[2])])
        elif item[0] == "crd":
            args.append(prep.crd[(item[1], item[2])])
        else:
            args.append(prep.vals[nest.operands[item[1]].name])
    args = tuple(args)

    lo, hi = _outer_domain(nest, prep)
    parallel = (cfg.mode == "par" and hi > lo
                and nest.outer_index in nest.out_indices)
    try:
        if not parallel:
            kern(lo, hi, *args)
        else:
            grain = cfg.grain or max(1, (hi - lo) // (8 * cfg.workers))
            chunks = _chunks(nest, prep, lo, hi, grain)
            cursor = itertools.count()

            def worker():
                while True:
                    t = next(cursor)
                    if t >= len(chunks):
                        return
                    clo, chi = chunks[t]
                    kern(clo, chi, *args)

            futures = [_pool(cfg.workers).submit(worker) for _ in range(cfg.workers)]
            for f in futures:
                f.result()
    except IndexError as exc:
        raise EngineError(f"value or position index out of bounds: {exc}") from exc
    return prep.out_flat.reshape(prep.out_shape)


# ---------------------------------------------------------------------------
# named kernels and the dense reference

# label patterns per kernel; TTV and TTM contract the first mode
KERNELS: dict[str, tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]] = {
    "spmv": (("i",), ("i", "j"), ("j",)),
    "spmm": (("i", "r"), ("i", "j"), ("j", "r")),
    "ttv": (("j", "k"), ("i", "j", "k"), ("i",)),
    "ttm": (("r", "j", "k"), ("i", "j", "k"), ("i", "r")),
}


def make_kernel_op(kernel: str, attrs: tuple[FormatAttr, ...],
                   a: str = "A", b: str = "B", out: str = "C") -> TensorOp:
    """Build the TensorOp for a named kernel with the sparse operand's attrs."""
    try:
        out_l, a_l, b_l = KERNELS[kernel]
    except KeyError:
        raise SemanticError(f"unknown kernel {kernel!r}") from None
    if len(attrs) != len(a_l):
        raise SemanticError(
            f"kernel {kernel!r} needs a rank-{len(a_l)} input, format has {len(attrs)} levels")
    dense = lambda labs: (FormatAttr.D,) * len(labs)
    return ir.make_tensor_op(
        ExprClass.CONTRACTION,
        TensorSym(a, a_l, tuple(attrs)),
        TensorSym(b, b_l, dense(b_l)),
        TensorSym(out, out_l, dense(out_l)))


def oracle_product(out_labels, a_labels, b_labels, a: np.ndarray,
                   b: np.ndarray) -> np.ndarray:
    """Naive nested-loop product; the trusted baseline for every kernel test."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != len(a_labels) or b.ndim != len(b_labels):
        raise EngineError("operand rank does not match its label list")
    extents: dict[str, int] = {}
    for labs, arr in ((a_labels, a), (b_labels, b)):
        for lab, e in zip(labs, arr.shape):
            if extents.setdefault(lab, e) != e:
                raise EngineError(f"extent mismatch for label {lab!r}")
    order = list(dict.fromkeys(list(out_labels) + list(a_labels) + list(b_labels)))
    out = np.zeros(tuple(extents[l] for l in out_labels), dtype=np.float64)
    for point in itertools.product(*(range(extents[l]) for l in order)):
        at = dict(zip(order, point))
        ai = tuple(at[l] for l in a_labels)
        bi = tuple(at[l] for l in b_labels)
        oi = tuple(at[l] for l in out_labels)
        out[oi] += a[ai] * b[bi]
    return out


def dense_oracle(kernel: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Reference result for a named kernel on dense operands."""
    if kernel not in KERNELS:
        raise SemanticError(f"unknown kernel {kernel!r}")
    out_l, a_l, b_l = KERNELS[kernel]
    return oracle_product(out_l, a_l, b_l, a, b)


# ---------------------------------------------------------------------------
# whole-program execution


def run_program(module: TaModule, cfg: ExecConfig = ExecConfig(), *,
                reorder_data: bool = False, reorder_iters: int = 5,
                ) -> dict[str, SpTensor | np.ndarray]:
    """Execute a module's ops in order and return every tensor's final value.

    Reads resolve dynamic index extents from the file, then compress into the
    declared format (optionally reordered first). Fills materialize dense
    constants. Products compile to a nest and run under ``cfg``.
    """
    extents: dict[str, int] = {
        l.name: l.extent for l in module.labels if l.extent is not None}
    static = dict(extents)
    env: dict[str, SpTensor | np.ndarray] = {}

    def resolve(sym: TensorSym, shape: tuple[int, ...], origin: str) -> None:
        for lab, e in zip(sym.labels, shape):
            have = extents.get(lab)
            if have is None:
                extents[lab] = int(e)
            elif have != e:
                raise EngineError(
                    f"{origin}: extent {e} for label {lab!r} conflicts with {have}")

    for op in module.ops:
        if isinstance(op, ir.ReadOp):
            sym = module.tensor(op.tensor)
            coo = ingest.read_tensor(op.path)
            if coo.rank != len(sym.labels):
                raise EngineError(
                    f"{op.path}: rank-{coo.rank} data read into rank-{len(sym.labels)} "
                    f"tensor {sym.name!r}")
            if reorder_data:
                perms = reorder.lexi_order(coo, max_iters=reorder_iters)
                coo = reorder.apply_permutations(coo, perms)
            resolve(sym, coo.shape, op.path)
            env[sym.name] = compress(coo, sym.attrs)
        elif isinstance(op, ir.FillOp):
            sym = module.tensor(op.tensor)
            try:
                shape = tuple(extents[l] for l in sym.labels)
            except KeyError as exc:
                raise EngineError(
                    f"fill of {sym.name!r}: extent of label {exc.args[0]!r} "
                    "is unresolved (no prior read defines it)") from None
            env[sym.name] = np.full(shape, op.value, dtype=np.float64)
        else:
            nest = cg.generate(ir.build_schedule(op), static)
            binding = Binding(env, extents)
            env[op.out.name] = run(nest, binding, cfg)
    return env
