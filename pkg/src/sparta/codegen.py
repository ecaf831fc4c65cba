"""Loop-nest synthesis from an index schedule.

Per-index emission follows the storage attribute driving the index:

* ``D``  -> a dense loop ``for v in 0..extent`` (the extent is the sparse
  operand's ``pos[0]`` when that operand stores the dimension densely);
* ``CU`` -> a loop over ``pos[m]..pos[m+1]`` where ``m`` is the parent
  level's position, plus a coordinate bind from ``crd``;
* ``CN`` -> a loop over the whole ``pos[0]..pos[1]`` range plus a bind;
* ``S``  -> a coordinate bind from ``crd`` at the parent position, no loop.

Value indices use replace semantics at compressed levels (the position is
an absolute index into the next level) and scale-add at dense levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import SemanticError
from .ir import IndexSchedule
from .storage import FormatAttr, check_attr_chain

__all__ = [
    "Expr", "Const", "Var", "ExtentRef", "PosAt", "CrdAt", "Add", "Mul",
    "DenseLoop", "CompressedLoop", "SingletonBind", "Compute", "OperandInfo",
    "LoopNest", "generate", "render",
]

D, CU, CN, S = FormatAttr.D, FormatAttr.CU, FormatAttr.CN, FormatAttr.S


class Expr:
    """Base of the tiny index-expression language used for bounds and vIdx."""

    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: int


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class ExtentRef(Expr):
    """Extent of a global index, resolved from the binding at run time."""

    index: str


@dataclass(frozen=True)
class PosAt(Expr):
    operand: str
    level: int
    at: Expr


@dataclass(frozen=True)
class CrdAt(Expr):
    operand: str
    level: int
    at: Expr


@dataclass(frozen=True)
class Add(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Mul(Expr):
    lhs: Expr
    rhs: Expr


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(a, Const) and a.value == 0:
        return b
    if isinstance(b, Const) and b.value == 0:
        return a
    return Add(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(a, Const):
        if a.value == 0:
            return Const(0)
        if a.value == 1:
            return b
    if isinstance(b, Const):
        if b.value == 0:
            return Const(0)
        if b.value == 1:
            return a
    return Mul(a, b)


@dataclass(frozen=True)
class DenseLoop:
    index: str
    hi: Expr  # iteration runs 0..hi


@dataclass(frozen=True)
class CompressedLoop:
    """CU or CN level: loop over positions, binding the stored coordinate."""

    index: str
    operand: str
    level: int
    pvar: str
    lo: Expr
    hi: Expr


@dataclass(frozen=True)
class SingletonBind:
    index: str
    operand: str
    level: int
    at: Expr  # parent position, which is also this level's position


Level = DenseLoop | CompressedLoop | SingletonBind


@dataclass(frozen=True)
class Compute:
    out: str
    out_vidx: Expr
    a: str
    a_vidx: Expr
    b: str
    b_vidx: Expr


@dataclass(frozen=True)
class OperandInfo:
    name: str
    labels: tuple[str, ...]
    attrs: tuple[FormatAttr, ...]

    @property
    def is_dense(self) -> bool:
        return all(a is D for a in self.attrs)


@dataclass(frozen=True)
class LoopNest:
    levels: tuple[Level, ...]
    compute: Compute
    indices: tuple[str, ...]
    out_indices: tuple[str, ...]
    operands: tuple[OperandInfo, ...]  # (a, b, out)

    @property
    def outer_index(self) -> str:
        return self.indices[0]


def _fresh(base: str, taken: set[str]) -> str:
    name = base
    while name in taken:
        name += "_"
    taken.add(name)
    return name


def generate(schedule: IndexSchedule,
             static_extents: Mapping[str, int] | None = None) -> LoopNest:
    """Synthesize the loop nest for one tensor product.

    ``static_extents`` maps index names whose size is known at compile time
    (static labels) to that size; those extents render as literals, all
    others resolve from the binding when the nest runs.
    """
    op = schedule.op
    static = dict(static_extents or {})
    sparse = {t.name: t for t in (op.a, op.b) if not t.is_dense}
    if len(sparse) > 1:
        raise SemanticError("at most one sparse operand is supported")
    sp = next(iter(sparse.values())) if sparse else None
    if sp is not None:
        check_attr_chain(sp.attrs)

    def extent(idx: str) -> Expr:
        if idx in static:
            return Const(static[idx])
        return ExtentRef(idx)

    taken = set(schedule.indices)
    levels: list[Level] = []
    pvar_of_level: dict[int, str] = {}
    node_expr: dict[int, Expr] = {}  # sparse operand level -> its position expression

    def parent_expr(lvl: int) -> Expr:
        return node_expr[lvl - 1] if lvl else Const(0)

    for idx in schedule.indices:
        attr = schedule.attrs[idx]
        src_op, src_dim = schedule.source[idx]
        on_sparse = sp is not None and src_op == sp.name
        if attr is D:
            if on_sparse:
                hi: Expr = PosAt(sp.name, src_dim, Const(0))
                node_expr[src_dim] = add(mul(parent_expr(src_dim), extent(idx)), Var(idx))
            else:
                hi = extent(idx)
            levels.append(DenseLoop(idx, hi))
        elif attr in (CU, CN):
            if not on_sparse:
                raise SemanticError(f"index {idx!r} has attribute {attr} but no sparse source")
            pvar = _fresh("p" + idx, taken)
            pvar_of_level[src_dim] = pvar
            node_expr[src_dim] = Var(pvar)
            if attr is CU:
                parent = parent_expr(src_dim)
                lo = PosAt(sp.name, src_dim, parent)
                hi = PosAt(sp.name, src_dim, add(parent, Const(1)))
            else:
                lo = PosAt(sp.name, src_dim, Const(0))
                hi = PosAt(sp.name, src_dim, Const(1))
            levels.append(CompressedLoop(idx, sp.name, src_dim, pvar, lo, hi))
        else:  # S
            if not on_sparse:
                raise SemanticError(f"index {idx!r} has attribute S but no sparse source")
            if src_dim == 0:
                raise SemanticError("S cannot open an attribute chain")
            at = parent_expr(src_dim)
            node_expr[src_dim] = at
            levels.append(SingletonBind(idx, sp.name, src_dim, at))

    def vidx(sym) -> Expr:
        v: Expr = Const(0)
        if sp is not None and sym.name == sp.name:
            for lvl, idx in enumerate(sym.labels):
                a = sym.attrs[lvl]
                if a is D:
                    v = add(mul(v, extent(idx)), Var(idx))
                else:  # CU, CN, and S all reset to the level's absolute position
                    v = node_expr[lvl]
        else:
            for idx in sym.labels:
                v = add(mul(v, extent(idx)), Var(idx))
        return v

    compute = Compute(op.out.name, vidx(op.out), op.a.name, vidx(op.a),
                      op.b.name, vidx(op.b))
    operands = tuple(OperandInfo(t.name, t.labels, t.attrs) for t in (op.a, op.b, op.out))
    return LoopNest(tuple(levels), compute, schedule.indices, op.out.labels, operands)


def _paren(e: Expr, parent_is_mul: bool) -> str:
    text = render_expr(e)
    if parent_is_mul and isinstance(e, Add):
        return f"({text})"
    return text


def render_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, ExtentRef):
        return f"ext_{e.index}"
    if isinstance(e, PosAt):
        return f"{e.operand}.d{e.level}.pos[{render_expr(e.at)}]"
    if isinstance(e, CrdAt):
        return f"{e.operand}.d{e.level}.crd[{render_expr(e.at)}]"
    if isinstance(e, Add):
        return f"{render_expr(e.lhs)}+{render_expr(e.rhs)}"
    if isinstance(e, Mul):
        return f"{_paren(e.lhs, True)}*{_paren(e.rhs, True)}"
    raise TypeError(f"unknown expression node {e!r}")


def render(nest: LoopNest) -> str:
    """Deterministic text form: one `for` line per loop, one `bind` per
    stored coordinate, and the innermost accumulate statement."""
    lines: list[str] = []
    depth = 0

    def emit(text: str) -> None:
        lines.append("  " * depth + text)

    for level in nest.levels:
        if isinstance(level, DenseLoop):
            emit(f"for {level.index} in 0..{render_expr(level.hi)}")
            depth += 1
        elif isinstance(level, CompressedLoop):
            emit(f"for {level.pvar} in {render_expr(level.lo)}..{render_expr(level.hi)}")
            depth += 1
            emit(f"bind {level.index} = {level.operand}.d{level.level}.crd[{level.pvar}]")
        else:
            emit(f"bind {level.index} = {level.operand}.d{level.level}.crd"
                 f"[{render_expr(level.at)}]")
    c = nest.compute
    emit(f"{c.out}[{render_expr(c.out_vidx)}] += {c.a}[{render_expr(c.a_vidx)}]"
         f" * {c.b}[{render_expr(c.b_vidx)}]")
    return "\n".join(lines) + "\n"
