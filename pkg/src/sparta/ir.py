"""In-memory tensor-algebra IR and early lowering.

The AST lowers to a :class:`TaModule`: resolved index labels, tensor symbols
annotated with per-dimension storage attributes, and an ordered op list
(read, fill, tensor product). :func:`build_schedule` then derives, per
product, the global loop order and the storage attribute driving each index,
which is everything the loop-nest generator needs.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import dsl
from .errors import SemanticError
from .storage import FormatAttr

__all__ = [
    "IndexLabel", "TensorSym", "ReadOp", "FillOp", "TensorOp",
    "IndexingMaps", "IndexSchedule", "TaModule",
    "lower_ast", "build_schedule", "make_tensor_op", "dump_module",
]

D = FormatAttr.D


@dataclass(frozen=True)
class IndexLabel:
    name: str
    extent: int | None  # None until resolved at run time


@dataclass(frozen=True)
class TensorSym:
    name: str
    labels: tuple[str, ...]
    attrs: tuple[FormatAttr, ...]

    @property
    def is_dense(self) -> bool:
        return all(a is D for a in self.attrs)


@dataclass(frozen=True)
class ReadOp:
    tensor: str
    path: str


@dataclass(frozen=True)
class FillOp:
    tensor: str
    value: float


@dataclass(frozen=True)
class IndexingMaps:
    """Global index order plus each operand's dimension -> global index map."""

    order: tuple[str, ...]
    operand_dims: tuple[tuple[str, ...], ...]  # labels per operand, (a, b, out)


@dataclass(frozen=True)
class TensorOp:
    kind: dsl.ExprClass
    a: TensorSym
    b: TensorSym
    out: TensorSym
    maps: IndexingMaps


Op = ReadOp | FillOp | TensorOp


@dataclass(frozen=True)
class TaModule:
    labels: tuple[IndexLabel, ...]
    tensors: tuple[TensorSym, ...]
    ops: tuple[Op, ...]

    def tensor(self, name: str) -> TensorSym:
        return next(t for t in self.tensors if t.name == name)


@dataclass(frozen=True)
class IndexSchedule:
    """Loop order with, per index, its driving attribute and source operand."""

    op: TensorOp
    indices: tuple[str, ...]
    attrs: dict[str, FormatAttr]
    source: dict[str, tuple[str, int]]  # index -> (operand name, dimension)


def _merge_order(priority: list[tuple[str, ...]]) -> tuple[str, ...]:
    """Precedence-preserving merge of the operands' label orders.

    Every operand's labels appear in their declared order; ties go to the
    earliest position in the priority lists (output first).
    """
    succ: dict[str, set[str]] = {}
    indeg: dict[str, int] = {}
    rank: dict[str, int] = {}
    for labels in priority:
        for pos, lab in enumerate(labels):
            rank.setdefault(lab, len(rank))
            indeg.setdefault(lab, 0)
            succ.setdefault(lab, set())
            if pos:
                prev = labels[pos - 1]
                if lab not in succ[prev]:
                    succ[prev].add(lab)
                    indeg[lab] += 1
    ready = sorted((lab for lab, d in indeg.items() if d == 0), key=rank.get)
    out: list[str] = []
    while ready:
        lab = ready.pop(0)
        out.append(lab)
        changed = False
        for nxt in succ[lab]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
                changed = True
        if changed:
            ready.sort(key=rank.get)
    if len(out) != len(indeg):
        raise SemanticError("operand index orders admit no common loop order")
    return tuple(out)


def make_tensor_op(kind: dsl.ExprClass, a: TensorSym, b: TensorSym,
                   out: TensorSym) -> TensorOp:
    """Assemble a TensorOp with its indexing maps; the loop order puts the
    output's label order first when operand orders leave a choice."""
    order = _merge_order([out.labels, a.labels, b.labels])
    maps = IndexingMaps(order, (a.labels, b.labels, out.labels))
    return TensorOp(kind, a, b, out, maps)


def lower_ast(ast: dsl.ProgramAst) -> TaModule:
    """Lower a checked AST into the tensor-algebra module."""
    labels = tuple(IndexLabel(l.name, l.extent) for l in ast.labels)
    tensors = tuple(TensorSym(t.name, t.labels, t.attrs) for t in ast.tensors)
    byname = {t.name: t for t in tensors}
    ops: list[Op] = []
    for stmt in ast.statements:
        if isinstance(stmt, dsl.ReadFill):
            ops.append(ReadOp(stmt.target.tensor, stmt.filename))
        elif isinstance(stmt, dsl.ConstFill):
            sym = byname[stmt.target.tensor]
            if not sym.is_dense:
                raise SemanticError(
                    f"constant fill of {sym.name!r} requires an all-dense format")
            ops.append(FillOp(sym.name, stmt.value))
        else:
            a, b, out = byname[stmt.rhs1.tensor], byname[stmt.rhs2.tensor], byname[stmt.lhs.tensor]
            kind = dsl.classify_expr(stmt.lhs.labels, stmt.rhs1.labels, stmt.rhs2.labels)
            if len({t.name for t in (a, b) if not t.is_dense}) > 1:
                raise SemanticError(
                    f"{a.name!r} and {b.name!r} are both sparse; "
                    "products support at most one sparse operand")
            if not out.is_dense:
                raise SemanticError(
                    f"output tensor {out.name!r} must be dense (all-D)")
            ops.append(make_tensor_op(kind, a, b, out))
    return TaModule(labels, tensors, tuple(ops))


def build_schedule(op: TensorOp) -> IndexSchedule:
    """Assign each global index its driving attribute and source dimension.

    An index appearing in the sparse operand inherits that dimension's
    attribute; indices living only in dense operands iterate densely. The
    source records which operand (and dimension) anchors the iteration.
    """
    sparse = {t.name: t for t in (op.a, op.b) if not t.is_dense}
    if len(sparse) > 1:
        raise SemanticError("at most one sparse operand is supported")
    sp = next(iter(sparse.values())) if sparse else None

    attrs: dict[str, FormatAttr] = {}
    source: dict[str, tuple[str, int]] = {}
    for idx in op.maps.order:
        if sp is not None and idx in sp.labels:
            dim = sp.labels.index(idx)
            attrs[idx] = sp.attrs[dim]
            source[idx] = (sp.name, dim)
        else:
            attrs[idx] = D
            for t in (op.a, op.b, op.out):
                if idx in t.labels:
                    source[idx] = (t.name, t.labels.index(idx))
                    break
            else:
                raise SemanticError(f"index {idx!r} appears in no operand")
    return IndexSchedule(op, op.maps.order, attrs, source)


def _attrs_str(attrs: tuple[FormatAttr, ...]) -> str:
    return "{" + ",".join(str(a) for a in attrs) + "}"


def dump_module(module: TaModule) -> str:
    """Stable one-op-per-line text for golden tests and --dump-ir."""
    lines = []
    for lab in module.labels:
        ext = "?" if lab.extent is None else str(lab.extent)
        lines.append(f"label {lab.name} = {ext}")
    for t in module.tensors:
        lines.append(f"tensor {t.name}[{','.join(t.labels)}] {_attrs_str(t.attrs)}")
    for op in module.ops:
        if isinstance(op, ReadOp):
            lines.append(f'read {op.tensor} "{op.path}"')
        elif isinstance(op, FillOp):
            lines.append(f"fill {op.tensor} {op.value!r}")
        else:
            tag = "tc" if op.kind is dsl.ExprClass.CONTRACTION else "ew"
            fmt = ", ".join(f"{t.name}:{_attrs_str(t.attrs)}" for t in (op.a, op.b, op.out))
            lines.append(
                f"{tag} {op.out.name}[{','.join(op.out.labels)}]"
                f" = {op.a.name}[{','.join(op.a.labels)}]"
                f" * {op.b.name}[{','.join(op.b.labels)}]"
                f" {{{fmt}}} order=({','.join(op.maps.order)})")
    return "\n".join(lines) + "\n"
