"""Per-dimension storage-format attributes and the compressed tensor container.

A tensor dimension is described by one of four attributes:

* ``D``  (dense): every coordinate is addressable; only the extent is stored.
* ``CU`` (compressed unique): deduplicated coordinates per parent segment.
* ``CN`` (compressed non-unique): one coordinate entry per stored path.
* ``S``  (singleton): one coordinate per parent entry, no segmentation.

Composite formats are attribute chains: CSR = [D, CU], DCSR = [CU, CU],
COO = [CN, S, ...], CSF = [CU] * rank, Mode-Generic = [CN, S, ..., D].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EngineError, SemanticError

__all__ = [
    "FormatAttr",
    "DimStorage",
    "SpTensor",
    "CooTensor",
    "PRESET_FORMATS",
    "preset_attrs",
    "check_attr_chain",
    "compress",
    "decompress",
    "validate",
]


class FormatAttr(enum.Enum):
    """The four per-dimension storage format attributes."""

    D = "D"
    CU = "CU"
    CN = "CN"
    S = "S"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def from_name(cls, name: str) -> "FormatAttr":
        try:
            return cls[name]
        except KeyError:
            raise SemanticError(f"unknown storage attribute {name!r}") from None


D, CU, CN, S = FormatAttr.D, FormatAttr.CU, FormatAttr.CN, FormatAttr.S

PRESET_FORMATS = ("Dense", "COO", "CSR", "DCSR", "CSF", "ModeGeneric")


def _as_index_array(values: Iterable[int]) -> np.ndarray:
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=np.int64)
    return arr.reshape(-1)


@dataclass(frozen=True, eq=False)
class DimStorage:
    """pos/crd pair describing one tensor dimension."""

    attr: FormatAttr
    pos: np.ndarray
    crd: np.ndarray

    @classmethod
    def make(cls, attr: FormatAttr, pos: Iterable[int] = (), crd: Iterable[int] = ()) -> "DimStorage":
        return cls(attr, _as_index_array(pos), _as_index_array(crd))


@dataclass(frozen=True, eq=False)
class SpTensor:
    """Compressed tensor: one DimStorage per dimension plus the value array.

    ``vals`` holds one float per innermost logical position; trailing dense
    levels are materialized with explicit zeros so value indexing is O(1).
    """

    shape: tuple[int, ...]
    dims: tuple[DimStorage, ...]
    vals: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def attrs(self) -> tuple[FormatAttr, ...]:
        return tuple(d.attr for d in self.dims)

    @property
    def is_dense(self) -> bool:
        return all(a is D for a in self.attrs)

    def structurally_equal(self, other: "SpTensor") -> bool:
        if self.shape != other.shape or self.attrs != other.attrs:
            return False
        for a, b in zip(self.dims, other.dims):
            if not np.array_equal(a.pos, b.pos) or not np.array_equal(a.crd, b.crd):
                return False
        return np.array_equal(self.vals, other.vals)


@dataclass(frozen=True, eq=False)
class CooTensor:
    """Canonical coordinate-list tensor: lexicographically sorted, duplicates summed."""

    shape: tuple[int, ...]
    coords: np.ndarray  # (nnz, rank) int64
    vals: np.ndarray    # (nnz,) float64

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def nnz(self) -> int:
        return len(self.vals)

    @classmethod
    def from_entries(cls, shape: Sequence[int], coords, vals) -> "CooTensor":
        """Build a canonical tensor from raw entries.

        Entries are sorted lexicographically and duplicate coordinates are
        collapsed by summing their values.
        """
        shape = tuple(int(e) for e in shape)
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, len(shape))
        vals = np.asarray(vals, dtype=np.float64).reshape(-1)
        if len(coords) != len(vals):
            raise EngineError(f"{len(coords)} coordinates but {len(vals)} values")
        if any(e < 0 for e in shape):
            raise EngineError(f"negative extent in shape {shape}")
        if len(coords):
            if coords.min() < 0:
                raise EngineError("negative coordinate")
            for m, e in enumerate(shape):
                top = int(coords[:, m].max())
                if top >= e:
                    raise EngineError(f"coordinate {top} out of range for extent {e} in mode {m}")
            order = np.lexsort(coords.T[::-1])
            coords = coords[order]
            vals = vals[order]
            if len(coords) > 1:
                keep = np.concatenate([[True], np.any(coords[1:] != coords[:-1], axis=1)])
                if not keep.all():
                    group = np.cumsum(keep) - 1
                    vals = np.bincount(group, weights=vals, minlength=int(group[-1]) + 1)
                    coords = coords[keep]
        return cls(shape, coords, vals)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.float64)
        if self.nnz:
            out[tuple(self.coords.T)] = self.vals
        return out

    def equals(self, other: "CooTensor") -> bool:
        return (self.shape == other.shape
                and np.array_equal(self.coords, other.coords)
                and np.array_equal(self.vals, other.vals))


def preset_attrs(format_name: str, rank: int) -> tuple[FormatAttr, ...]:
    """Expand a composite format name into its per-dimension attribute chain."""
    if rank < 1:
        raise SemanticError(f"rank must be >= 1, got {rank}")
    if format_name == "Dense":
        return (D,) * rank
    if format_name == "COO":
        return (CN,) + (S,) * (rank - 1)
    if format_name == "CSR":
        if rank != 2:
            raise SemanticError(f"CSR requires rank 2, got {rank}")
        return (D, CU)
    if format_name == "DCSR":
        if rank != 2:
            raise SemanticError(f"DCSR requires rank 2, got {rank}")
        return (CU, CU)
    if format_name == "CSF":
        return (CU,) * rank
    if format_name == "ModeGeneric":
        if rank < 2:
            raise SemanticError(f"ModeGeneric requires rank >= 2, got {rank}")
        return (CN,) + (S,) * (rank - 2) + (D,)
    raise SemanticError(f"unknown format name {format_name!r}")


def check_attr_chain(attrs: Sequence[FormatAttr]) -> None:
    """Reject attribute chains the storage and codegen layers cannot realize."""
    if not attrs:
        raise SemanticError("empty attribute chain")
    if attrs[0] is S:
        raise SemanticError("first level must be D, CU, or CN")
    for lvl, a in enumerate(attrs):
        if a is CN and lvl != 0:
            raise SemanticError(f"CN is only valid at level 0, found at level {lvl}")
        if a is S and attrs[lvl - 1] not in (CU, CN, S):
            raise SemanticError(f"S at level {lvl} must follow a CU, CN, or S level")


def trailing_dense_start(attrs: Sequence[FormatAttr]) -> int:
    """Index after the last non-D level; 0 when every level is dense."""
    for lvl in range(len(attrs) - 1, -1, -1):
        if attrs[lvl] is not D:
            return lvl + 1
    return 0


def compress(coo: CooTensor, attrs: Sequence[FormatAttr]) -> SpTensor:
    """Encode a coordinate-list tensor under the given attribute chain.

    Values end up in lexicographic coordinate order; trailing dense levels
    are padded with explicit zeros.
    """
    attrs = tuple(attrs)
    if len(attrs) != coo.rank:
        raise SemanticError(f"{len(attrs)} attributes for rank-{coo.rank} tensor")
    check_attr_chain(attrs)
    t = trailing_dense_start(attrs)
    coords = coo.coords

    # One structural "block" per distinct coordinate prefix over levels < t.
    if coo.nnz:
        if t:
            starts = np.concatenate(
                [[True], np.any(coords[1:, :t] != coords[:-1, :t], axis=1)])
        else:
            starts = np.zeros(coo.nnz, dtype=bool)
            starts[0] = True
        block_of_nnz = np.cumsum(starts) - 1
        block_coords = coords[starts][:, :t]
    else:
        block_of_nnz = np.zeros(0, dtype=np.int64)
        block_coords = np.zeros((0, t), dtype=np.int64)
    n_blocks = len(block_coords)

    dims: list[DimStorage] = []
    parent = np.zeros(n_blocks, dtype=np.int64)  # per-block node id at current level
    n_parents = 1
    for lvl in range(t):
        a = attrs[lvl]
        c = block_coords[:, lvl]
        if a is D:
            extent = coo.shape[lvl]
            dims.append(DimStorage.make(D, pos=[extent]))
            parent = parent * extent + c
            n_parents *= extent
        elif a is CU:
            if n_blocks:
                new = np.concatenate(
                    [[True], (parent[1:] != parent[:-1]) | (c[1:] != c[:-1])])
            else:
                new = np.zeros(0, dtype=bool)
            entry_parent = parent[new]
            crd = c[new]
            counts = np.bincount(entry_parent, minlength=n_parents)
            pos = np.concatenate([[0], np.cumsum(counts)])
            dims.append(DimStorage.make(CU, pos=pos, crd=crd))
            parent = np.cumsum(new) - 1
            n_parents = len(crd)
        elif a is CN:
            dims.append(DimStorage.make(CN, pos=[0, n_blocks], crd=c))
            parent = np.arange(n_blocks, dtype=np.int64)
            n_parents = n_blocks
        else:  # S: exactly one child coordinate per parent entry
            if n_blocks:
                dup = (parent[1:] == parent[:-1]) & (c[1:] != c[:-1])
                if dup.any():
                    raise SemanticError(
                        f"S at level {lvl} cannot represent multiple children per parent")
                first = np.concatenate([[True], parent[1:] != parent[:-1]])
                crd = c[first]
            else:
                crd = np.zeros(0, dtype=np.int64)
            dims.append(DimStorage.make(S, crd=crd))

    block_size = 1
    for lvl in range(t, coo.rank):
        extent = coo.shape[lvl]
        dims.append(DimStorage.make(D, pos=[extent]))
        block_size *= extent

    vals = np.zeros(n_parents * block_size, dtype=np.float64)
    if coo.nnz:
        vidx = parent[block_of_nnz]
        for lvl in range(t, coo.rank):
            vidx = vidx * coo.shape[lvl] + coords[:, lvl]
        vals[vidx] = coo.vals
    return SpTensor(coo.shape, tuple(dims), vals)


def decompress(sp: SpTensor) -> CooTensor:
    """Recover the coordinate list; trailing-dense explicit zeros are dropped."""
    n_nodes = 1
    coords = np.zeros((1, 0), dtype=np.int64)
    for lvl, dim in enumerate(sp.dims):
        a = dim.attr
        if a is D:
            if len(dim.pos) != 1 or len(dim.crd):
                raise EngineError(f"level {lvl}: malformed D level")
            extent = int(dim.pos[0])
            coords = np.hstack([
                np.repeat(coords, extent, axis=0),
                np.tile(np.arange(extent, dtype=np.int64), n_nodes)[:, None],
            ])
            n_nodes *= extent
        elif a is CU:
            if len(dim.pos) != n_nodes + 1:
                raise EngineError(
                    f"level {lvl}: pos has {len(dim.pos)} entries, expected {n_nodes + 1}")
            widths = np.diff(dim.pos)
            if len(dim.crd) != int(dim.pos[-1]) or (widths < 0).any():
                raise EngineError(f"level {lvl}: malformed CU pos/crd arrays")
            parents = np.repeat(np.arange(n_nodes, dtype=np.int64), widths)
            coords = np.hstack([coords[parents], dim.crd[:, None]])
            n_nodes = len(dim.crd)
        elif a is CN:
            if n_nodes != 1 or len(dim.pos) != 2 or dim.pos[0] != 0 or dim.pos[1] != len(dim.crd):
                raise EngineError(f"level {lvl}: malformed CN level")
            coords = np.hstack([np.repeat(coords, len(dim.crd), axis=0), dim.crd[:, None]])
            n_nodes = len(dim.crd)
        else:  # S
            if len(dim.crd) != n_nodes or len(dim.pos):
                raise EngineError(
                    f"level {lvl}: S crd has {len(dim.crd)} entries, expected {n_nodes}")
            coords = np.hstack([coords, dim.crd[:, None]])
    if len(sp.vals) != n_nodes:
        raise EngineError(f"vals has {len(sp.vals)} entries, expected {n_nodes}")
    vals = np.asarray(sp.vals, dtype=np.float64)
    if trailing_dense_start(sp.attrs) < sp.rank:
        keep = vals != 0.0
        coords, vals = coords[keep], vals[keep]
    return CooTensor.from_entries(sp.shape, coords, vals)


def validate(sp: SpTensor) -> list[str]:
    """Collect invariant violations; an empty list means the tensor is well formed."""
    out: list[str] = []
    if len(sp.dims) != sp.rank:
        out.append(f"tensor: {len(sp.dims)} levels for rank {sp.rank}")
        return out
    try:
        check_attr_chain(sp.attrs)
    except SemanticError as exc:
        out.append(f"tensor: {exc}")
        return out

    n_parents = 1
    for lvl, dim in enumerate(sp.dims):
        a, pos, crd, extent = dim.attr, dim.pos, dim.crd, sp.shape[lvl]
        if a is D:
            if len(pos) != 1:
                out.append(f"level {lvl}: D pos must hold exactly the extent")
            elif pos[0] != extent:
                out.append(f"level {lvl}: D pos[0]={pos[0]} != extent {extent}")
            if len(crd):
                out.append(f"level {lvl}: D crd must be empty")
            n_parents *= extent
            continue
        if len(crd) and (crd.min() < 0 or crd.max() >= extent):
            bad = int(np.argmax((crd < 0) | (crd >= extent)))
            out.append(f"level {lvl}: crd out of range at index {bad}")
        if a is CU:
            if len(pos) != n_parents + 1:
                out.append(f"level {lvl}: pos has {len(pos)} entries, expected {n_parents + 1}")
                return out
            if pos[0] != 0:
                out.append(f"level {lvl}: pos[0] must be 0")
            drops = np.nonzero(np.diff(pos) < 0)[0]
            if len(drops):
                out.append(f"level {lvl}: pos not non-decreasing at index {int(drops[0]) + 1}")
                return out
            if len(crd) != pos[-1]:
                out.append(f"level {lvl}: crd length {len(crd)} != pos[-1]={pos[-1]}")
                return out
            if len(crd) > 1:
                starts = np.zeros(len(crd), dtype=bool)
                inner = pos[1:-1]
                starts[inner[inner < len(crd)]] = True
                bad = np.nonzero(~(np.diff(crd) > 0) & ~starts[1:])[0]
                if len(bad):
                    seg = int(np.searchsorted(pos, int(bad[0]) + 1, side="right")) - 1
                    out.append(f"level {lvl}: crd not strictly increasing in segment {seg}")
            n_parents = len(crd)
        elif a is CN:
            if len(pos) != 2 or pos[0] != 0 or pos[1] != len(crd):
                out.append(f"level {lvl}: CN pos must be [0, len(crd)]")
            if len(crd) > 1 and not (np.diff(crd) >= 0).all():
                out.append(f"level {lvl}: crd not non-decreasing")
            n_parents = len(crd)
        else:  # S
            if len(pos):
                out.append(f"level {lvl}: S pos must be empty")
            if len(crd) != n_parents:
                out.append(f"level {lvl}: crd has {len(crd)} entries, expected {n_parents}")
                return out

    if len(sp.vals) != n_parents:
        out.append(f"vals: length {len(sp.vals)} != expected {n_parents}")
    return out
