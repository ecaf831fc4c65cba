"""Data reordering for locality: iterative per-mode lexicographic sorting.

One pass sorts the slices of a single mode by the (sorted, flattened)
coordinates of their nonzeros, in non-increasing lexicographic order, so
slices with similar sparsity patterns become neighbors and nonzeros cluster
toward the diagonal / top-left corner. Passes cycle through the modes until
a full round leaves every mode unchanged or the round budget runs out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EngineError, SemanticError
from .storage import CooTensor

__all__ = ["ModePermutations", "lexi_order", "apply_permutations", "clustering_metric"]


@dataclass(frozen=True)
class ModePermutations:
    """One permutation per tensor mode, mapping old index -> new index."""

    perms: tuple[np.ndarray, ...]

    def __post_init__(self):
        for m, p in enumerate(self.perms):
            seen = np.zeros(len(p), dtype=bool)
            seen[p] = True
            if not seen.all():
                raise EngineError(f"mode {m}: not a bijection")

    @property
    def rank(self) -> int:
        return len(self.perms)

    def is_identity(self) -> bool:
        return all((p == np.arange(len(p))).all() for p in self.perms)

    def inverse(self) -> "ModePermutations":
        inv = []
        for p in self.perms:
            q = np.empty_like(p)
            q[p] = np.arange(len(p))
            inv.append(q)
        return ModePermutations(tuple(inv))


def _sort_mode(coords: np.ndarray, shape: tuple[int, ...], m: int) -> np.ndarray:
    """Relabeling for mode m: slice 0/1 vectors in non-increasing order.

    Comparing slice vectors non-increasingly is the same as comparing the
    ascending lists of flattened other-mode coordinates with an infinity
    sentinel appended: slices with early nonzeros come first, a slice beats
    its own proper prefix, and empty slices sort last. Ties keep their
    current relative order.
    """
    extent = shape[m]
    keys: list[list[float]] = [[] for _ in range(extent)]
    if len(coords):
        others = [k for k in range(len(shape)) if k != m]
        if others:
            flat = np.ravel_multi_index(
                tuple(coords[:, k] for k in others),
                tuple(shape[k] for k in others))
        else:
            flat = np.zeros(len(coords), dtype=np.int64)
        order = np.lexsort((flat, coords[:, m]))
        for row in order:
            keys[int(coords[row, m])].append(int(flat[row]))
    for key in keys:
        key.append(np.inf)
    slice_order = sorted(range(extent), key=lambda s: keys[s])
    relabel = np.empty(extent, dtype=np.int64)
    for new, old in enumerate(slice_order):
        relabel[old] = new
    return relabel


def lexi_order(t: CooTensor, max_iters: int = 5) -> ModePermutations:
    """Compute per-mode permutations that cluster nonzeros near the diagonal.

    ``max_iters`` bounds the number of full rounds over the modes; a round
    that relabels nothing stops the iteration early.
    """
    if max_iters < 1:
        raise SemanticError(f"max_iters must be >= 1, got {max_iters}")
    perms = [np.arange(e, dtype=np.int64) for e in t.shape]
    coords = t.coords.copy()
    for _ in range(max_iters):
        settled = True
        for m in range(t.rank):
            relabel = _sort_mode(coords, t.shape, m)
            if (relabel != np.arange(t.shape[m])).any():
                settled = False
                if len(coords):
                    coords[:, m] = relabel[coords[:, m]]
            perms[m] = relabel[perms[m]]
        if settled:
            break
    return ModePermutations(tuple(perms))


def apply_permutations(t: CooTensor, p: ModePermutations) -> CooTensor:
    """Relabel every mode of a tensor; values follow their coordinates."""
    if p.rank != t.rank:
        raise EngineError(f"{p.rank} permutations for a rank-{t.rank} tensor")
    for m, perm in enumerate(p.perms):
        if len(perm) != t.shape[m]:
            raise EngineError(
                f"mode {m}: permutation length {len(perm)} != extent {t.shape[m]}")
    coords = t.coords.copy()
    for m, perm in enumerate(p.perms):
        if len(coords):
            coords[:, m] = perm[coords[:, m]]
    return CooTensor.from_entries(t.shape, coords, t.vals)


def clustering_metric(t: CooTensor) -> float:
    """Mean normalized coordinate spread; 0.0 for perfectly diagonal patterns.

    Per nonzero, the mean over mode pairs of |c_a/E_a - c_b/E_b|, averaged
    over all nonzeros.
    """
    if t.rank < 2:
        raise SemanticError("clustering metric needs rank >= 2")
    if t.nnz == 0:
        return 0.0
    norm = t.coords / np.asarray(t.shape, dtype=np.float64)
    total = np.zeros(t.nnz)
    pairs = 0
    for a in range(t.rank):
        for b in range(a + 1, t.rank):
            total += np.abs(norm[:, a] - norm[:, b])
            pairs += 1
    return float(np.mean(total / pairs))
