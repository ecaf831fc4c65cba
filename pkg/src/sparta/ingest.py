"""Readers and writers for Matrix Market matrices and FROSTT tensors.

Both formats are 1-based text files; everything is converted to 0-based
canonical :class:`~sparta.storage.CooTensor` on the way in.
"""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from .errors import IngestError
from .storage import CooTensor

__all__ = [
    "read_matrix_market",
    "read_frostt",
    "read_tensor",
    "write_coo",
    "write_dense",
    "banded_matrix",
]

_MM_FIELDS = ("real", "integer", "pattern")
_MM_SYMMETRIES = ("general", "symmetric")


def read_matrix_market(path: str | os.PathLike) -> CooTensor:
    """Parse a `%%MatrixMarket matrix coordinate` file into a rank-2 tensor.

    Supports real/integer/pattern fields and general/symmetric storage;
    symmetric entries are mirrored (diagonal not duplicated) and pattern
    entries get value 1.0.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.strip().split()
        if len(parts) < 5 or parts[0] != "%%MatrixMarket" or parts[1] != "matrix":
            raise IngestError(f"{path}: missing %%MatrixMarket matrix header")
        layout, field, symmetry = parts[2], parts[3], parts[4]
        if layout != "coordinate":
            raise IngestError(f"{path}: unsupported layout {layout!r} (only coordinate)")
        if field not in _MM_FIELDS:
            raise IngestError(f"{path}: unsupported field {field!r}")
        if symmetry not in _MM_SYMMETRIES:
            raise IngestError(f"{path}: unsupported symmetry {symmetry!r}")

        dims_line = None
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            dims_line = stripped
            break
        if dims_line is None:
            raise IngestError(f"{path}: missing dimensions line")
        try:
            nrows, ncols, nnz = (int(tok) for tok in dims_line.split())
        except ValueError:
            raise IngestError(f"{path}: bad dimensions line {dims_line!r}") from None

        rows, cols, vals = [], [], []
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            toks = stripped.split()
            want = 2 if field == "pattern" else 3
            if len(toks) != want:
                raise IngestError(f"{path}: expected {want} tokens, got {stripped!r}")
            try:
                i, j = int(toks[0]), int(toks[1])
                v = 1.0 if field == "pattern" else float(toks[2])
            except ValueError:
                raise IngestError(f"{path}: non-numeric token in {stripped!r}") from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise IngestError(f"{path}: entry ({i}, {j}) outside {nrows}x{ncols}")
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(v)
        if len(rows) != nnz:
            raise IngestError(f"{path}: header declares {nnz} entries, found {len(rows)}")

    if symmetry == "symmetric":
        extra = [(j, i, v) for i, j, v in zip(rows, cols, vals) if i != j]
        rows += [e[0] for e in extra]
        cols += [e[1] for e in extra]
        vals += [e[2] for e in extra]
    coords = np.column_stack([rows, cols]) if rows else np.zeros((0, 2), dtype=np.int64)
    return CooTensor.from_entries((nrows, ncols), coords, vals)


def read_frostt(path: str | os.PathLike) -> CooTensor:
    """Parse a FROSTT text tensor (1-based indices, one value per line).

    The rank is inferred from the first data line. Extents default to the
    per-mode maximum index; an initial comment of the form ``# e1 e2 ...``
    overrides them. Duplicate coordinates are summed.
    """
    declared: list[int] | None = None
    coords: list[list[int]] = []
    vals: list[float] = []
    rank = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                if rank is None and declared is None:
                    toks = stripped[1:].split()
                    if toks and all(t.isdigit() for t in toks):
                        declared = [int(t) for t in toks]
                continue
            toks = stripped.split()
            if rank is None:
                rank = len(toks) - 1
                if rank < 1:
                    raise IngestError(f"{path}:{lineno}: expected indices and a value")
            elif len(toks) != rank + 1:
                raise IngestError(
                    f"{path}:{lineno}: expected {rank + 1} tokens, got {len(toks)}")
            try:
                idx = [int(t) for t in toks[:rank]]
                v = float(toks[rank])
            except ValueError:
                raise IngestError(f"{path}:{lineno}: non-numeric token in {stripped!r}") from None
            if any(c < 1 for c in idx):
                raise IngestError(f"{path}:{lineno}: indices are 1-based")
            coords.append([c - 1 for c in idx])
            vals.append(v)
    if rank is None:
        raise IngestError(f"{path}: empty file (no data lines)")

    arr = np.asarray(coords, dtype=np.int64)
    if declared is not None and len(declared) == rank:
        shape = tuple(declared)
        for m in range(rank):
            top = int(arr[:, m].max())
            if top >= shape[m]:
                raise IngestError(
                    f"{path}: coordinate {top + 1} exceeds declared extent {shape[m]} in mode {m}")
    else:
        shape = tuple(int(arr[:, m].max()) + 1 for m in range(rank))
    return CooTensor.from_entries(shape, arr, vals)


def read_tensor(path: str | os.PathLike) -> CooTensor:
    """Read either supported format, sniffing the Matrix Market banner."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline()
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from None
    if first.startswith("%%MatrixMarket"):
        return read_matrix_market(path)
    return read_frostt(path)


def write_coo(t: CooTensor, path: str | os.PathLike, declare_extents: bool = False) -> None:
    """Write FROSTT-style text: 1-based indices then the value, one entry per line.

    With ``declare_extents`` a leading ``# e1 e2 ...`` comment pins the shape,
    which read_frostt otherwise infers from the maximum indices.
    """
    try:
        with open(path, "w", encoding="utf-8") as fh:
            if declare_extents:
                fh.write("# " + " ".join(str(e) for e in t.shape) + "\n")
            for row, v in zip(t.coords, t.vals):
                fh.write(" ".join(str(int(c) + 1) for c in row) + " " + repr(float(v)) + "\n")
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from None


def write_dense(values: np.ndarray, shape: Sequence[int], path: str | os.PathLike) -> None:
    """Write a dense tensor as text: an extents line, then rows of the innermost mode."""
    shape = tuple(int(e) for e in shape)
    arr = np.asarray(values, dtype=np.float64).reshape(shape)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(" ".join(str(e) for e in shape) + "\n")
            inner = shape[-1] if shape else 1
            for row in arr.reshape(-1, inner) if inner else []:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from None


def banded_matrix(n: int, nnz: int, seed: int = 0) -> CooTensor:
    """Deterministic n-by-n band matrix with roughly ``nnz`` stored entries.

    Used by the bench subcommand's ``synth:banded:N:NNZ`` inputs.
    """
    per_row = max(1, round(nnz / n))
    rows = np.repeat(np.arange(n, dtype=np.int64), per_row)
    cols = rows + np.tile(np.arange(per_row, dtype=np.int64), n)
    np.minimum(cols, n - 1, out=cols)
    keys = np.unique(rows * n + cols)
    coords = np.column_stack([keys // n, keys % n])
    vals = np.random.default_rng(seed).uniform(0.5, 1.5, size=len(keys))
    return CooTensor.from_entries((n, n), coords, vals)
