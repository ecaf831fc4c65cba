from pathlib import Path

import numpy as np
import pytest

from sparta.errors import IngestError
from sparta.ingest import (
    banded_matrix, read_frostt, read_matrix_market, read_tensor,
    write_coo, write_dense,
)
from sparta.storage import CooTensor
from conftest import random_coo

DATA = Path(__file__).parent / "data"


class TestMatrixMarket:
    def test_m4(self, m4):
        assert read_matrix_market(DATA / "m4.mtx").equals(m4)

    def test_empty(self):
        coo = read_matrix_market(DATA / "empty.mtx")
        assert coo.shape == (2, 2) and coo.nnz == 0

    def test_symmetric_mirrors_off_diagonal(self):
        coo = read_matrix_market(DATA / "m4_sym.mtx")
        got = {tuple(c): v for c, v in zip(map(tuple, coo.coords), coo.vals)}
        assert got == {(1, 0): 5.0, (0, 1): 5.0, (2, 2): 1.5}

    def test_pattern_defaults_to_one(self):
        coo = read_matrix_market(DATA / "pattern.mtx")
        assert coo.nnz == 3
        assert (coo.vals == 1.0).all()

    def test_integer_widened(self):
        coo = read_matrix_market(DATA / "integer.mtx")
        assert coo.vals.dtype == np.float64
        assert sorted(coo.vals) == [-2.0, 7.0]

    def test_bad_header(self):
        with pytest.raises(IngestError, match="layout"):
            read_matrix_market(DATA / "bad_header.mtx")

    def test_out_of_bounds(self):
        with pytest.raises(IngestError, match="outside"):
            read_matrix_market(DATA / "oob.mtx")

    def test_count_mismatch(self):
        with pytest.raises(IngestError, match="declares 3"):
            read_matrix_market(DATA / "count_mismatch.mtx")


class TestFrostt:
    def test_rank3(self):
        coo = read_frostt(DATA / "t3.tns")
        assert coo.shape == (3, 1, 2)
        assert coo.nnz == 2

    def test_duplicates_summed(self):
        coo = read_frostt(DATA / "dup.tns")
        assert coo.nnz == 1
        assert tuple(coo.coords[0]) == (1, 1)
        assert coo.vals[0] == 6.0

    def test_extents_comment(self):
        coo = read_frostt(DATA / "extents.tns")
        assert coo.shape == (4, 4, 4)

    def test_comments_only_is_empty(self):
        with pytest.raises(IngestError, match="empty file"):
            read_frostt(DATA / "comments_only.tns")

    def test_inconsistent_token_count(self, tmp_path):
        p = tmp_path / "bad.tns"
        p.write_text("1 1 1.0\n1 2 3 1.0\n")
        with pytest.raises(IngestError, match="expected 3 tokens"):
            read_frostt(p)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "bad.tns"
        p.write_text("1 x 1.0\n")
        with pytest.raises(IngestError, match="non-numeric"):
            read_frostt(p)


class TestWriters:
    def test_write_coo_m4(self, m4, tmp_path):
        p = tmp_path / "m4.tns"
        write_coo(m4, p)
        lines = p.read_text().strip().splitlines()
        assert len(lines) == 4
        assert lines[0] == "1 1 1.0"
        # M4's trailing empty row is only recoverable with declared extents
        write_coo(m4, p, declare_extents=True)
        assert read_frostt(p).equals(m4)

    def test_write_empty(self, tmp_path):
        p = tmp_path / "empty.tns"
        write_coo(CooTensor.from_entries((2, 2), np.zeros((0, 2)), []), p)
        assert p.read_text() == ""

    def test_declared_extents_round_trip(self, tmp_path):
        coo = CooTensor.from_entries((5, 7), [(0, 0)], [3.0])
        p = tmp_path / "loose.tns"
        write_coo(coo, p, declare_extents=True)
        assert read_frostt(p).equals(coo)

    def test_write_dense(self, tmp_path):
        p = tmp_path / "dense.txt"
        write_dense(np.arange(6, dtype=float), (2, 3), p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "2 3"
        assert [float(v) for v in lines[1].split()] == [0.0, 1.0, 2.0]

    def test_round_trip_random(self, tmp_path):
        rng = np.random.default_rng(5)
        for k in range(20):
            rank = int(rng.integers(2, 4))
            shape = tuple(int(rng.integers(1, 7)) for _ in range(rank))
            coo = random_coo(rng, shape, 0.4)
            p = tmp_path / f"t{k}.tns"
            write_coo(coo, p, declare_extents=True)
            back = read_frostt(p)
            assert back.equals(coo)
            assert all(back.coords[:, m].max() < back.shape[m] for m in range(rank)) or back.nnz == 0


def test_read_tensor_sniffs_format(m4):
    assert read_tensor(DATA / "m4.mtx").equals(m4)
    assert read_tensor(DATA / "t3.tns").shape == (3, 1, 2)


def test_read_tensor_missing_file():
    with pytest.raises(IngestError):
        read_tensor(DATA / "nope.mtx")


def test_banded_matrix_shape_and_nnz():
    coo = banded_matrix(1000, 10_000, seed=1)
    assert coo.shape == (1000, 1000)
    assert 9_000 <= coo.nnz <= 10_000
    assert (coo.coords[:, 1] >= coo.coords[:, 0]).all()
