import re
import zlib

import numpy as np
import pytest

from sparta import codegen as cg
from sparta import ir
from sparta.dsl import ExprClass
from sparta.engine import Binding, KERNELS, dense_oracle, interpret, make_kernel_op
from sparta.errors import SemanticError
from sparta.storage import FormatAttr, compress, preset_attrs
from conftest import random_coo

D, CU, CN, S = FormatAttr.D, FormatAttr.CU, FormatAttr.CN, FormatAttr.S


def sym(name, labels, attrs):
    return ir.TensorSym(name, tuple(labels), tuple(attrs))


def nest_for(a, b, out, static=None):
    op = ir.make_tensor_op(ExprClass.CONTRACTION, a, b, out)
    return cg.generate(ir.build_schedule(op), static)


def spmm_nest(static=None):
    return nest_for(sym("A", "ab", [D, CU]), sym("B", "bc", [D, D]),
                    sym("C", "ac", [D, D]), static)


class TestSpmmGolden:
    def test_render_matches_reference_structure(self):
        text = cg.render(spmm_nest({"c": 32}))
        assert text == (
            "for a in 0..A.d0.pos[0]\n"
            "  for pb in A.d1.pos[a]..A.d1.pos[a+1]\n"
            "    bind b = A.d1.crd[pb]\n"
            "    for c in 0..32\n"
            "      C[a*32+c] += A[pb] * B[b*32+c]\n"
        )

    def test_three_for_lines(self):
        text = cg.render(spmm_nest({"c": 32}))
        assert len(re.findall(r"^\s*for ", text, re.M)) == 3

    def test_dynamic_extent_renders_symbolically(self):
        text = cg.render(spmm_nest())
        assert "for c in 0..ext_c" in text


class TestStructureLaws:
    CASES = [
        ("spmv", "CSR", 2), ("spmv", "DCSR", 2), ("spmv", "COO", 2),
        ("spmm", "CSR", 2), ("spmm", "DCSR", 2), ("spmm", "COO", 2),
        ("ttv", "CSF", 3), ("ttv", "COO", 3), ("ttv", "ModeGeneric", 3),
        ("ttm", "CSF", 3), ("ttm", "COO", 3), ("ttm", "ModeGeneric", 3),
    ]

    @pytest.mark.parametrize("kernel,fmt,rank", CASES)
    def test_loop_and_bind_counts(self, kernel, fmt, rank):
        attrs = preset_attrs(fmt, rank)
        op = make_kernel_op(kernel, attrs)
        sched = ir.build_schedule(op)
        nest = cg.generate(sched)
        text = cg.render(nest)
        n_loops = len(re.findall(r"^\s*for ", text, re.M))
        n_binds = len(re.findall(r"^\s*bind ", text, re.M))
        sched_attrs = [sched.attrs[i] for i in sched.indices]
        assert n_loops == sum(a is not S for a in sched_attrs)
        assert n_binds == sum(a is not D for a in sched_attrs)

    def test_ttv_csf_counts(self):
        nest = cg.generate(ir.build_schedule(make_kernel_op("ttv", (CU, CU, CU))))
        text = cg.render(nest)
        assert len(re.findall(r"^\s*for ", text, re.M)) == 3
        assert len(re.findall(r"^\s*bind ", text, re.M)) == 3

    def test_unit_dense_matmul(self):
        nest = nest_for(sym("A", "ij", [D, D]), sym("B", "jk", [D, D]),
                        sym("C", "ik", [D, D]), {"i": 1, "j": 1, "k": 1})
        text = cg.render(nest)
        fors = re.findall(r"for \w+ in 0\.\.(\d+)", text)
        assert fors == ["1", "1", "1"]

    def test_mode_generic_vidx_scales_block(self):
        # innermost A value index is the block position scaled by the dense extent
        nest = nest_for(sym("A", "ijk", [CN, S, D]), sym("v", "i", [D]),
                        sym("C", "jk", [D, D]))
        c = nest.compute
        assert cg.render_expr(c.a_vidx) == "pi*ext_k+k"

    def test_coo_vidx_is_position(self):
        nest = nest_for(sym("A", "ij", [CN, S]), sym("B", "jk", [D, D]),
                        sym("C", "ik", [D, D]))
        assert cg.render_expr(nest.compute.a_vidx) == "pi"

    def test_singleton_cannot_lead(self):
        op = ir.make_tensor_op(ExprClass.CONTRACTION,
                               sym("A", "ij", [S, CU]), sym("B", "jk", [D, D]),
                               sym("C", "ik", [D, D]))
        with pytest.raises(SemanticError):
            cg.generate(ir.build_schedule(op))


class TestRenderShapes:
    def test_ttm_last_mode_structure(self):
        # C[i,j,r] = A[i,j,k] * U[k,r] with A in CSF
        nest = nest_for(sym("A", "ijk", [CU, CU, CU]), sym("U", "kr", [D, D]),
                        sym("C", "ijr", [D, D, D]))
        text = cg.render(nest)
        lines = text.strip().splitlines()
        assert len([l for l in lines if "for" in l]) == 4
        assert "C[(i*ext_j+j)*ext_r+r] += A[pk] * U[k*ext_r+r]" in lines[-1]

    def test_ttm_mode1_interleaved_dense_loop(self):
        nest = cg.generate(ir.build_schedule(make_kernel_op("ttm", (CU, CU, CU))))
        text = cg.render(nest)
        assert text == (
            "for pi in A.d0.pos[0]..A.d0.pos[1]\n"
            "  bind i = A.d0.crd[pi]\n"
            "  for r in 0..ext_r\n"
            "    for pj in A.d1.pos[pi]..A.d1.pos[pi+1]\n"
            "      bind j = A.d1.crd[pj]\n"
            "      for pk in A.d2.pos[pj]..A.d2.pos[pj+1]\n"
            "        bind k = A.d2.crd[pk]\n"
            "        C[(r*ext_j+j)*ext_k+k] += A[pk] * B[i*ext_r+r]\n"
        )


def kernel_extents(kernel, a_shape, b_shape):
    out_l, a_l, b_l = KERNELS[kernel]
    extents = dict(zip(a_l, a_shape))
    extents.update(zip(b_l, b_shape))
    return extents


def run_interpreted(kernel, coo, fmt, b):
    attrs = preset_attrs(fmt, coo.rank)
    nest = cg.generate(ir.build_schedule(make_kernel_op(kernel, attrs)))
    binding = Binding({"A": compress(coo, attrs), "B": np.asarray(b, dtype=np.float64)},
                      kernel_extents(kernel, coo.shape, np.shape(b)))
    return interpret(nest, binding)


MATRIX_FMTS = ["COO", "CSR", "DCSR"]
TENSOR_FMTS = ["COO", "CSF", "ModeGeneric"]


class TestOracleEquivalence:
    @pytest.mark.parametrize("fmt", MATRIX_FMTS)
    def test_spmv_and_spmm(self, fmt):
        rng = np.random.default_rng(zlib.crc32(fmt.encode()))
        for _ in range(25):
            shape = tuple(int(rng.integers(1, 7)) for _ in range(2))
            coo = random_coo(rng, shape, float(rng.uniform(0, 0.6)))
            v = rng.uniform(-1, 1, shape[1])
            got = run_interpreted("spmv", coo, fmt, v)
            np.testing.assert_array_equal(got, dense_oracle("spmv", coo.to_dense(), v))
            u = rng.uniform(-1, 1, (shape[1], 3))
            got = run_interpreted("spmm", coo, fmt, u)
            np.testing.assert_allclose(got, dense_oracle("spmm", coo.to_dense(), u),
                                       rtol=1e-12, atol=0)

    @pytest.mark.parametrize("fmt", TENSOR_FMTS)
    def test_ttv_and_ttm(self, fmt):
        rng = np.random.default_rng(zlib.crc32(fmt.encode()) // 2)
        for _ in range(15):
            shape = tuple(int(rng.integers(1, 6)) for _ in range(3))
            coo = random_coo(rng, shape, float(rng.uniform(0, 0.5)))
            v = rng.uniform(-1, 1, shape[0])
            got = run_interpreted("ttv", coo, fmt, v)
            np.testing.assert_allclose(got, dense_oracle("ttv", coo.to_dense(), v),
                                       rtol=1e-12, atol=0)
            u = rng.uniform(-1, 1, (shape[0], 2))
            got = run_interpreted("ttm", coo, fmt, u)
            np.testing.assert_allclose(got, dense_oracle("ttm", coo.to_dense(), u),
                                       rtol=1e-12, atol=0)

    def test_ttv_5x4x3_csf(self):
        rng = np.random.default_rng(42)
        coo = random_coo(rng, (5, 4, 3), 0.4)
        v = rng.uniform(-1, 1, 5)
        got = run_interpreted("ttv", coo, "CSF", v)
        np.testing.assert_allclose(got, dense_oracle("ttv", coo.to_dense(), v), rtol=1e-12)

    def test_attribute_independence(self):
        rng = np.random.default_rng(9)
        coo = random_coo(rng, (6, 6), 0.4)
        v = rng.uniform(-1, 1, 6)
        results = [run_interpreted("spmv", coo, fmt, v) for fmt in MATRIX_FMTS]
        for r in results[1:]:
            np.testing.assert_array_equal(results[0], r)

    def test_mid_chain_dense_level(self):
        rng = np.random.default_rng(15)
        coo = random_coo(rng, (4, 3, 4), 0.4)
        attrs = (CU, D, CU)
        nest = cg.generate(ir.build_schedule(make_kernel_op("ttv", attrs)))
        binding = Binding({"A": compress(coo, attrs), "B": rng.uniform(-1, 1, 4)},
                          kernel_extents("ttv", coo.shape, (4,)))
        got = interpret(nest, binding)
        np.testing.assert_allclose(
            got, dense_oracle("ttv", coo.to_dense(), binding.tensors["B"]), rtol=1e-12)

    def test_elementwise_sparse(self):
        rng = np.random.default_rng(21)
        coo = random_coo(rng, (5, 4), 0.5)
        dense = rng.uniform(-1, 1, (5, 4))
        op = ir.make_tensor_op(ExprClass.ELEMENTWISE,
                               sym("A", "ij", [D, CU]), sym("B", "ij", [D, D]),
                               sym("C", "ij", [D, D]))
        nest = cg.generate(ir.build_schedule(op))
        got = interpret(nest, Binding({"A": compress(coo, (D, CU)), "B": dense},
                                      {"i": 5, "j": 4}))
        np.testing.assert_array_equal(got, coo.to_dense() * dense)


class TestIrregularPatterns:
    """Label patterns beyond the named kernels: flipped operand orders,
    outer products, and a sparse elementwise square."""

    def test_flipped_dense_operand_order(self):
        # C[i,k] = A[i,j] * B[k,j]: B's own order forces k before j in B's vidx
        rng = np.random.default_rng(61)
        coo = random_coo(rng, (5, 4), 0.5)
        b = rng.uniform(-1, 1, (3, 4))
        nest = nest_for(sym("A", "ij", [D, CU]), sym("B", "kj", [D, D]),
                        sym("C", "ik", [D, D]))
        got = interpret(nest, Binding({"A": compress(coo, (D, CU)), "B": b},
                                      {"i": 5, "j": 4, "k": 3}))
        from sparta.engine import oracle_product
        want = oracle_product(("i", "k"), ("i", "j"), ("k", "j"), coo.to_dense(), b)
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_outer_product(self):
        rng = np.random.default_rng(62)
        a = rng.uniform(-1, 1, 4)
        b = rng.uniform(-1, 1, 3)
        nest = nest_for(sym("A", "i", [D]), sym("B", "j", [D]),
                        sym("C", "ij", [D, D]))
        got = interpret(nest, Binding({"A": a, "B": b}, {"i": 4, "j": 3}))
        np.testing.assert_array_equal(got, np.outer(a, b))

    def test_sparse_elementwise_square(self):
        rng = np.random.default_rng(63)
        coo = random_coo(rng, (6, 5), 0.4)
        op = ir.make_tensor_op(ExprClass.ELEMENTWISE,
                               sym("A", "ij", [D, CU]), sym("A", "ij", [D, CU]),
                               sym("C", "ij", [D, D]))
        nest = cg.generate(ir.build_schedule(op))
        got = interpret(nest, Binding({"A": compress(coo, (D, CU))}, {"i": 6, "j": 5}))
        np.testing.assert_array_equal(got, coo.to_dense() ** 2)
