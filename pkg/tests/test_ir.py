import pytest

from sparta import dsl, ir
from sparta.errors import SemanticError
from sparta.storage import FormatAttr
from test_dsl import FIG1

D, CU, CN, S = FormatAttr.D, FormatAttr.CU, FormatAttr.CN, FormatAttr.S


def sym(name, labels, attrs):
    return ir.TensorSym(name, tuple(labels), tuple(attrs))


def contraction(a, b, out):
    return ir.make_tensor_op(dsl.ExprClass.CONTRACTION, a, b, out)


class TestLowerAst:
    def test_fig1(self):
        module = ir.lower_ast(dsl.parse(FIG1))
        kinds = [type(op).__name__ for op in module.ops]
        assert kinds == ["ReadOp", "FillOp", "FillOp", "TensorOp"]
        tc = module.ops[-1]
        assert tc.kind is dsl.ExprClass.CONTRACTION
        assert (tc.a.name, tc.b.name, tc.out.name) == ("A", "B", "C")
        assert tc.maps.order == ("a", "b", "c")

    def test_empty_program(self):
        module = ir.lower_ast(dsl.parse("def main(){ }"))
        assert module.ops == ()

    def test_elementwise_kind(self):
        src = ("def main(){ IndexLabel [i]=[2]; IndexLabel [j]=[3];"
               " Tensor<double> A([i,j],CSR); Tensor<double> B([i,j],Dense);"
               " Tensor<double> C([i,j],Dense);"
               " A[i,j]=space_read(\"x.mtx\"); B[i,j]=1.0; C[i,j]=0.0;"
               " C[i,j] = A[i,j] * B[i,j]; }")
        module = ir.lower_ast(dsl.parse(src))
        assert module.ops[-1].kind is dsl.ExprClass.ELEMENTWISE

    def test_two_sparse_operands_rejected(self):
        src = ("def main(){ IndexLabel [i]=[2]; IndexLabel [j]=[2]; IndexLabel [k]=[2];"
               " Tensor<double> A([i,j],CSR); Tensor<double> B([j,k],CSR);"
               " Tensor<double> C([i,k],Dense);"
               " A[i,j]=space_read(\"a\"); B[j,k]=space_read(\"b\");"
               " C[i,k] = A[i,j] * B[j,k]; }")
        with pytest.raises(SemanticError, match="both sparse"):
            dsl_ast = dsl.parse(src)
            ir.lower_ast(dsl_ast)

    def test_sparse_output_rejected(self):
        src = ("def main(){ IndexLabel [i]=[2]; IndexLabel [j]=[2]; IndexLabel [k]=[2];"
               " Tensor<double> A([i,j],CSR); Tensor<double> B([j,k],Dense);"
               " Tensor<double> C([i,k],CSR);"
               " A[i,j]=space_read(\"x\"); B[j,k]=1.0; C[i,k] = A[i,j] * B[j,k]; }")
        with pytest.raises(SemanticError, match="dense"):
            ir.lower_ast(dsl.parse(src))

    def test_fill_of_sparse_rejected(self):
        src = ("def main(){ IndexLabel [i]=[2]; IndexLabel [j]=[2];"
               " Tensor<double> A([i,j],CSR); A[i,j]=1.0; }")
        with pytest.raises(SemanticError, match="all-dense"):
            ir.lower_ast(dsl.parse(src))


class TestSchedule:
    def test_spmm(self):
        op = contraction(sym("A", "ij", [D, CU]), sym("B", "jk", [D, D]),
                         sym("C", "ik", [D, D]))
        sched = ir.build_schedule(op)
        assert sched.indices == ("i", "j", "k")
        assert [sched.attrs[i] for i in sched.indices] == [D, CU, D]
        assert sched.source["i"] == ("A", 0)
        assert sched.source["j"] == ("A", 1)
        assert sched.source["k"] == ("B", 1)

    def test_all_dense(self):
        op = contraction(sym("A", "ij", [D, D]), sym("B", "jk", [D, D]),
                         sym("C", "ik", [D, D]))
        sched = ir.build_schedule(op)
        assert [sched.attrs[i] for i in sched.indices] == [D, D, D]

    def test_ttv_csf(self):
        op = contraction(sym("A", "ijk", [CU, CU, CU]), sym("v", "k", [D]),
                         sym("C", "ij", [D, D]))
        sched = ir.build_schedule(op)
        assert sched.indices == ("i", "j", "k")
        assert [sched.attrs[i] for i in sched.indices] == [CU, CU, CU]

    def test_ttm_mode1_order_interleaves_output(self):
        # y[r,j,k] = sum_i A[i,j,k] * u[i,r]: r must precede j and k
        op = contraction(sym("A", "ijk", [CU, CU, CU]), sym("u", "ir", [D, D]),
                         sym("y", "rjk", [D, D, D]))
        sched = ir.build_schedule(op)
        assert sched.indices == ("i", "r", "j", "k")

    def test_order_respects_every_operand(self):
        op = contraction(sym("A", "ijk", [CN, S, D]), sym("v", "i", [D]),
                         sym("C", "jk", [D, D]))
        sched = ir.build_schedule(op)
        order = sched.indices
        for labels in (("i", "j", "k"), ("i",), ("j", "k")):
            positions = [order.index(l) for l in labels]
            assert positions == sorted(positions)

    def test_schedule_deterministic(self):
        op = contraction(sym("A", "ij", [D, CU]), sym("B", "jk", [D, D]),
                         sym("C", "ik", [D, D]))
        assert ir.build_schedule(op).indices == ir.build_schedule(op).indices


def test_dump_module_golden():
    module = ir.lower_ast(dsl.parse(FIG1))
    text = ir.dump_module(module)
    assert text == (
        "label a = ?\n"
        "label b = ?\n"
        "label c = 32\n"
        "tensor A[a,b] {D,CU}\n"
        "tensor B[b,c] {D,D}\n"
        "tensor C[a,c] {D,D}\n"
        'read A "m4.mtx"\n'
        "fill B 1.0\n"
        "fill C 0.0\n"
        "tc C[a,c] = A[a,b] * B[b,c] {A:{D,CU}, B:{D,D}, C:{D,D}} order=(a,b,c)\n"
    )
