import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efgeo import expressions
from efgeo.errors import SpecError


def ev(text, q, dim=1):
    f = expressions.compile_expr(text, dim)
    return f(np.asarray(q, dtype=float))


class TestBasics:
    def test_arithmetic(self):
        assert ev("2*q1 + 1", [[3.0]]) == pytest.approx([7.0])

    def test_caret_power(self):
        assert ev("q1^2", [[3.0]]) == pytest.approx([9.0])

    def test_python_power(self):
        assert ev("q1**3", [[2.0]]) == pytest.approx([8.0])

    def test_functions_and_pi(self):
        assert ev("sin(pi/2) + cos(0)", [[0.0]]) == pytest.approx([2.0])
        assert ev("sqrt(q1)", [[4.0]]) == pytest.approx([2.0])
        assert ev("exp(0)", [[0.0]]) == pytest.approx([1.0])

    def test_multivariate(self):
        assert ev("q1*q2", [[2.0, 5.0]], dim=2) == pytest.approx([10.0])

    def test_broadcast_over_nodes(self):
        out = ev("q1 + 1", [[0.0], [1.0], [2.0]])
        assert np.allclose(out, [1.0, 2.0, 3.0])


class TestRejections:
    @pytest.mark.parametrize("bad", [
        "__import__('os')",
        "q1.real",
        "open('x')",
        "q3",                      # out of range for dim=2
        "lambda: 1",
        "[1,2]",
        "q1 if q1 > 0 else 0",
        "exec('1')",
    ])
    def test_rejected(self, bad):
        with pytest.raises(SpecError):
            expressions.compile_expr(bad, 2)

    def test_unknown_function_rejected(self):
        with pytest.raises(SpecError):
            expressions.compile_expr("frobnicate(q1)", 1)


class TestMatrixCompile:
    def test_matrix_shape(self):
        f = expressions.compile_matrix([["q1", "0"], ["0", "q1^2"]], 1)
        out = f(np.array([[2.0], [3.0]]))
        assert out.shape == (2, 2, 2)
        assert out[1, 1, 1] == pytest.approx(9.0)

    def test_vector_and_rank3(self):
        v = expressions.compile_vector(["q1", "2*q1"], 1)(np.array([[1.5]]))
        assert np.allclose(v, [[1.5, 3.0]])
        r3 = expressions.compile_rank3([[["6*q1"]]], 1)(np.array([[0.5]]))
        assert np.allclose(r3, [[[[3.0]]]])


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(-5, 5, allow_nan=False),
    b=st.floats(-5, 5, allow_nan=False),
    x=st.floats(-3, 3, allow_nan=False),
)
def test_affine_expression_matches_direct_evaluation(a, b, x):
    f = expressions.compile_expr(f"({a})*q1 + ({b})", 1)
    assert f(np.array([[x]]))[0] == pytest.approx(a * x + b, rel=1e-12, abs=1e-12)
