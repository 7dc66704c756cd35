import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amplab import jets
from amplab.expr import evaluate, eval_jet, jet_of, parse_expression

from oracles import fd_richardson, sympy_derivatives

XY = ("x", "y")


def test_polynomial_jet():
    j = eval_jet(parse_expression("x*y", XY), [2.0, 3.0])
    assert j.value == 6.0
    np.testing.assert_array_equal(j.grad, [3.0, 2.0])
    np.testing.assert_array_equal(j.hess, [[0.0, 1.0], [1.0, 0.0]])
    assert not j.third.any()


def test_sine_taylor_coefficients():
    j = eval_jet(parse_expression("sin(x)", XY), [0.0, 0.7])
    assert j.value == 0.0
    assert j.grad[0] == 1.0
    assert j.hess[0, 0] == 0.0
    assert j.third[0, 0, 0] == pytest.approx(-1.0, abs=1e-15)


def test_exponential_third_derivative_against_richardson():
    e = parse_expression("exp(2*x)", ("x",))
    j = eval_jet(e, [0.3])
    assert j.third[0, 0, 0] == pytest.approx(8 * math.exp(0.6), rel=1e-14)

    def f(p):
        return float(evaluate(e, p.reshape(1, -1))[0])

    fd = fd_richardson(f, [0.3], (0, 0, 0))
    assert abs(fd - j.third[0, 0, 0]) / j.third[0, 0, 0] < 1e-7


@pytest.mark.parametrize(
    "text,point",
    [
        ("x^2*exp(y)", (0.4, -0.3)),
        ("log(2 + sin(x*y))/(1.5 + cos(y))", (0.9, 1.7)),
        ("(1 + x^2)^-1.5 * cos(x - 2*y)", (-0.6, 0.25)),
        ("exp(-x^2/2) * sin(3*y) + x^3*y^2", (1.1, -0.8)),
    ],
)
def test_derivatives_match_sympy(text, point):
    j = eval_jet(parse_expression(text, XY), point)
    ref = sympy_derivatives(text, XY, point)
    got = [j.value, j.grad, j.hess, j.third]
    for a, b in zip(got, ref):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_derivative_arrays_exactly_symmetric():
    j = eval_jet(parse_expression("sin(x*y*z) + exp(x - z)*y^3", ("x", "y", "z")), [0.3, -1.2, 0.8])
    assert np.array_equal(j.hess, j.hess.T)
    for perm in itertools.permutations(range(3)):
        assert np.array_equal(j.third, j.third.transpose(perm))


def test_product_rule_is_exact():
    coords = ("x", "y")
    a, b = parse_expression("sin(x) + y^2", coords), parse_expression("exp(x*y)", coords)
    pts = np.array([[0.3, 0.5], [-1.0, 2.0]])
    cj = jets.coordinate_jets(pts, 3)
    ja, jb = jet_of(a, cj), jet_of(b, cj)
    jab = jet_of(parse_expression("(sin(x) + y^2)*exp(x*y)", coords), cj)
    np.testing.assert_allclose((ja * jb).c, jab.c, rtol=1e-13, atol=1e-13)
    js = jet_of(parse_expression("sin(x) + y^2 + exp(x*y)", coords), cj)
    np.testing.assert_allclose((ja + jb).c, js.c, rtol=1e-14, atol=1e-14)


def test_chain_rule_compose_against_sympy():
    e = parse_expression("log(1.5 + cos(x*y))", XY)
    j = eval_jet(e, [0.7, 1.3])
    ref = sympy_derivatives("log(1.5 + cos(x*y))", XY, (0.7, 1.3))
    np.testing.assert_allclose(j.third, ref[3], rtol=1e-12, atol=1e-12)


def test_matrix_inverse_jet():
    pts = np.array([[0.2, 0.4], [1.0, -0.5]])
    x, y = jets.coordinate_jets(pts, 3)
    G = jets.stack([jets.stack([x * 0 + 2.0 + x.sin(), x * y], -1), jets.stack([x * y, y.exp() + 1.0], -1)], -2)
    Gi = jets.inv(G)
    eye = jets.einsum("...ij,...jk->...ik", G, Gi)
    target = np.broadcast_to(np.eye(2), (2, 2, 2))
    np.testing.assert_allclose(eye.val, target, atol=1e-14)
    np.testing.assert_allclose(eye.c[..., 1:], 0.0, atol=1e-13)


def test_sqrt_and_reciprocal():
    (x,) = jets.coordinate_jets(np.array([[2.0]]), 3)
    r = (x * x + 1.0).sqrt().reciprocal()
    ref = sympy_derivatives("(x^2 + 1)^(-1/2)", ("x",), (2.0,))
    d = r[0].derivatives()
    for a, b in zip(d, ref):
        np.testing.assert_allclose(a, b, rtol=1e-13)


@pytest.mark.filterwarnings("ignore:invalid value encountered:RuntimeWarning")
def test_overflow_flagged_non_finite():
    j = eval_jet(parse_expression("exp(exp(x))", ("x",)), [7.0])
    assert not j.finite


# random smooth expressions over (x, y, z) built from the grammar
_atoms = st.sampled_from(["x", "y", "z", "0.5", "1.3", "-0.7"])


def _combine(children):
    bin_ops = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
    calls = st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda t: f"{t[0]}({t[1]})")
    bounded = children.map(lambda c: f"exp(sin({c}))")
    logs = children.map(lambda c: f"log(2 + cos({c}))")
    quots = st.tuples(children, children).map(lambda t: f"({t[0]})/(1.5 + sin({t[1]}))")
    pows = children.map(lambda c: f"(1.2 + cos({c}))^2.5")
    return st.one_of(bin_ops, calls, bounded, logs, quots, pows)


# Richardson differences carry O(h^4) truncation error, so the finite-difference
# property uses shallow expressions; the sympy property below covers deep ones exactly.
shallow = st.recursive(_atoms, _combine, max_leaves=4)
deep = st.recursive(_atoms, _combine, max_leaves=7)
points3 = st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3)


@settings(max_examples=40, deadline=None, derandomize=True, database=None)
@given(shallow, points3)
def test_jet_matches_richardson_finite_differences(text, point):
    coords = ("x", "y", "z")
    e = parse_expression(text, coords)
    j = eval_jet(e, point)

    def f(p):
        return float(evaluate(e, p.reshape(1, -1))[0])

    arrays = {1: j.grad, 2: j.hess, 3: j.third}
    for deg, arr in arrays.items():
        scale = max(1.0, float(np.abs(arr).max()))
        for idx in itertools.combinations_with_replacement(range(3), deg):
            fd = fd_richardson(f, point, idx, h=1e-2)
            assert abs(fd - arr[idx]) <= 1e-6 * scale, (text, idx, fd, arr[idx])


@settings(max_examples=25, deadline=None, derandomize=True, database=None)
@given(deep, points3)
def test_jet_matches_sympy_on_deep_expressions(text, point):
    coords = ("x", "y", "z")
    j = eval_jet(parse_expression(text, coords), point)
    ref = sympy_derivatives(text, coords, point)
    for a, b in zip([j.value, j.grad, j.hess, j.third], ref):
        scale = max(1.0, float(np.abs(b).max()))
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-11 * scale)
