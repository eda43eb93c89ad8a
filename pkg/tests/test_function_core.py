import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiauto import catalogue as C
from multiauto.constructions import make_green_kernel, make_nemytskii, make_tensor_product
from multiauto.errors import (DimensionMismatch, EmptyList, FamilyNotUnbounded, ParseError,
                              SingularPoint, SupBoundViolation)
from multiauto.expr import (FunctionExpr, T, X, cos, evaluate, kink_arguments, parse_node, sample,
                            scalar, shift, sin, to_prefix)
from multiauto.families import BoundedSetSpec, GridWindow, ScalarSource, SequenceFamily

SQRT2 = math.sqrt(2.0)

ops = st.sampled_from(["sin", "cos", "tanh", "atan", "neg", "abs"])
leaves = st.one_of(st.sampled_from(["t0", "t1", "x0"]),
                   st.floats(-5, 5, allow_nan=False).map(repr))


@st.composite
def expressions(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(leaves)
    kind = draw(st.sampled_from(["unary", "add", "mul", "sub"]))
    if kind == "unary":
        return f"({draw(ops)} {draw(expressions(depth=depth - 1))})"
    a = draw(expressions(depth=depth - 1))
    b = draw(expressions(depth=depth - 1))
    return f"({kind} {a} {b})"


@given(expressions())
def test_prefix_round_trip(text):
    f = FunctionExpr.parse(text, 2, 1)
    g = FunctionExpr.parse(f.to_prefix(), 2, 1)
    assert g.to_prefix() == f.to_prefix()
    pts = np.array([[0.3, -1.2], [2.0, 0.7]])
    xs = np.array([[0.5], [-1.5]])
    assert np.array_equal(f.evaluate(pts, xs), g.evaluate(pts, xs))


@given(expressions(), st.floats(-50, 50), st.floats(-50, 50), st.floats(-3, 3))
def test_evaluation_is_deterministic(text, a, b, x):
    f = FunctionExpr.parse(text, 2, 1)
    first = evaluate(f, [a, b], [x])
    assert np.array_equal(first, evaluate(f, [a, b], [x]))


BOUNDED = [e.name for e in C.ENTRIES if e.kind == "function" and C.get(e.name).sup_bound is not None]


@pytest.mark.parametrize("name", BOUNDED)
def test_sup_bound_respected_on_dense_grids(name):
    f = C.get(name)
    n = f.arity_time
    pts = GridWindow.cube(n, -40.0, 40.0, {1: 4001, 2: 161, 3: 31}[n]).points()
    states = np.linspace(-3, 3, 7)[:, None] if f.arity_state else None
    vals = sample(f, pts, states)
    norms = np.linalg.norm(vals, axis=-1)
    assert np.max(norms) <= f.sup_bound * (1 + 1e-9)


def test_sup_bound_violation_raises():
    f = scalar(2.0 * sin(T(0)), sup_bound=1.0)
    with pytest.raises(SupBoundViolation):
        f.evaluate(np.array([[math.pi / 2]]))


@pytest.mark.parametrize("text", ["(div 1 t0)", "(ln (sub t0 t0))", "(sqrt (sub t0 1))"])
def test_singular_points_raise(text):
    f = FunctionExpr.parse(text, 1, 0)
    with pytest.raises(SingularPoint):
        evaluate(f, [0.0])


@pytest.mark.parametrize("text", ["(sin", "(frob t0)", "(sin t0 t0)", ")", "(add)"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        FunctionExpr.parse(text, 1, 0)


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        FunctionExpr.parse("(sin t1)", 1, 0)
    f = C.two_tone()
    with pytest.raises(DimensionMismatch):
        evaluate(f, [0.0, 1.0])
    with pytest.raises(DimensionMismatch):
        evaluate(C.vie_nonlinearity(), [0.0, 1.0])


def test_two_tone_values():
    t = np.linspace(-3, 3, 7)
    vals = C.two_tone().evaluate(t[:, None])[:, 0]
    assert np.allclose(vals, np.sin(t) + np.sin(SQRT2 * t), atol=0, rtol=1e-15)


def test_levitan_values():
    t = np.linspace(-3, 3, 7)
    vals = C.levitan().evaluate(t[:, None])[:, 0]
    assert np.allclose(vals, np.sin(1 / (2 + np.cos(t) + np.cos(SQRT2 * t))), rtol=1e-14)


@given(st.floats(-5, 5), st.floats(-20, 20), st.floats(-20, 20))
def test_tensor_bilinearity(alpha, t, s):
    f = scalar(sin(T(0)), sup_bound=1.0)
    g = scalar(cos(SQRT2 * T(0)), sup_bound=1.0)
    af = scalar(alpha * sin(T(0)))
    base = make_tensor_product([f], [g]).evaluate(np.array([t, s]))
    scaled = make_tensor_product([af], [g]).evaluate(np.array([t, s]))
    assert np.allclose(scaled, alpha * base, rtol=1e-12, atol=1e-14)


def test_tensor_matrix_layout():
    fs = [scalar(sin(T(0))), scalar(cos(T(0)))]
    gs = [scalar(sin(SQRT2 * T(0))), scalar(cos(SQRT2 * T(0)))]
    prod = make_tensor_product(fs, gs)
    t, s = 0.4, -1.1
    expect = np.outer([math.sin(t), math.cos(t)], [math.sin(SQRT2 * s), math.cos(SQRT2 * s)]).ravel()
    assert prod.arity_time == 2 and prod.out_dim == 4
    assert np.allclose(evaluate(prod, [t, s]), expect, rtol=1e-14)
    with pytest.raises(EmptyList):
        make_tensor_product([], gs)


@given(st.floats(-30, 30), st.floats(-3, 3))
def test_nemytskii_identity_outer(t, x):
    inner = FunctionExpr(1, 1, (sin(T(0)) * X(0) + cos(X(0)),))
    ident = FunctionExpr(1, 1, (X(0),), lipschitz_in_state=1.0)
    comp = make_nemytskii(ident, inner)
    assert np.array_equal(evaluate(comp, [t], [x]), evaluate(inner, [t], [x]))


def test_nemytskii_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        make_nemytskii(C.atan_outer(), C.tensor())


def _phi_integral(t, s):
    return math.sin(t) - math.sin(s) + (math.sin(SQRT2 * t) - math.sin(SQRT2 * s)) / SQRT2


def test_green_kernel_values():
    g = C.green_exp()
    pts = [(2.0, 1.0), (5.0, 1.0), (0.5, 0.5)]
    for t, s in pts:
        expect = math.exp(_phi_integral(t, s) - 3.0 * (t - s)) * 0.7
        assert evaluate(g, [t, s], [0.7])[0] == pytest.approx(expect, rel=1e-10)
    # linear in the state
    assert evaluate(g, [2.0, 1.0], [0.0])[0] == 0.0


def test_green_kernel_cut_below_diagonal():
    g = C.green_exp()
    # one cutoff width below the diagonal the factor exp(-(r/w)^2) is e^{-1}
    t, s = 1.0, 1.1
    expect = math.exp(_phi_integral(t, s) + 3.0 * 0.1 - 1.0)
    assert evaluate(g, [t, s], [1.0])[0] == pytest.approx(expect, rel=1e-10)
    assert abs(evaluate(g, [0.0, 2.0], [1.0])[0]) < 1e-100


def test_green_kernel_parameters():
    phi = scalar(cos(T(0)), sup_bound=1.0)
    g = make_green_kernel(phi, (2.0, 1.0))
    expect = 2.0 * math.exp(math.sin(1.0) - 1.0)
    assert evaluate(g, [1.0, 0.0], [1.0])[0] == pytest.approx(expect, rel=1e-10)
    with pytest.raises(ValueError):
        make_green_kernel(phi, (1.0, 0.0))


def test_shift_matches_translate():
    f = C.two_tone()
    g = shift(f, [2.5])
    t = np.linspace(-4, 4, 9)[:, None]
    assert np.allclose(g.evaluate(t), f.evaluate(t + 2.5), rtol=1e-14, atol=1e-15)


def test_kink_arguments_found():
    f = C.vie_nonlinearity()
    kinks = kink_arguments(f)
    assert [to_prefix(k.body[0]) for k in kinks] == ["x0"]
    assert kink_arguments(C.two_tone()) == []


def test_integral_node():
    node = parse_node("(integral 0 t0 (cos v))")
    f = FunctionExpr(1, 0, (node,))
    assert evaluate(f, [1.3])[0] == pytest.approx(math.sin(1.3), abs=1e-12)


def test_z_piecewise_jumps_at_integers():
    f = C.z_piecewise()
    assert not f.smooth
    left = evaluate(f, [1.0 - 1e-9, 0.2, 0.0])[0]
    right = evaluate(f, [1.0, 0.2, 0.0])[0]
    assert abs(left - right) > 0.5


# families

def test_sequence_family_draws_are_reproducible():
    fam = SequenceFamily.diagonal(2)
    a = fam.draw(16, seed=5)
    b = fam.draw(16, seed=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, fam.draw(16, seed=6))
    assert np.all(a[:, 0] == a[:, 1])


def test_random_multiple_is_on_the_lattice():
    draws = SequenceFamily.diagonal(1).draw(64, seed=3)[:, 0]
    m = draws / (2 * math.pi)
    assert np.allclose(m, np.round(m), atol=1e-9)
    assert np.all(draws != 0)


@given(st.integers(8, 40))
def test_family_prefix_stable(depth):
    fam = SequenceFamily.diagonal(1, ScalarSource("random_uniform"))
    short = fam.draw(depth, seed=11)
    long = fam.draw(depth + 8, seed=11)
    assert np.array_equal(short, long[:depth])


def test_bounded_family_rejected():
    fam = SequenceFamily.explicit([[1.0], [2.0]])
    assert not fam.is_unbounded()
    with pytest.raises(FamilyNotUnbounded):
        fam.require_unbounded()


def test_product_family_and_contains():
    fam = SequenceFamily.product(SequenceFamily.diagonal(1), SequenceFamily.diagonal(1))
    draws = fam.draw(8, seed=2)
    assert draws.shape == (8, 2)
    assert fam.is_unbounded()
    assert SequenceFamily.diagonal(2).contains([3.0, 3.0])
    assert not SequenceFamily.diagonal(2).contains([3.0, 4.0])


def test_ball_samples_inside():
    ball = BoundedSetSpec.ball(2, 1.5, sample_count=20)
    pts = ball.sample(seed=4)
    assert pts.shape == (20, 2)
    assert np.all(np.linalg.norm(pts, axis=1) <= 1.5 + 1e-12)
    assert all(ball.contains(p) for p in pts)


def test_grid_window_geometry():
    w = GridWindow.cube(2, -1.0, 1.0, 5)
    assert w.count == 25
    assert np.allclose(w.spacing, [0.5, 0.5])
    assert np.allclose(w.shifted([1.0, 2.0]).lo, [0.0, 1.0])
    assert w.refined(2).points_per_axis == 9


# catalogue

def test_catalogue_filter_and_labels():
    kernels = C.entries("kernel")
    assert kernels and all(e.kind == "kernel" for e in kernels)
    assert len(C.entries("")) == len(C.ENTRIES)
    text = C.list_catalogue("levitan")
    assert "levitan (Levitan example)" in text


def test_catalogue_unknown_name():
    with pytest.raises(KeyError):
        C.get("no_such_entry")
