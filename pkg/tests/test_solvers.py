import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiauto.errors import CertificateInvalid, ConfigError, EmptyInterior, InsufficientSweeps, MissingBound
from multiauto.expr import FunctionExpr, T, X, exp, fabs, sin, tanh
from multiauto.families import GridWindow
from multiauto.solvers import (CausalProblem, ContractionCertificate, build_axis_grid,
                               estimate_observed_ratio, gregory_weights, solve_bikernel, solve_causal,
                               solve_vie_asymptotic, solve_vie_infinite_delay)
from multiauto.volterra import DomainDescriptor, exponential_product_kernel, laplace_kernel_1d
from oracles import solve_bikernel_nystrom

SQRT2 = math.sqrt(2.0)


# the two-node trapezoid rule is exact for linear functions only
@pytest.mark.parametrize("p,deg", [(p, d) for p in range(1, 13) for d in range(4) if p > 1 or d < 2])
def test_gregory_weights_integrate_cubics(p, deg):
    x = np.arange(p + 1, dtype=float)
    assert gregory_weights(p) @ x ** deg == pytest.approx(p ** (deg + 1) / (deg + 1), rel=1e-12)


def test_axis_grid_contains_window_points():
    ax = build_axis_grid(1.0, 5.0, 9, 4, 0.0, 16.0)
    assert np.allclose(ax.nodes[ax.window_index], np.linspace(1.0, 5.0, 9))
    assert ax.nodes[0] == pytest.approx(0.0)
    # row p integrates 1 from the first node up to node p
    assert np.allclose(ax.weights @ np.ones(len(ax.nodes)), ax.nodes - ax.nodes[0])
    with pytest.raises(ConfigError):
        build_axis_grid(-1.0, 5.0, 9, 4, 0.0, 16.0)


@given(st.floats(0, 0.9), st.floats(0, 2), st.floats(0, 5))
def test_certificate_arithmetic(lo, li, mass):
    c = ContractionCertificate(lo, li, mass)
    assert c.theta == lo + li * mass and c.consistent()
    assert c.valid == (c.theta < 1)


def test_certificate_rejects_theta_at_least_one():
    c = ContractionCertificate(0.0, 3.0, 1.0)
    with pytest.raises(CertificateInvalid, match="theta=3"):
        c.require()
    with pytest.raises(ValueError):
        ContractionCertificate(-0.1, 0.0, 1.0)


def _linear_problem(gamma, c=1.0, d=None):
    g = FunctionExpr(2, 1, (c + 0.0 * X(0),), lipschitz_in_state=0.0)
    h = FunctionExpr(2, 1, (gamma * X(0),), lipschitz_in_state=abs(gamma))
    return CausalProblem(g, h, exponential_product_kernel(), d or DomainDescriptor.causal_cone(2))


WIN = GridWindow.cube(2, 0.0, 2.0, 5)


@pytest.mark.parametrize("gamma", [0.2, 0.5, -0.4])
def test_linear_equation_on_causal_cone(gamma):
    # constant solution 1 / (1 - gamma) since the kernel has unit mass
    errs = []
    for refine in (2, 4):
        tr = solve_causal(_linear_problem(gamma), WIN, tol=1e-10, refine=refine)
        assert tr.converged and tr.theta == pytest.approx(abs(gamma))
        errs.append(np.max(np.abs(tr.solution - 1.0 / (1.0 - gamma))))
        assert errs[-1] <= tr.error_bound
    assert errs[1] <= errs[0] / 8


@given(st.floats(0.05, 0.8))
def test_sweep_count_respects_a_priori_bound(gamma):
    tol = 1e-8
    tr = solve_causal(_linear_problem(gamma), GridWindow.cube(2, 0.0, 1.0, 3), tol=tol, refine=2,
                      error_estimate=False)
    th = tr.theta
    d0 = tr.sup_diffs[0]
    bound = math.ceil(math.log(tol * (1 - th) / d0) / math.log(th)) + 1
    assert tr.k_final <= bound


def test_a_posteriori_residual_bound():
    tr = solve_causal(_linear_problem(0.6, d=DomainDescriptor.first_quadrant()), WIN, tol=1e-6, refine=2)
    th = tr.theta
    assert tr.residual <= tr.sup_diffs[-1] * th / (1 - th) + 2 * tr.quad_err + 1e-14
    # on the first quadrant u(t) = 1 + 0.6 * int K u, so u(0, y) = 1 at the corner axis
    assert tr.solution[0] == pytest.approx(1.0, abs=1e-8)


def test_invalid_certificate_stops_the_solver():
    with pytest.raises(CertificateInvalid, match="theta=3"):
        solve_causal(_linear_problem(3.0), WIN)


def test_missing_lipschitz_bound():
    g = FunctionExpr(2, 1, (0.0 * X(0),), lipschitz_in_state=0.0)
    h = FunctionExpr(2, 1, (tanh(X(0)),))
    with pytest.raises(MissingBound):
        solve_vie_infinite_delay(g, h, exponential_product_kernel(), WIN)


def test_degenerate_domain_rejected():
    g = FunctionExpr(2, 1, (0.0 * X(0),), lipschitz_in_state=0.0)
    h = FunctionExpr(2, 1, (0.1 * X(0),), lipschitz_in_state=0.1)
    with pytest.raises(EmptyInterior):
        solve_vie_asymptotic(g, h, exponential_product_kernel(), DomainDescriptor.line((1.0, -1.0)), WIN)


def test_trace_json_and_grid_values():
    tr = solve_causal(_linear_problem(0.5), WIN, tol=1e-8, refine=2)
    js = tr.to_json()
    assert js["certificate"]["theta"] == pytest.approx(0.5) and js["k_final"] == len(js["sweeps"])
    gv = tr.grid_values()
    assert gv.values.shape == (WIN.count, 1)
    assert np.allclose(tr.interpolate(WIN.points()), tr.solution, atol=1e-12)


# bikernel equation

def _bikernel_G():
    tt, s = T(0), T(1)
    node = 0.5 * exp(-fabs(tt - s)) * (0.5 * tanh(X(0)) + sin(s) + sin(SQRT2 * s))
    return FunctionExpr(2, 1, (node,), lipschitz_in_state=0.5)


@pytest.fixture(scope="module")
def bikernel_trace():
    return solve_bikernel(_bikernel_G(), laplace_kernel_1d(), GridWindow.cube(1, -5.0, 5.0, 41),
                          tol=1e-10, refine=8)


def test_bikernel_matches_nystrom_oracle(bikernel_trace):
    x, ref = solve_bikernel_nystrom(lambda s: np.sin(s) + np.sin(SQRT2 * s),
                                    lambda u: 0.5 * np.tanh(u),
                                    lambda u: 0.5 / np.cosh(u) ** 2, points=201)
    assert np.allclose(x[::5], np.linspace(-5, 5, 41))
    err = np.max(np.abs(bikernel_trace.solution - ref[::5]))
    assert err <= 1e-6 and err <= bikernel_trace.error_bound


def test_bikernel_certificate_and_ratio(bikernel_trace):
    assert bikernel_trace.theta == pytest.approx(0.5, rel=1e-8)
    assert bikernel_trace.converged
    assert estimate_observed_ratio(bikernel_trace, assert_bound=True) <= 0.55


def test_bikernel_rejects_bad_shapes():
    with pytest.raises(ConfigError):
        solve_bikernel(_bikernel_G(), laplace_kernel_1d(), GridWindow.cube(2, 0.0, 1.0, 3))
    G = FunctionExpr(1, 1, (X(0),), lipschitz_in_state=0.5)
    with pytest.raises(ConfigError):
        solve_bikernel(G, laplace_kernel_1d(), GridWindow.cube(1, 0.0, 1.0, 3))


def test_observed_ratio_needs_three_sweeps():
    with pytest.raises(InsufficientSweeps):
        estimate_observed_ratio([1.0, 0.5])
    assert estimate_observed_ratio([1.0, 0.5, 0.25, 0.125]) == pytest.approx(0.5)
