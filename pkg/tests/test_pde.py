import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiauto import catalogue as C
from multiauto.errors import ConfigError, MissingBound, NonpositiveTime, UnboundedInitialData
from multiauto.expr import FunctionExpr, T, scalar, sin
from multiauto.families import GridWindow
from multiauto.pde import (HeatConfig, LaplacianField, heat_kernel, heat_mass, heat_radius, heat_solve,
                           heat_tail_mass, poisson_synthetic_check)


@given(st.floats(1e-3, 100.0), st.sampled_from([1e-6, 1e-10, 1e-14]), st.sampled_from([1, 2]))
def test_heat_radius_controls_the_tail(t, eps, dim):
    R = heat_radius(t, eps, dim)
    assert heat_tail_mass(t, R, dim) <= eps
    assert R >= 10 * math.sqrt(t)


@given(st.floats(1e-2, 50.0))
def test_heat_kernel_has_unit_mass(t):
    assert heat_mass(t) == pytest.approx(1.0, abs=1e-9)


def test_heat_kernel_values_and_symmetry():
    assert heat_kernel([0.0], 1.0) == pytest.approx(1 / math.sqrt(4 * math.pi))
    xi = np.array([[0.3, -1.2], [-0.3, 1.2]])
    v = heat_kernel(xi, 0.7)
    assert v[0] == v[1] == pytest.approx(math.exp(-1.53 / 2.8) / (4 * math.pi * 0.7))


def test_nonpositive_time_rejected():
    with pytest.raises(NonpositiveTime):
        heat_kernel([0.0], 0.0)
    with pytest.raises(NonpositiveTime):
        HeatConfig(1, -1.0, C.two_tone())
    with pytest.raises(NonpositiveTime):
        heat_radius(0.0, 1e-10)


def test_unbounded_initial_data_rejected():
    with pytest.raises(UnboundedInitialData):
        HeatConfig(1, 1.0, C.identity())
    with pytest.raises(ConfigError):
        HeatConfig(3, 1.0, C.z_piecewise())


@pytest.mark.parametrize("omega,t", [(1.0, 0.3), (math.sqrt(2), 1.0), (3.0, 0.05)])
def test_tone_is_damped(omega, t):
    g = scalar(sin(omega * T(0)), sup_bound=1.0)
    grid = GridWindow.cube(1, -4.0, 4.0, 33)
    u = heat_solve(HeatConfig(1, t, g), grid)
    x = grid.points()[:, 0]
    assert np.max(np.abs(u.values[:, 0] - math.exp(-omega ** 2 * t) * np.sin(omega * x))) <= 1e-9


def test_two_dimensional_product_of_sines():
    g = FunctionExpr(2, 0, (sin(T(0)) * sin(T(1)),), sup_bound=1.0)
    grid = GridWindow.cube(2, -2.0, 2.0, 5)
    u = heat_solve(HeatConfig(2, 0.5, g), grid)
    x, y = grid.points().T
    assert np.max(np.abs(u.values[:, 0] - math.exp(-1.0) * np.sin(x) * np.sin(y))) <= 1e-9


@given(st.floats(0.01, 10.0))
def test_maximum_principle(t):
    f = C.two_tone()
    grid = GridWindow.cube(1, -10.0, 10.0, 41)
    u = heat_solve(HeatConfig(1, t, f), grid)
    sup0 = np.max(np.abs(f.evaluate(np.linspace(-60, 60, 200001)[:, None])))
    assert np.max(np.abs(u.values)) <= sup0 + u.err_bound[0] + 1e-12


def test_constant_initial_data_is_stationary():
    u = heat_solve(HeatConfig(1, 4.0, C.constant(0.3)), GridWindow.cube(1, -3.0, 3.0, 7))
    assert np.allclose(u.values, 0.3, atol=1e-10)


# Poisson

def test_laplacian_of_a_quadratic_and_a_tone():
    two_d = FunctionExpr(2, 0, (T(0) * T(0) + sin(T(1)),))
    pts = np.array([[0.3, 0.4], [-2.0, 1.1]])
    vals = LaplacianField(two_d, 1e-3).values_at(pts)
    assert np.allclose(vals, 2.0 - np.sin(pts[:, 1]), atol=1e-6)
    with pytest.raises(ConfigError):
        LaplacianField(two_d, 0.0)


def test_poisson_check_preconditions():
    from multiauto.families import SequenceFamily
    from multiauto.limits import LimitProbe
    probe = LimitProbe(GridWindow.cube(1, -5.0, 5.0), SequenceFamily.diagonal(1))
    with pytest.raises(ConfigError):
        poisson_synthetic_check(C.step(), probe)
    with pytest.raises(MissingBound):
        poisson_synthetic_check(C.t_squared(), probe)
