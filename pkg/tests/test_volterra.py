import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiauto import catalogue as C
from multiauto.errors import E1Violated, EmptyInterior, NegativeKernel, SingularKernel
from multiauto.expr import FunctionExpr, T, cos, exp, fabs, scalar, sin
from multiauto.families import GridWindow, SequenceFamily
from multiauto.limits import LimitProbe
from multiauto.volterra import (DomainDescriptor, KernelSpec, QuadratureScheme, exponential_product_kernel,
                                gamma_apply, gamma_preserves_aa_check, gaussian_kernel_1d,
                                kernel_mass, laplace_kernel_1d, odd_kernel_1d, verify_E1,
                                verify_E2_E3, whole_space_convolve, zero_kernel)

ONE = FunctionExpr.parse("1", 2, 0)
WIN = GridWindow.cube(2, 0.5, 3.0, 4)


@given(st.floats(0.3, 4.0), st.floats(0.3, 4.0))
def test_orthant_mass_of_exponential_product(alpha, beta):
    assert kernel_mass(exponential_product_kernel(alpha, beta)) == pytest.approx(1 / (alpha * beta), rel=1e-8)


def test_quadrature_nodes_integrate_polynomials():
    q = QuadratureScheme(order=4, panels_per_unit=2)
    x, w = q.nodes(-1.0, 2.5)
    assert np.sum(w * x ** 7) == pytest.approx((2.5 ** 8 - 1.0) / 8, rel=1e-12)
    assert q.nodes(1.0, 1.0)[0].size == 0
    x, w = QuadratureScheme("trapezoid", 4).nodes(0.0, 1.0)
    assert np.sum(w * x) == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(ValueError):
        QuadratureScheme("simpson")


def test_gamma_of_one_on_first_quadrant():
    g = gamma_apply(exponential_product_kernel(), DomainDescriptor.first_quadrant(), ONE, WIN)
    x, y = WIN.points().T
    expect = (1 - np.exp(-x)) * (1 - np.exp(-y))
    assert np.max(np.abs(g.values[:, 0] - expect)) <= 1e-9
    assert np.all(g.err_bound <= 1e-9)


def test_gamma_of_sine_on_causal_cone():
    f = FunctionExpr(2, 0, (sin(T(0)),), sup_bound=1.0)
    g = gamma_apply(exponential_product_kernel(), DomainDescriptor.causal_cone(2), f, WIN)
    x = WIN.points()[:, 0]
    assert np.max(np.abs(g.values[:, 0] - 0.5 * (np.sin(x) - np.cos(x)))) <= 1e-9


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_gamma_is_linear(a, b):
    k, d = exponential_product_kernel(1.0, 2.0), DomainDescriptor.first_quadrant()
    f = FunctionExpr(2, 0, (sin(T(0)) * cos(T(1)),), sup_bound=1.0)
    g = FunctionExpr(2, 0, (exp(-fabs(T(0) - T(1))),), sup_bound=1.0)
    comb = FunctionExpr(2, 0, (a * f.body[0] + b * g.body[0],))
    lhs = gamma_apply(k, d, comb, WIN).values
    rhs = a * gamma_apply(k, d, f, WIN).values + b * gamma_apply(k, d, g, WIN).values
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_gamma_is_positive():
    f = FunctionExpr(2, 0, (sin(T(0)) * sin(T(0)) + 0.0 * T(1),), sup_bound=1.0)
    g = gamma_apply(exponential_product_kernel(), DomainDescriptor.causal_cone(2), f, WIN)
    assert np.all(g.values >= 0)


def test_truncation_changes_stay_within_tail_bound():
    f = FunctionExpr(2, 0, (sin(T(0) + T(1)),), sup_bound=1.0)
    k, d = exponential_product_kernel(), DomainDescriptor.causal_cone(2)
    loose = gamma_apply(k, d, f, WIN, QuadratureScheme(eps_tail=1e-4))
    tight = gamma_apply(k, d, f, WIN, QuadratureScheme(eps_tail=1e-12))
    diff = np.max(np.abs(loose.values - tight.values))
    assert diff <= loose.err_bound[0] + tight.err_bound[0]


def test_zero_kernel_gives_zero():
    f = FunctionExpr(2, 0, (sin(T(0)),), sup_bound=1.0)
    g = gamma_apply(zero_kernel(2), DomainDescriptor.causal_cone(2), f, WIN)
    assert np.all(g.values == 0.0)


def test_line_domain_is_degenerate():
    k = exponential_product_kernel()
    d = DomainDescriptor.line((1.0, -1.0))
    g = gamma_apply(k, d, ONE, WIN)
    assert np.all(g.values == 0.0) and any("vanishes" in n for n in g.notes)
    rep = verify_E2_E3(k, d)
    assert rep.degenerate is not None
    probe = LimitProbe(WIN, SequenceFamily.diagonal(2))
    with pytest.raises(EmptyInterior):
        gamma_preserves_aa_check(k, d, ONE, probe)


def test_e2_e3_on_interior_diagonal():
    rep = verify_E2_E3(exponential_product_kernel(), DomainDescriptor.first_quadrant())
    assert rep.e2_passed and rep.passed
    e2 = rep.e2[0]
    assert e2[0] == pytest.approx(2 * math.exp(-5 / math.sqrt(2)) - math.exp(-10 / math.sqrt(2)), rel=1e-6)


# whole-space convolution

@given(st.floats(0.2, 4.0), st.floats(-20, 20))
def test_laplace_convolution_of_a_tone(omega, t):
    f = scalar(sin(omega * T(0)), sup_bound=1.0)
    v = whole_space_convolve(laplace_kernel_1d(), f, [t], check_doubling=False)
    assert float(v.value[0]) == pytest.approx(math.sin(omega * t) / (1 + omega ** 2), abs=1e-8)
    assert v.err_bound < 1e-8


def test_gaussian_convolution_of_a_constant():
    v = whole_space_convolve(gaussian_kernel_1d(), C.constant(2.5), [3.0])
    assert float(v.value[0]) == pytest.approx(2.5, abs=1e-9)


def test_odd_kernel_kills_constants():
    v = whole_space_convolve(odd_kernel_1d(), C.constant(1.0), [0.4])
    assert abs(float(v.value[0])) < 1e-12


# rejected kernels

def _neg_kernel():
    f = scalar(-exp(-fabs(T(0))))
    return KernelSpec(1, f, "exponential", (1.0,), 1.0, factors=(f,), name="neg")


def test_negative_kernel_rejected():
    with pytest.raises(NegativeKernel):
        verify_E1(_neg_kernel())
    with pytest.raises(E1Violated):
        gamma_apply(_neg_kernel(), DomainDescriptor.causal_cone(1), C.two_tone(), GridWindow.cube(1, 0, 1, 3))


def test_singular_kernel_rejected():
    k = KernelSpec(1, scalar(exp(-fabs(T(0)))), "exponential", (1.0,), singular=True)
    with pytest.raises(SingularKernel):
        whole_space_convolve(k, C.two_tone(), [0.0])
    with pytest.raises(SingularKernel):
        gamma_apply(k, DomainDescriptor.causal_cone(1), C.two_tone(), GridWindow.cube(1, 0, 1, 3))


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec(1, scalar(exp(-fabs(T(0)))), "exponential", ())
    with pytest.raises(ValueError):
        KernelSpec(1, scalar(exp(-fabs(T(0)))), "integrable_declared")
    with pytest.raises(ValueError):
        DomainDescriptor.orthant((0.0, 0.0), (1, 2))


def test_grid_values_csv():
    g = gamma_apply(exponential_product_kernel(), DomainDescriptor.first_quadrant(), ONE, WIN)
    lines = g.to_csv().splitlines()
    assert lines[0] == "t1,t2,value,err_bound"
    assert len(lines) == WIN.count + 1
