import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiauto.errors import ConfigError, HorizonExceedsTable, MissingBound, NoDecay, StepUnstable
from multiauto.expr import FunctionExpr, T, X
from multiauto.memory import (DecayProfile, MemorySystem, NonlocalTerm, TrajectoryField, build_resolvent,
                              laplacian1d, resolvent_residual, solve_mild_nonlocal, verify_property_R)
from oracles import memory_scalar_reference


def test_laplacian1d_is_negative_definite():
    L = laplacian1d(6, 0.5)
    assert np.allclose(L, L.T)
    eig = np.linalg.eigvalsh(L)
    expect = -4 / 0.25 * np.sin(np.arange(1, 7) * math.pi / 14) ** 2
    assert np.allclose(np.sort(eig), np.sort(expect))
    with pytest.raises(ConfigError):
        laplacian1d(0)


def test_memoryless_scalar_resolvent_is_exponential():
    table = build_resolvent(MemorySystem(1, [[-1.0]]), 10.0, 0.01)
    assert np.max(np.abs(table.R_values[:, 0, 0] - np.exp(-table.times))) < 1e-6
    M, delta, ok = verify_property_R(table)
    assert ok and delta == pytest.approx(1.0, abs=1e-2)


def test_growth_raises_no_decay():
    with pytest.raises(NoDecay):
        build_resolvent(MemorySystem(1, [[1.0]]), 5.0, 0.01)
    table = build_resolvent(MemorySystem(1, [[1.0]]), 5.0, 0.01, require_decay=False)
    assert table.delta_est <= 0
    assert not verify_property_R(table)[2]


def test_resolvent_with_memory_matches_ode_oracle():
    sys = MemorySystem(1, [[-2.0]], DecayProfile(((0.5, 1.0),)))
    table = build_resolvent(sys, 20.0, 0.01)
    ts = np.array([0.5, 1.0, 3.0, 7.0])
    ref = memory_scalar_reference(-2.0, 0.5, 1.0, lambda t, u: 0.0, 1.0, 20.0, times=ts)
    idx = np.round(ts / 0.01).astype(int)
    assert np.max(np.abs(table.R_values[idx, 0, 0] - ref)) < 1e-6


def test_resolvent_residual_is_second_order():
    sys = MemorySystem(1, [[-2.0]], DecayProfile(((0.5, 1.0),)))
    coarse = resolvent_residual(sys, build_resolvent(sys, 10.0, 0.04))
    fine = resolvent_residual(sys, build_resolvent(sys, 10.0, 0.02))
    assert fine <= coarse / 3.0


def test_step_and_grid_validation():
    with pytest.raises(StepUnstable):
        build_resolvent(MemorySystem(1, [[-100.0]]), 10.0, 0.1)
    with pytest.raises(ConfigError):
        build_resolvent(MemorySystem(1, [[-1.0]]), 1.0, 0.3)
    with pytest.raises(ConfigError):
        MemorySystem(2, [[-1.0]])
    with pytest.raises(ConfigError):
        DecayProfile(((1.0, 0.0),))


def test_resolvent_csv_header():
    table = build_resolvent(MemorySystem(2, laplacian1d(2)), 1.0, 0.01)
    lines = table.to_csv().splitlines()
    assert lines[0] == "t,r11,r12,r21,r22"
    assert len(lines) == 102


@given(st.floats(0.1, 2.0), st.floats(-1.0, 1.0))
def test_profile_values_and_derivative(r, c):
    prof = DecayProfile(((c, r),))
    t = np.array([0.0, 0.7, 3.0])
    assert np.allclose(prof(t), c * np.exp(-r * t))
    assert np.allclose(prof.derivative(t), -c * r * np.exp(-r * t))


def test_profile_bound_check():
    fast = MemorySystem(1, [[-2.0]], DecayProfile(((0.2, 3.0),)))
    assert fast.profile_bound_check(M=1.0)["holds"]
    slow = MemorySystem(1, [[-2.0]], DecayProfile(((0.5, 1.0),)))
    assert not slow.profile_bound_check(M=1.0)["holds"]


def test_nonlocal_terms():
    times = np.linspace(0.0, 2.0, 201)
    traj = np.stack([np.full_like(times, 3.0), times], axis=1)
    assert np.allclose(NonlocalTerm()(times, traj), 0.0)
    mc = NonlocalTerm("mean_clip", 0.5, clip=1.0)(times, traj)
    assert np.allclose(mc, [0.5, 0.5])
    pt = NonlocalTerm("point", -2.0, at=1.0)(times, traj)
    assert np.allclose(pt, [-6.0, -2.0])
    assert NonlocalTerm("point", -2.0).lipschitz == 2.0
    with pytest.raises(ConfigError):
        NonlocalTerm("integral")


# mild solutions

def _forced(value=1.0, lip=0.0):
    return FunctionExpr(1, 1, (value + 0.0 * X(0) + 0.0 * T(0),), lipschitz_in_state=lip)


def test_constant_forcing_mild_solution():
    sys = MemorySystem(1, [[-1.0]], f=_forced())
    errs = []
    for dt in (0.02, 0.01):
        tr = solve_mild_nonlocal(sys, build_resolvent(sys, 10.0, dt), 10.0)
        t = tr.fine_axes[0]
        errs.append(np.max(np.abs(tr.solution[:, 0] - (1 - np.exp(-t)))))
        assert tr.theta == pytest.approx(0.0)
    # trapezoid convolution: second order in dt
    assert errs[1] < 1e-5 and errs[1] <= errs[0] / 3.5


def test_point_nonlocal_condition():
    # u(0) = 1 + 0.3 u(1) with u(t) = u(0) e^{-t}
    sys = MemorySystem(1, [[-1.0]], g_nonlocal=NonlocalTerm("point", 0.3, at=1.0), u0=[1.0])
    table = build_resolvent(sys, 5.0, 0.01)
    tr = solve_mild_nonlocal(sys, table, 5.0, tol=1e-12)
    u0 = 1.0 / (1.0 - 0.3 * math.exp(-1.0))
    assert tr.solution[0, 0] == pytest.approx(u0, abs=1e-6)
    assert tr.converged and tr.theta < 1


def test_mild_solver_errors():
    sys = MemorySystem(1, [[-1.0]], f=FunctionExpr(1, 1, (X(0),)))
    table = build_resolvent(sys, 2.0, 0.01)
    with pytest.raises(HorizonExceedsTable):
        solve_mild_nonlocal(sys, table, 3.0)
    with pytest.raises(MissingBound):
        solve_mild_nonlocal(sys, table, 2.0)


def test_trajectory_field_stays_in_horizon():
    t = np.linspace(0.0, 5.0, 51)
    field_ = TrajectoryField(t, np.sin(t)[:, None])
    assert field_.sample_points([[1.0]], [None])[0, 0, 0] == pytest.approx(math.sin(1.0), abs=1e-4)
    with pytest.raises(HorizonExceedsTable):
        field_.sample_points([[6.0]], [None])
