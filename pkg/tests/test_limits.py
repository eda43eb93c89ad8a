import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiauto import catalogue as C
from multiauto.errors import FamilyNotUnbounded, NoConvergentSubsequence
from multiauto.families import BoundedSetSpec, GridWindow, SequenceFamily
from multiauto.limits import (LimitProbe, asymptotic_decompose, bochner_test,
                              compactness_equivalence_check, derivative_aa_check,
                              supremum_formula_check, uniform_continuity_test)
from multiauto.volterra import DomainDescriptor

TOL = 1e-2


def probe(dim=1, family=None, state=None, depth=64, tol=TOL, window=None, seed=1, **kw):
    window = window or GridWindow.cube(dim, -5.0, 5.0)
    return LimitProbe(window, family or SequenceFamily.diagonal(dim), state, depth, tol, tol, seed, **kw)


def test_zero_translates_reproduce_the_function():
    fam = SequenceFamily.explicit(np.zeros((8, 1)))
    v = bochner_test(C.step(), probe(family=fam, depth=8))
    assert v.passed
    assert v.forward_residual == 0.0 and v.backward_residual == 0.0
    assert v.survivors == 8


def test_limit_table_shape():
    state = BoundedSetSpec.ball(1, 1.0, sample_count=6)
    v = bochner_test(C.green_exp(), probe(2, state=state))
    w = GridWindow.cube(2, -5.0, 5.0)
    assert v.limit_table.shape == (w.count, 6, 1)


@pytest.mark.parametrize("name", ["two_tone", "sin_pi"])
def test_deeper_probe_keeps_a_pass(name):
    f = C.get(name)
    assert bochner_test(f, probe(depth=32)).passed
    assert bochner_test(f, probe(depth=64)).passed


@pytest.mark.slow
@pytest.mark.parametrize("name,state", [("two_tone", None), ("sin_pi", None),
                                        ("green_exp", BoundedSetSpec.ball(1, 1.0))])
def test_pass_rate_over_seeds(name, state):
    f = C.get(name)
    dim = f.arity_time
    hits = sum(bochner_test(f, probe(dim, state=state, seed=s), raise_on_no_cluster=False).passed
               for s in range(1, 21))
    assert hits >= 18


def test_step_fails_for_every_seed():
    f = C.step()
    assert not any(bochner_test(f, probe(seed=s), raise_on_no_cluster=False).passed
                   for s in range(1, 11))


def test_unbounded_function_has_no_cluster():
    with pytest.raises(NoConvergentSubsequence, match="unbounded"):
        bochner_test(C.identity(), probe())
    v = bochner_test(C.identity(), probe(), raise_on_no_cluster=False)
    assert not v.passed and v.notes[0].startswith("NoConvergentSubsequence")


def test_verdict_json_is_finite_or_null():
    v = bochner_test(C.identity(), probe(), raise_on_no_cluster=False)
    js = v.to_json()
    assert js["forward_residual"] is None and js["passed"] is False
    assert js["tolerances"] == {"tol_limit": TOL, "tol_subseq": TOL}


def test_probe_validation():
    w = GridWindow.cube(1, -1.0, 1.0)
    with pytest.raises(ValueError):
        LimitProbe(w, SequenceFamily.diagonal(1), depth=4)
    with pytest.raises(ValueError):
        LimitProbe(w, SequenceFamily.diagonal(1), tol_limit=1e-1, tol_subseq=1e-2)
    with pytest.raises(ValueError):
        LimitProbe(w, SequenceFamily.diagonal(2))
    p = LimitProbe(w, SequenceFamily.diagonal(1)).with_tolerance(0.5)
    assert p.tol_limit == 0.5 and p.tol_subseq == 0.5


def test_bounded_family_rejected_by_checks():
    fam = SequenceFamily.explicit([[1.0], [2.0]])
    with pytest.raises(FamilyNotUnbounded):
        supremum_formula_check(C.two_tone(), fam, 1.0, 10.0)
    with pytest.raises(FamilyNotUnbounded):
        asymptotic_decompose(C.two_tone(), fam, None, GridWindow.cube(1, -1.0, 1.0))


# supremum

def test_supremum_of_a_constant_has_no_gap():
    r = supremum_formula_check(C.constant(0.7), SequenceFamily.diagonal(1), 5.0, 20.0)
    assert r.sup_all == pytest.approx(0.7) and r.gap == 0.0


def test_supremum_of_decay_sees_the_origin():
    r = supremum_formula_check(C.decay(), SequenceFamily.diagonal(1), 5.0, 20.0)
    assert r.sup_all == pytest.approx(1.0)
    assert r.gap == pytest.approx(1.0 - math.exp(-5.0), abs=1e-3)


@given(st.floats(0.0, 20.0))
def test_supremum_gap_is_nonnegative(a):
    r = supremum_formula_check(C.two_tone(), SequenceFamily.diagonal(1), a, 80.0, step=1e-2)
    assert r.gap >= 0.0 and r.sup_all <= 2.0


def test_supremum_argument_checks():
    with pytest.raises(ValueError):
        supremum_formula_check(C.two_tone(), SequenceFamily.diagonal(1), -1.0, 10.0)
    with pytest.raises(ValueError):
        supremum_formula_check(C.two_tone(), SequenceFamily.diagonal(1), 5.0, 10.0)


# uniform continuity and compactness

def test_uniform_continuity_two_tone():
    r = uniform_continuity_test(C.two_tone(), probe(), samples=1 << 12)
    assert r.passed and r.witness is None
    assert r.sup_diffs == sorted(r.sup_diffs, reverse=True)


def test_uniform_continuity_fails_for_t_squared():
    r = uniform_continuity_test(C.t_squared(), probe(), samples=1 << 12)
    assert not r.passed
    assert r.witness["difference"] > TOL
    local = uniform_continuity_test(C.t_squared(), probe(), samples=1 << 12, window_only=True)
    assert local.passed and not local.global_check


def test_delta_sequence_validation():
    with pytest.raises(ValueError):
        uniform_continuity_test(C.two_tone(), probe(), delta_sequence=(1e-3, 1e-2))


def test_compactness_agrees_on_two_tone():
    rep = compactness_equivalence_check(C.two_tone(), probe(), samples=1 << 12)
    assert rep.pointwise and rep.uniform_continuity and rep.compact and rep.agreement


def test_piecewise_function_probed_at_continuity_points():
    f = C.z_piecewise()
    # integer shifts along the jump axis are exact periods
    fam = SequenceFamily.explicit([[k, 0.0, 0.0] for k in range(1, 9)])
    w = GridWindow.cube(3, -1.5, 1.5, 7)
    v = bochner_test(f, probe(3, family=fam, depth=8, window=w, discontinuity_axes=(0,)))
    assert v.passed and v.backward_residual < 1e-12
    assert v.limit_table.shape[0] == 4 * 49
    assert any("continuity points" in n for n in v.notes)


# decomposition and derivatives

def test_decompose_decaying_two_tone():
    w = GridWindow.cube(1, -5.0, 5.0)
    r = asymptotic_decompose(C.decaying_two_tone(), SequenceFamily.diagonal(1),
                             DomainDescriptor.full_space(1), w)
    assert r.passed
    t = w.points()[:, 0]
    assert np.max(np.abs(r.q_est[:, 0, 0] - np.exp(-np.abs(t)))) <= TOL
    assert r.residual == 0.0


def test_decay_alone_is_not_almost_automorphic():
    assert not bochner_test(C.decay(), probe(), raise_on_no_cluster=False).passed
    r = asymptotic_decompose(C.decay(), SequenceFamily.diagonal(1), None, GridWindow.cube(1, -5.0, 5.0))
    assert r.passed and r.aa_part_sup <= TOL


def test_decompose_needs_large_translates():
    with pytest.raises(NoConvergentSubsequence):
        asymptotic_decompose(C.two_tone(), SequenceFamily.diagonal(1), None,
                             GridWindow.cube(1, -5.0, 5.0), min_translate_norm=1e9)


@pytest.mark.parametrize("name", ["two_tone", "sin_pi"])
def test_derivative_check(name):
    v = derivative_aa_check(C.get(name), 0, probe())
    assert v.passed
    assert v.extras["fd_error_estimate"] < 1e-5
    assert v.extras["uniform_continuity"]["passed"]
