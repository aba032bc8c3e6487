import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblesheet import merle_zaag as mz

S = np.linspace(-30, 0, 301)


def _traj(up, u0, um):
    return mz.MzTrajectory(S, np.stack([up, u0, um], axis=1))


def test_exponential_unstable_satisfies_hypotheses():
    tr = _traj(np.exp(S), 0 * S, 0 * S)
    assert mz.verify_mz_hypotheses(tr, 0.5, mz.decaying_coupling()).passed
    assert mz.classify_dominance(tr).label is mz.Dominance.UNSTABLE


def test_jump_in_neutral_energy_violates_bound():
    tr = _traj(0 * S, np.where(S < -15, 1.0, 2.0), 0 * S)
    rep = mz.verify_mz_hypotheses(tr, 0.5, mz.decaying_coupling())
    assert not rep.passed
    assert rep.worst["neutral"][0] > 1e-3


def test_slowly_decaying_neutral_energy_dominates():
    tr = _traj(0 * S, 1 / (1 + np.abs(S)), 0 * S)
    assert mz.classify_dominance(tr).label is mz.Dominance.NEUTRAL


def test_balanced_energies_are_inconclusive():
    tr = _traj(np.exp(S), np.exp(S), 0 * S)
    assert mz.classify_dominance(tr).label is mz.Dominance.INCONCLUSIVE


def test_closed_form_decoupled_system():
    # [TRIVIAL] K = 0 decouples: U_plus = U_plus(s0) e^{c (s - s0)}
    system = mz.LinearComparisonSystem(0.7, 0.6, ((0.0,) * 3,) * 3)
    tr = mz.integrate_comparison_system(system, [1e-6, 1.0, 2.0], 10.0)
    np.testing.assert_allclose(tr.U_plus, 1e-6 * np.exp(0.7 * (tr.s + 10)), rtol=1e-8)
    np.testing.assert_allclose(tr.U_zero, 1.0, rtol=1e-12)
    np.testing.assert_allclose(tr.U_minus, 2.0 * np.exp(-0.6 * (tr.s + 10)), rtol=1e-8)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_random_systems_classified_on_their_branch(seed):
    system, init, branch, span = mz.random_compliant_system(seed, 30.0)
    tr = mz.integrate_comparison_system(system, init, span)
    assert np.all(tr.U >= 0)
    assert mz.verify_mz_hypotheses(tr, 0.5, system.sigma).passed
    assert mz.classify_dominance(tr).label is branch


def test_random_system_is_seed_deterministic():
    a = mz.random_compliant_system(7)
    b = mz.random_compliant_system(7)
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1], b[1])


def test_blowup_detected():
    system = mz.LinearComparisonSystem(5.0, 0.5, ((0.0,) * 3,) * 3)
    with pytest.raises(mz.BlowupDetected):
        mz.integrate_comparison_system(system, [1.0, 0.0, 0.0], 10.0, blowup=1e6)


def test_rejects_bad_initial_data():
    system = mz.LinearComparisonSystem(1.0, 1.0, ((0.0,) * 3,) * 3)
    with pytest.raises(ValueError):
        mz.integrate_comparison_system(system, [-1.0, 0.0, 0.0], 10.0)
    with pytest.raises(ValueError):
        mz.integrate_comparison_system(system, [0.0, 0.0, 0.0], 10.0)


def test_too_few_samples():
    s = np.linspace(-10, 0, 10)
    tr = mz.MzTrajectory(s, np.ones((10, 3)))
    with pytest.raises(mz.TooFewSamples):
        mz.classify_dominance(tr)
    short = mz.MzTrajectory(np.linspace(-1, 0, 50), np.ones((50, 3)))
    with pytest.raises(mz.TooFewSamples):
        mz.classify_dominance(short)


def test_trajectory_csv_round_trip():
    tr = _traj(np.exp(S), 0 * S, 0 * S)
    rows = tr.to_csv().splitlines()
    assert rows[0] == "s,U_plus,U_zero,U_minus"
    assert float(rows[-1].split(",")[1]) == pytest.approx(1.0)


def test_system_serializes():
    system, *_ = mz.random_compliant_system(3)
    d = system.to_dict()
    assert len(d["coupling"]) == 3
    assert d["c_plus"] == system.c_plus
