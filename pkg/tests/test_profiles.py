import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblesheet import profiles as pr

SQRT2 = math.sqrt(2.0)

# Independent oracles: LSODA in arclength from the tip series (ADS), Radau
# from a two-term far-field series (KM), LSODA on the graph ODE (bowl).
ADS_HEIGHT_AT_ZERO = {8.0: 1.4321004296869266, 10.0: 1.4264590721566246, 20.0: 1.4175848244691103}
KM_HEIGHT_AT_ZERO = 1.4124259873615281
BOWL_AT_FIVE = (10.284245024623763, 4.777910765334488)


@pytest.mark.parametrize("a", [8.0, 10.0, 20.0])
def test_ads_height_matches_independent_integration(ads_profiles, a):
    # [DERIVED]
    assert ads_profiles[a].curve().height(0.0) == pytest.approx(ADS_HEIGHT_AT_ZERO[a], abs=1e-9)


@pytest.mark.parametrize("a", [8.0, 10.0, 20.0])
def test_ads_certified_and_bounded_below(ads_profiles, a):
    prof = ads_profiles[a]
    assert pr.ode_residual(prof) <= 1e-6
    assert pr.calibration_residual(prof) <= 1e-6
    x, u = prof.nodes, prof.values
    m = (x >= 2) & (x <= a)
    assert np.all(u[m] >= SQRT2 * (1 - x[m] ** 2 / a ** 2) - 1e-12)


def test_ads_tip_sits_on_axis_at_parameter(ads_profiles):
    prof = ads_profiles[10.0]
    assert prof.nodes[-1] == pytest.approx(10.0, abs=1e-9)
    assert prof.values[-1] == pytest.approx(0.0, abs=1e-9)


def test_ads_heights_decrease_with_parameter(ads_profiles):
    h = [ads_profiles[a].curve().height(0.0) for a in (8.0, 12.0, 16.0, 20.0)]
    assert all(x > y for x, y in zip(h, h[1:]))
    assert all(x > SQRT2 for x in h)


def test_ads_below_threshold_rejected():
    with pytest.raises(pr.ParameterTooSmall):
        pr.solve_ads_profile(3.0)
    with pytest.raises(ValueError):
        pr.solve_ads_profile(8.0, tol=0.0)


def test_km_matches_independent_integration(km_profile):
    # [DERIVED]
    assert km_profile.values[0] == pytest.approx(KM_HEIGHT_AT_ZERO, abs=1e-7)
    assert pr.ode_residual(km_profile) <= 1e-6


def test_km_slope_approaches_parameter(km_profile):
    assert pr.km_asymptotic_slope(km_profile) == pytest.approx(0.05, rel=1e-6)


def test_km_rejects_bad_input():
    with pytest.raises(ValueError):
        pr.solve_km_profile(-1.0)


def test_bowl_matches_independent_integration():
    # [DERIVED]
    prof = pr.solve_bowl_profile(1.0, r_max=5.0)
    assert prof.values[-1] == pytest.approx(BOWL_AT_FIVE[0], abs=1e-9)
    assert prof.slopes[-1] == pytest.approx(BOWL_AT_FIVE[1], abs=1e-9)
    assert prof.values[0] == 0.0


@pytest.mark.parametrize("speed", [0.5, 1.0, 2.0])
def test_bowl_far_field_slope_ratio(speed):
    prof = pr.solve_bowl_profile(speed)
    assert pr.far_field_slope_ratio(prof) == pytest.approx(speed, rel=1e-4)


def test_bowl_speed_must_be_positive():
    with pytest.raises(ValueError):
        pr.solve_bowl_profile(0.0)


def test_cylinder_profile_is_exact():
    c = pr.cylinder_profile()
    # [TRIVIAL]
    assert c.is_cylinder
    assert np.all(c.values == SQRT2)
    assert pr.ode_residual(c) < 1e-11


def test_csv_round_trip(ads_profiles):
    prof = ads_profiles[8.0]
    back = pr.profile_from_csv(pr.profile_to_csv(prof))
    assert back.kind is prof.kind
    np.testing.assert_array_equal(back.nodes, prof.nodes)
    np.testing.assert_array_equal(back.values, prof.values)


def test_csv_rejects_empty():
    with pytest.raises(ValueError):
        pr.profile_from_csv("")


@settings(max_examples=25, deadline=None)
@given(y=st.floats(0.0, 1.0))
def test_curve_evaluation_satisfies_unit_tangent(ads_profiles, y):
    curve = ads_profiles[10.0].curve()
    yy = curve.x_min + y * (curve.x_max - curve.x_min)
    u, psi, kappa = curve.evaluate(yy)
    assert np.isfinite(u) and u >= -1e-12
    assert np.isfinite(psi) and np.isfinite(kappa)
