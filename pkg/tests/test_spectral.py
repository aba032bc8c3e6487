import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from bubblesheet import spectral as sp
from bubblesheet.errors import GridMismatch

Z = math.sqrt(2 * math.pi / math.e)

# quad oracle for <chi_rho, chi_rho> / Z with the quintic cutoff, rho = 10
TRUNCATED_ONE_RHO10 = 0.9999488664425862


def _field(grid, f):
    return sp.graph_from(grid, f)


def test_gaussian_mass_closed_form(grid):
    # [CLOSED FORM]
    one = _field(grid, lambda a, b, t: np.ones_like(a))
    assert sp.gaussian_inner_product(one, one) == pytest.approx(Z, abs=1e-12)


@pytest.mark.parametrize("name", sp.UNSTABLE_NAMES + sp.NEUTRAL_NAMES)
def test_basis_norms_match_table(grid, name):
    funcs = {n: f for n, f, _ in sp.EIGENFUNCTIONS["unstable"] + sp.EIGENFUNCTIONS["neutral"]}
    f = _field(grid, funcs[name])
    assert sp.gaussian_norm(f) == pytest.approx(sp.basis_norm(name), rel=1e-12)


@pytest.mark.parametrize("group", ["unstable", "neutral"])
def test_eigenfunctions(grid, group):
    for name, func, lam in sp.EIGENFUNCTIONS[group]:
        f = _field(grid, func)
        r = sp.apply_linearized_operator(f).values - lam * f.values
        assert sp.gaussian_norm(r, grid) / sp.gaussian_norm(f) <= 1e-10, name


def test_stable_witnesses(grid):
    for name, func, lam in sp.STABLE_WITNESSES:
        f = _field(grid, func)
        Lf = sp.apply_linearized_operator(f)
        assert lam <= -0.5
        assert sp.gaussian_inner_product(Lf, f) / sp.gaussian_norm(f) ** 2 == pytest.approx(lam, abs=1e-9), name


def test_operator_exact_when_restricted_to_bulk(grid):
    f = _field(grid, lambda a, b, t: a ** 2 - 2)
    r = sp.apply_linearized_operator(f).values
    assert np.max(np.abs(r[grid.radius <= 8])) < 1e-8


def test_projection_recovers_coefficients(grid):
    g = _field(grid, lambda a, b, t: 3 * a + 0.5 * (b ** 2 - 2) - 0.25 * np.sin(t))
    d = sp.spectral_project(g)
    assert d.raw_unstable[1] == pytest.approx(3.0, abs=1e-11)
    assert d.raw_unstable[4] == pytest.approx(-0.25, abs=1e-11)
    assert d.raw_neutral[5] == pytest.approx(0.5, abs=1e-11)
    assert d.U_minus == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(d.reconstruct(grid), g.values, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(c=st.lists(st.floats(-5, 5), min_size=12, max_size=12), k=st.floats(-3, 3))
def test_projection_is_linear(grid, c, k):
    funcs = [f for _, f, _ in sp.EIGENFUNCTIONS["unstable"] + sp.EIGENFUNCTIONS["neutral"]]
    vals = sum(ci * grid.field(f) for ci, f in zip(c, funcs))
    d1 = sp.spectral_project(sp.CylinderGraph(grid, vals, 10.0))
    d2 = sp.spectral_project(sp.CylinderGraph(grid, k * vals, 10.0))
    np.testing.assert_allclose(np.array(d2.raw_unstable), k * np.array(d1.raw_unstable), atol=1e-9)
    np.testing.assert_allclose(np.array(d1.raw_unstable + d1.raw_neutral), c, atol=1e-9)


def test_energy_split_of_mixed_graph(grid):
    g = _field(grid, lambda a, b, t: 2.0 + 0.1 * np.cos(2 * t))
    d = sp.spectral_project(g)
    assert d.U_plus == pytest.approx(4 * Z, rel=1e-12)
    assert d.U_zero == pytest.approx(0.0, abs=1e-20)
    assert d.U_minus == pytest.approx(0.01 * Z / 2, rel=1e-10)


def test_truncation_matches_quad_oracle(grid):
    # [DERIVED]
    one = sp.graph_from(grid, lambda a, b, t: np.ones_like(a), rho=10.0)
    t = sp.truncate_graph(one)
    assert sp.gaussian_norm(t) ** 2 / Z == pytest.approx(TRUNCATED_ONE_RHO10, abs=5e-6)


def test_truncation_tail_small_for_large_radius():
    fine = sp.SpectralGrid(order=24)
    one = sp.graph_from(fine, lambda a, b, t: np.ones_like(a), rho=20.0)
    diff = sp.gaussian_norm(sp.truncate_graph(one)) - sp.gaussian_norm(one)
    assert abs(diff) < 1e-8


def test_cutoff_quad_oracle_is_independent():
    val = quad(lambda r: sp.cutoff(r / 10) ** 2 * r / 2 * math.exp(-r * r / 4), 0, 10, points=[5],
               epsabs=1e-14, limit=200)[0]
    assert val == pytest.approx(TRUNCATED_ONE_RHO10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(-2, 2))
def test_cutoff_range(s):
    c = float(sp.cutoff(s))
    assert 0.0 <= c <= 1.0
    if abs(s) <= 0.5:
        assert c == 1.0
    if abs(s) >= 1:
        assert c == 0.0


def test_cutoff_monotone():
    s = np.linspace(0, 1.2, 500)
    assert np.all(np.diff(sp.cutoff(s)) <= 0)


def test_grid_mismatch_raises(grid):
    other = sp.SpectralGrid(order=16)
    f = _field(grid, lambda a, b, t: a)
    g = _field(other, lambda a, b, t: a)
    with pytest.raises(GridMismatch):
        sp.gaussian_inner_product(f, g)
    with pytest.raises(GridMismatch):
        sp.CylinderGraph(grid, np.zeros(other.shape), 10.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        sp.SpectralGrid(n_theta=12)


def test_graph_values_are_read_only(grid):
    g = _field(grid, lambda a, b, t: a)
    with pytest.raises(ValueError):
        g.values[0, 0, 0] = 1.0


def test_propagator_on_eigenfunctions(grid):
    P = grid.linear_propagator(1e-3)
    for name, func, lam in sp.EIGENFUNCTIONS["unstable"] + sp.EIGENFUNCTIONS["neutral"]:
        v = grid.field(func)
        r = P(v) - math.exp(lam * 1e-3) * v
        assert sp.gaussian_norm(r, grid) / sp.gaussian_norm(v, grid) < 1e-9, name


def test_c2_norm_of_polynomial(grid):
    g = _field(grid, lambda a, b, t: 0.01 * (a ** 2 - 2))
    # Hessian is 0.02 everywhere; gradient 0.02 |x| stays below 0.04 inside r <= 2
    assert 0.02 - 1e-9 <= sp.c2_norm(g, 2.0) <= 0.04


def test_rotation_generators_are_skew():
    for i in range(4):
        A = sp.generator(i)
        np.testing.assert_array_equal(A, -A.T)


def test_fine_tune_recovers_small_rotation():
    grid = sp.SpectralGrid()
    zero = sp.graph_from(grid, lambda a, b, t: 0 * a, rho=40)
    eps = 1e-3
    rotated = sp.regraph(zero, sp.RotationState((eps, 0, 0, 0)).S)
    assert np.max(np.abs(rotated.values)) > 1e-4
    state, tuned = sp.fine_tune_rotation(rotated)
    np.testing.assert_allclose(state.S, sp.RotationState((-eps, 0, 0, 0)).S, atol=1e-12)
    assert np.max(np.abs(tuned.values)) < 1e-9


def test_symmetric_graph_needs_no_rotation(grid):
    g = sp.graph_from(grid, lambda a, b, t: 0.01 * (a ** 2 - 2) + 0.01 * (b ** 2 - 2), rho=6)
    state, _ = sp.fine_tune_rotation(g)
    np.testing.assert_allclose(state.coords, 0.0, atol=1e-12)


def test_decomposition_json_round_trip(grid):
    import json

    d = sp.spectral_project(_field(grid, lambda a, b, t: a))
    doc = json.loads(d.to_json())
    assert doc["unstable[x1]"] == pytest.approx(sp.basis_norm("x1"))
