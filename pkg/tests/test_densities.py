import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dcslab.brownian import sample_paths
from dcslab.densities import (
    BoundaryData,
    QuadratureSpec,
    g_n_array,
    g_n_density,
    g_values_at,
    inner_half_points,
    joint_cell_probability,
    min_cdf,
    min_quantile,
    minmin_joint_density,
    normalization_defect,
    normalizing_constant,
    phi,
    phi_array,
    phi_cdf,
    psi,
    tail_profile,
)
from dcslab.errors import DomainError

# psi(1, 2) under the selected variant, fixed after its first computation
PSI_1_2 = 0.10403836533519988

pos = st.floats(0.1, 3.0)


def test_phi_integrates_to_one():
    val, _ = integrate.quad(lambda t: phi(1.0, 2.0, t), 0, 1, limit=200)
    assert abs(val - 1) < 1e-6


def test_phi_swap_symmetry_example():
    assert abs(phi(0.5, 1.5, 0.3) - phi(1.5, 0.5, 0.7)) < 1e-9


def test_phi_equal_boundaries_symmetric():
    assert abs(phi(1, 1, 0.3) - phi(1, 1, 0.7)) < 1e-9


@given(pos, pos, st.floats(0.01, 0.99))
@settings(max_examples=60, deadline=None)
def test_phi_symmetry_random(a, b, t):
    for v in ("joint", "bare"):
        assert abs(phi_array(a, b, t, v) - phi_array(b, a, 1 - t, v)) < 1e-9 * max(1.0, float(phi_array(a, b, t, v)))


@given(pos, pos, st.floats(0.02, 0.98))
@settings(max_examples=30, deadline=None)
def test_closed_form_matches_quadrature(a, b, t):
    assert math.isclose(float(phi_array(a, b, t)), phi(a, b, t), rel_tol=1e-6, abs_tol=1e-9)


def test_normalization_random_pairs():
    rng = np.random.default_rng(5)
    for a, b in rng.uniform(0.1, 3.0, size=(50, 2)):
        assert normalization_defect(a, b) <= 1e-6
        bd = BoundaryData(a, b, 0.25, 0.375)
        mass, _ = integrate.quad(lambda x: float(g_n_array(bd, x)), 0.25, 0.375, limit=200, epsabs=1e-12)
        assert abs(mass - 1) <= 1e-6


def test_joint_normalizer_closed_form():
    # P(min > 0) for a bridge from a to b is 1 - exp(-2ab)
    assert math.isclose(normalizing_constant(1.3, 0.4), -math.expm1(-2 * 1.3 * 0.4), rel_tol=1e-14)
    q = QuadratureSpec()
    assert math.isclose(normalizing_constant(1.3, 0.4, q=q), -math.expm1(-2 * 1.3 * 0.4), rel_tol=1e-7)


def test_phi_domain_errors():
    with pytest.raises(DomainError):
        phi(-1, 1, 0.5)
    with pytest.raises(DomainError):
        phi(1, 1, 1.0)
    with pytest.raises(ValueError):
        phi_array(1, 1, 0.5, variant="other")


def test_joint_density_vanishes_at_lower_boundary():
    assert minmin_joint_density(1.0, 2.0, 0.4, 1.0 - 1e-9) < 1e-8
    with pytest.raises(DomainError):
        minmin_joint_density(1.0, 2.0, 0.4, 1.0)
    with pytest.raises(DomainError):
        minmin_joint_density(1.0, 2.0, 0.0, 0.0)


def test_joint_density_total_mass():
    val, _ = integrate.dblquad(lambda y, t: minmin_joint_density(1.0, 1.0, t, y), 0, 1, -8.0, lambda t: 1.0,
                               epsabs=1e-9)
    assert abs(val - 1) < 1e-4


def test_cell_probabilities_match_min_law():
    a, b = 0.7, 1.4
    for y in (-0.5, 0.0, 0.5):
        assert math.isclose(joint_cell_probability(a, b, 0, 1, -np.inf, y), min_cdf(a, b, y), rel_tol=1e-7)


@given(st.floats(0.001, 0.999))
def test_min_quantile_inverts_cdf(p):
    y = min_quantile(1.0, 2.0, p)
    assert math.isclose(min_cdf(1.0, 2.0, y), p, rel_tol=1e-9)


def test_phi_cdf_endpoints_and_monotone():
    for v in ("joint", "bare"):
        F = phi_cdf(0.5, 1.5, v)
        x = np.linspace(0, 1, 101)
        y = F(x)
        assert abs(y[0]) < 1e-12 and abs(y[-1] - 1) < 1e-6
        assert np.all(np.diff(y) >= -1e-12)


def test_g_n_integrates_on_its_interval():
    bd = BoundaryData(1.0, 1.0, 0.25, 0.375)
    mass, _ = integrate.quad(lambda x: g_n_density(bd, x), 0.25, 0.375, limit=200)
    assert abs(mass - 1) < 1e-6
    with pytest.raises(DomainError):
        g_n_density(bd, 0.5)


def test_g_n_scaling_example():
    bd = BoundaryData(1.0, 1.0, 0.0, 0.5)
    for x in (0.05, 0.2, 0.31, 0.45):
        expect = 2 * phi(math.sqrt(2), math.sqrt(2), 2 * x)
        assert math.isclose(g_n_density(bd, x), expect, rel_tol=1e-9)


def test_boundary_data_validation():
    with pytest.raises(DomainError):
        BoundaryData(0.0, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        BoundaryData(1.0, 1.0, 0.5, 0.5)


def test_psi_inner_half_bound():
    p = psi(1.0, 2.0)
    assert p > 0
    assert math.isclose(p, PSI_1_2, rel_tol=1e-9)
    t = np.linspace(0.25, 0.75, 501)
    assert np.all(phi_array(1.0, 2.0, t) >= p - 1e-12)


def test_tail_profile_zero_input():
    prof = tail_profile(np.zeros(100))
    assert np.all(prof(np.array([1e-6, 0.5, 10])) == 0)


def test_tail_profile_uniform_estimator():
    s = np.random.default_rng(3).random(100_000)
    prof = tail_profile(s)
    eps = np.array([0.1, 0.3, 0.7])
    assert np.allclose(prof(eps), eps, atol=0.01)
    assert np.all(np.diff(prof(np.linspace(0, 1, 50))) >= 0)
    with pytest.raises(ValueError):
        tail_profile([])
    with pytest.raises(DomainError):
        tail_profile([-1.0])


def test_tail_threshold():
    prof = tail_profile(np.arange(1, 101) / 100)
    eps = prof.threshold(0.05)
    assert prof(eps) <= 0.05


def test_g_values_on_paths():
    v = sample_paths(10, 500, 8)
    n = 5
    for x in inner_half_points(n):
        g = g_values_at(v, n, x)
        ok = ~np.isnan(g)
        assert np.all(g[ok] >= 0)
        # x lies in the active half on about half the paths
        assert 0.35 < np.mean(g[ok] > 0) < 0.65
    with pytest.raises(DomainError):
        g_values_at(v, n, 0.9)
