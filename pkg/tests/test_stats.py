import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dcslab.stats import (
    TestReport,
    chi_square,
    chi_square_uniform,
    correlation_matrix,
    ecdf,
    ks_statistic,
    ks_test,
    poisson_dispersion,
    uniform_cdf,
    write_summary_csv,
)


def test_ks_single_point():
    assert ks_test([0.5], uniform_cdf).statistic == 0.5


def test_ks_quantile_sample():
    n = 100
    x = (np.arange(1, n + 1) - 0.5) / n
    assert math.isclose(ks_statistic(x, uniform_cdf), 1 / (2 * n), rel_tol=1e-12)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.randoms())
def test_ks_order_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert ks_statistic(xs, uniform_cdf) == ks_statistic(ys, uniform_cdf)


def test_empty_samples_rejected():
    with pytest.raises(ValueError):
        ks_test([], uniform_cdf)
    with pytest.raises(ValueError):
        chi_square_uniform([], 4)


def test_chi_square_balanced_and_concentrated():
    balanced = (np.arange(100) + 0.5) / 100
    rep = chi_square_uniform(balanced, 4)
    assert rep.statistic == 0 and rep.p_value == 1
    assert chi_square_uniform(np.full(100, 0.1), 4).statistic == 300
    with pytest.raises(ValueError):
        chi_square_uniform([0.5], 1)
    with pytest.raises(ValueError):
        chi_square_uniform([1.0], 2)


def test_chi_square_simulated_uniform():
    x = np.random.default_rng(0).random(10_000)
    assert chi_square_uniform(x, 20).passed


def test_chi_square_low_expected_flag():
    rep = chi_square([1, 2, 1], [0.3, 0.4, 0.3])
    assert "low_expected" in rep.flags and rep.details["dof"] == 2


def test_dispersion_constant_counts():
    rep = poisson_dispersion([5] * 50)
    assert rep.statistic == 0 and "underdispersed" in rep.flags and not rep.passed


def test_dispersion_poisson_counts():
    c = np.random.default_rng(1).poisson(10, 1000)
    assert poisson_dispersion(c).passed


def test_dispersion_overdispersed_pattern():
    rep = poisson_dispersion([0, 20] * 50)
    assert "overdispersed" in rep.flags


def test_dispersion_degenerate_and_errors():
    rep = poisson_dispersion([0, 0, 0])
    assert "degenerate" in rep.flags and rep.p_value == 0
    with pytest.raises(ValueError):
        poisson_dispersion([3])
    with pytest.raises(ValueError):
        poisson_dispersion([1, -1])


def test_report_contract():
    r = TestReport("x", 1.0, 0.001, 10)
    assert not r.passed  # pass requires p strictly above significance
    assert TestReport("x", 1.0, 0.0011, 10).passed
    with pytest.raises(ValueError):
        TestReport("x", 1.0, 1.5, 10)
    json.dumps(r.to_dict())


def test_null_pvalues_are_calibrated():
    rng = np.random.default_rng(12)
    ks_p, chi_p, disp_p = [], [], []
    for _ in range(1000):
        x = rng.random(200)
        ks_p.append(ks_test(x, uniform_cdf).p_value)
        chi_p.append(chi_square_uniform(x, 10).p_value)
        disp_p.append(poisson_dispersion(rng.poisson(8, 200)).p_value)
    for p in (ks_p, chi_p, disp_p):
        assert abs(np.mean(np.array(p) < 0.05) - 0.05) <= 0.02


def test_ecdf_and_correlation():
    F = ecdf([0.2, 0.4, 0.4, 0.9])
    assert F(0.4) == 0.75 and F(0.1) == 0 and F(1) == 1
    a = np.random.default_rng(3).normal(size=(500, 2))
    c = correlation_matrix(a, a)
    assert np.allclose(np.diag(c), 1)


def test_summary_csv(tmp_path):
    f = tmp_path / "s.csv"
    write_summary_csv([TestReport("k", 0.5, 0.2, 3)], f)
    assert f.read_text().splitlines() == ["test_id,statistic,p,pass", "k,0.5,0.2,True"]
