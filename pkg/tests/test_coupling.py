import json
import math

import numpy as np
import pytest

from dcslab.coupling import (
    BrownianProxyOracle,
    CosineMarkovOracle,
    IIDOracle,
    PoissonStrip,
    ScaledOracle,
    conditional_tail_bound,
    divergence_diagnostics,
    extract_next,
    finish,
    linear_oracle,
    new_trace,
    run_coupling,
    sample_strip,
    uniform_oracle,
)
from dcslab.errors import ConfigError, ConsistencyError, DomainError
from dcslab.stats import exp_cdf, ks_test, uniform_cdf


def two_point_strip():
    return PoissonStrip(1.0, np.array([0.25, 0.75]), np.array([0.3, 0.1]))


def test_flat_oracle_takes_lowest_point():
    strip = two_point_strip()
    o = uniform_oracle()
    tr = new_trace(strip, o, 16)
    assert extract_next(strip, o, tr) == (0.1, 0.75)
    assert strip.consumed.tolist() == [False, True]


def test_half_supported_oracle():
    strip = two_point_strip()
    o = IIDOracle(lambda x: 2.0 * (x < 0.5))
    tr = new_trace(strip, o, 16)
    T, Y = extract_next(strip, o, tr)
    assert math.isclose(T, 0.15) and Y == 0.25
    # the remaining point sits where g vanishes, so the strip is exhausted
    assert extract_next(strip, o, tr) is None


def test_strip_validation_and_determinism():
    with pytest.raises(DomainError):
        sample_strip(0.0, 1)
    assert len(sample_strip(1e-9, 1)) == 0
    a, b = sample_strip(5.0, (3, 4)), sample_strip(5.0, (3, 4))
    assert np.array_equal(a.ys, b.ys) and np.array_equal(a.hs, b.hs)


def test_strip_count_mean_and_uniform_x():
    counts = []
    xs = []
    for r in range(10_000):
        s = sample_strip(30.0, (1, r))
        counts.append(len(s))
        if r < 300:
            xs.append(s.ys)
            assert np.all((s.hs > 0) & (s.hs < 30))
    assert abs(np.mean(counts) - 30) < 1
    assert ks_test(np.concatenate(xs), uniform_cdf).passed


def test_first_race_time_is_exponential_for_any_oracle():
    for oracle in (linear_oracle(1.5), CosineMarkovOracle(0.8)):
        t1 = [run_coupling(oracle, 8.0, 1, seed=(2, r)).ts[0] for r in range(1000)]
        assert ks_test(t1, exp_cdf).passed


def test_all_points_below_level_consumed_and_on_graph():
    for r in range(50):
        tr = run_coupling(CosineMarkovOracle(), 10.0, seed=(7, r))
        below = tr.strip.hs < tr.L_star
        assert np.all(tr.strip.consumed[below])
        assert tr.max_residual() <= 1e-9
        assert len(set(tr.point_ids)) == len(tr.point_ids)


def test_graph_is_monotone_and_matches_accumulator():
    tr = run_coupling(linear_oracle(-1.0), 10.0, seed=3)
    y = tr.grid
    prev = np.zeros_like(y)
    for n in range(1, len(tr.steps) + 1):
        cur = tr.graph(y, n)
        assert np.all(cur >= prev)
        prev = cur
    assert np.allclose(prev, tr.level_grid)
    for s in tr.steps:
        assert math.isclose(tr.graph(np.array([s.Y]), s.n - 1)[0], s.level_before, abs_tol=1e-9)


def test_broken_normalization_is_config_error():
    with pytest.raises(ConfigError):
        run_coupling(ScaledOracle(uniform_oracle(), 1.5), 5.0, seed=1)
    with pytest.raises(ConfigError):
        run_coupling(uniform_oracle(), 5.0, n_max=0)
    with pytest.raises(ConfigError):
        linear_oracle(2.5)


def test_point_below_graph_is_consistency_error():
    strip = two_point_strip()
    o = uniform_oracle()
    tr = new_trace(strip, o, 16)
    tr.level_points[:] = 0.5
    with pytest.raises(ConsistencyError):
        extract_next(strip, o, tr)


def test_finish_detects_unconsumed_points():
    strip = two_point_strip()
    o = uniform_oracle()
    tr = new_trace(strip, o, 16)
    tr.level_grid[:] = 0.9
    tr.level_points[:] = 0.9
    with pytest.raises(ConsistencyError):
        finish(tr)


def test_tie_broken_by_point_id(caplog):
    strip = PoissonStrip(1.0, np.array([0.2, 0.6]), np.array([0.4, 0.4]))
    o = uniform_oracle()
    tr = new_trace(strip, o, 16)
    with caplog.at_level("WARNING"):
        T, Y = extract_next(strip, o, tr)
    assert Y == 0.2 and "tie" in caplog.text


def test_default_step_budget_is_ten_h():
    strip_size = len(sample_strip(2.0, 11))
    tr = run_coupling(uniform_oracle(), 2.0, seed=11)
    assert len(tr.steps) <= min(20, strip_size)


def test_trace_export(tmp_path):
    tr = run_coupling(uniform_oracle(), 3.0, seed=(5, 1))
    f = tmp_path / "t.json"
    tr.write_json(f)
    d = json.loads(f.read_text())
    assert set(d) >= {"seed", "H", "n_steps", "L_star", "steps", "unconsumed"}
    assert d["n_steps"] == len(d["steps"])
    c = tmp_path / "t.csv"
    tr.write_csv(c)
    assert len(c.read_text().splitlines()) == len(tr.steps) + 1


def test_divergence_all_zero():
    rep = divergence_diagnostics(np.zeros((10, 6)), [0.1, 0.5])
    assert np.all(rep.sup_profile == 0) and np.all(rep.mean_partial_sums == 0)
    assert not rep.positive_mass and not rep.divergent


def test_divergence_uniform():
    y = np.random.default_rng(1).random((4000, 20))
    eps = np.array([0.05, 0.2, 0.5])
    rep = divergence_diagnostics(y, eps)
    assert np.allclose(rep.sup_profile, eps, atol=0.03)
    assert np.allclose(rep.mean_partial_sums, np.arange(1, 21) / 2, rtol=0.03)
    assert rep.divergent
    with pytest.raises(DomainError):
        divergence_diagnostics(-y, eps)


def test_conditional_tail_bound_holds_for_identical_samples():
    z = np.random.default_rng(2).random(1000)
    lhs, rhs = conditional_tail_bound(z, z, [0.1, 0.3])
    assert np.all(lhs <= rhs)


def test_brownian_proxy_oracle():
    o = BrownianProxyOracle(depth=10, inner=200, seed=1)
    assert abs(o.normalization([]) - 1) < 1e-10
    assert abs(o.normalization([0.3]) - 1) < 1e-4
    # history (0.3,) puts the earlier minimizer in the left half of I_2, so the right half is active
    x = np.array([0.25, 0.75])
    g = o([0.3], x)
    assert g[0] == 0 and g[1] > 0
    tr = run_coupling(o, 10.0, seed=2, grid_size=256)
    assert tr.max_residual() <= 1e-9
