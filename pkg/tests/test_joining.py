import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcslab.joining import (
    GridDensity,
    ShiftPlan,
    exponential_density,
    greedy_join,
    grid_shifts,
    plan_marginals,
    uniform_density,
    verify_rationality,
)


def test_identity_case():
    f = uniform_density(16)
    plan = greedy_join(f, f, [F(0)], 1)
    assert plan.residual_mass == 0
    first, second = plan_marginals(plan)
    assert np.array_equal(first.values, f.values) and np.array_equal(second.values, f.values)


def test_pure_translation():
    f = uniform_density(8)
    g = GridDensity(F(1, 2), F(1, 8), np.ones(8))
    plan = greedy_join(f, g, [F(1, 2)], 1)
    assert plan.residual_mass == 0 and len(plan.entries) == 1


def test_uniform_vs_exponential_demo():
    f = uniform_density(256)
    g, tail = exponential_density(256, 5)
    assert math.isclose(tail, math.exp(-5))
    plan = greedy_join(f, g, grid_shifts(256, -1, 5), 50)
    assert plan.residual_mass < 1e-3
    assert not plan.stalled
    first, second = plan_marginals(plan)
    h = 1 / 256
    assert h * np.abs(first.values + plan.f_res.values - f.values).sum() <= 1e-9
    assert h * np.abs(second.values + plan.g_res.values - g.values).sum() <= 1e-9
    rep = verify_rationality(plan)
    assert rep["rational"] and rep["divides_grid"] and 256 % rep["denominator_bound"] == 0


def test_transfers_conserve_mass_and_residual_decreases():
    f = uniform_density(32)
    g, _ = exponential_density(32, 3)
    plan = greedy_join(f, g, grid_shifts(32, -1, 3), 5)
    last = f.mass
    for q, m, before, after in plan.transfer_log:
        assert abs((before[0] - after[0]) - m) < 1e-12
        assert abs((before[1] - after[1]) - m) < 1e-12
        assert after[0] <= last + 1e-15
        last = after[0]
    total = sum(e.mass for _, e in plan.entries) + plan.residual_mass
    assert abs(total - f.mass) < 1e-12


def test_disjoint_supports_stall_and_are_reported():
    f = uniform_density(4)
    g = GridDensity(F(3), F(1, 4), np.ones(4))
    plan = greedy_join(f, g, [F(0), F(1)], 3)
    assert plan.stalled and plan.residual_mass == 1.0 and not plan.entries


def test_usage_errors():
    f = uniform_density(4)
    with pytest.raises(ValueError):
        greedy_join(f, GridDensity(F(0), F(1, 4), 2 * np.ones(4)), [F(0)], 1)
    with pytest.raises(ValueError):
        greedy_join(f, f, [F(1, 3)], 1)
    with pytest.raises(ValueError):
        GridDensity(F(0), F(1, 4), [-1.0, 1, 1, 1])
    with pytest.raises(ValueError):
        GridDensity(F(0), F(1, 4), np.ones(4), declared_mass=2.0)


def test_empty_plan():
    f = uniform_density(4)
    plan = ShiftPlan(f, f)
    first, second = plan_marginals(plan)
    assert not first.values.any() and not second.values.any()
    assert verify_rationality(plan)["rational"]


def test_hand_built_third_shift_on_sixth_grid():
    f = uniform_density(6)
    plan = ShiftPlan(f, f)
    plan.entries.append((F(1, 3), f.zeros_like()))
    rep = verify_rationality(plan)
    assert rep["rational"] and rep["denominators"] == [3]


@given(st.lists(st.floats(0.01, 5.0), min_size=4, max_size=24), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_reconstruction_identity_random(vals, seed):
    rng = np.random.default_rng(seed)
    L = 8
    f = GridDensity(F(0), F(1, L), np.array(vals))
    other = rng.permutation(np.array(vals))
    g = GridDensity(F(int(rng.integers(-2, 3)), L), F(1, L), other)
    plan = greedy_join(f, g, grid_shifts(L, -5, 5), 3)
    first, second = plan_marginals(plan)
    assert np.allclose(first.values + plan.f_res.values, f.values, atol=1e-12)
    assert np.allclose(second.values + plan.g_res.values, g.values, atol=1e-12)
    assert np.all(plan.f_res.values >= -1e-12)
    curve = [f.mass, *plan.sweep_log]
    assert all(b <= a + 1e-15 for a, b in zip(curve, curve[1:]))


def test_plan_json_shape():
    f = uniform_density(4)
    plan = greedy_join(f, f, [F(-1, 4), F(0)], 2)
    d = plan.to_dict()
    assert d["step"] == "1/4"
    assert all(e["q"].endswith("/4") for e in d["entries"])
    # the -1/4 shift takes 3/4 of the mass first and strands the end cells
    assert d["residual_mass"] == 0.25 and d["stalled"]
