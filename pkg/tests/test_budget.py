import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modred_bounds.budget import (
    BudgetError,
    WeightProfile,
    bisect_cross_check,
    bottom_up_freq,
    bottom_up_global,
    certify_stability,
    default_workers,
    top_down_freq,
    top_down_global,
)
from modred_bounds.casegen import random_coupled_system
from modred_bounds.interconnect import CoupledSystem, InterconnectionMatrix
from modred_bounds.lti import FrequencyGrid, StateSpaceModel, hinf_norm, parallel_diff
from modred_bounds.reduction import balanced_truncate

GRID = FrequencyGrid(np.logspace(-1, 1.5, 40))


def pass_through(g=None):
    """One subsystem whose output error reaches the performance output unchanged."""
    g = g if g is not None else StateSpaceModel([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    K = InterconnectionMatrix.from_full([[0.0, 1.0], [1.0, 0.0]], (1,), (1,))
    return CoupledSystem((g,), K)


class TestPassThrough:
    def test_bottom_up_global_equals_input(self):
        res = bottom_up_global(pass_through(), [0.2], GRID)
        assert res.global_value == pytest.approx(0.2, rel=1e-3)
        assert res.global_value >= 0.2

    def test_top_down_global_equals_spec(self):
        res = top_down_global(pass_through(), 0.3, [], 0, GRID)
        assert res.global_value == pytest.approx(0.3, rel=1e-3)
        assert res.global_value <= 0.3

    def test_top_down_freq_follows_profile(self):
        spec = np.linspace(0.1, 0.5, len(GRID))
        res = top_down_freq(pass_through(), spec, np.zeros((0, len(GRID))), 0, GRID)
        np.testing.assert_allclose(res.values, spec, rtol=1e-3)

    def test_cross_check_matches(self):
        cs = pass_through()
        a = bottom_up_global(cs, [0.2], GRID)
        b = bisect_cross_check(cs, WeightProfile("global", [0.2]), GRID)
        assert b.global_value == pytest.approx(a.global_value, rel=1e-3)


class TestDegenerateLevels:
    def test_zero_levels_give_zero_bound(self):
        cs = random_coupled_system(11, k=3)
        res = bottom_up_global(cs, [0.0, 0.0, 0.0], GRID)
        assert res.global_value is not None and res.global_value < 1e-12

    def test_zero_profiles_give_zero_curve(self):
        cs = random_coupled_system(12)
        res = bottom_up_freq(cs, np.zeros((2, len(GRID))), GRID)
        assert res.all_feasible and np.all(res.values < 1e-12)

    def test_negative_level_rejected(self):
        with pytest.raises(BudgetError):
            bottom_up_global(random_coupled_system(1), [-1.0, 0.0], GRID)

    def test_wrong_count_rejected(self):
        with pytest.raises(BudgetError):
            bottom_up_global(random_coupled_system(1), [0.1], GRID)

    def test_bad_performance_level(self):
        with pytest.raises(BudgetError):
            top_down_global(random_coupled_system(1), 0.0, [0.0], 0, GRID)

    def test_subsystem_index_checked(self):
        with pytest.raises(BudgetError):
            top_down_global(random_coupled_system(1), 1.0, [0.0], 5, GRID)


class TestResultFormats:
    def test_csv_and_json(self, tmp_path):
        cs = random_coupled_system(2, k=2)
        res = bottom_up_global(cs, [0.05, 0.0], GRID)
        text = res.to_csv(tmp_path / "r.csv")
        lines = text.strip().split("\n")
        assert lines[0] == "omega,feasible,value,d_1,d_2,d_c"
        assert len(lines) == len(GRID) + 1
        # the zero-level block has no scaling
        assert lines[1].split(",")[4] == "-"
        doc = json.loads(res.to_json())
        assert doc["global_value"] == res.global_value
        assert float(lines[1].split(",")[2]) == res.per_frequency[0].value

    def test_infeasible_marked(self):
        cs = random_coupled_system(2, k=2)
        res = bottom_up_freq(cs, [1e6, 0.0], GRID)
        assert not res.feasible.any()
        assert "-" in res.to_csv().split("\n")[1]
        assert bottom_up_global(cs, [1e6, 0.0], GRID).global_value is None


class TestConsistency:
    def test_round_trip_top_down_bottom_up(self):
        cs = random_coupled_system(21, k=2)
        td = top_down_global(cs, 0.05, [0.0], 0, GRID)
        assert td.global_value is not None
        bu = bottom_up_global(cs, [td.global_value, 0.0], GRID)
        assert bu.global_value == pytest.approx(0.05, rel=0.01)
        assert bu.global_value <= 0.05 * (1 + 1e-6)

    def test_threads_match_sequential(self):
        cs = random_coupled_system(22, k=2)
        a = bottom_up_freq(cs, [0.05, 0.02], GRID, workers=1, warm_start=False)
        b = bottom_up_freq(cs, [0.05, 0.02], GRID, workers=3, warm_start=False)
        np.testing.assert_array_equal(a.values, b.values)

    def test_default_workers_env(self, monkeypatch):
        monkeypatch.setenv("MODRED_THREADS", "3")
        assert default_workers() == 3
        monkeypatch.setenv("MODRED_THREADS", "x")
        assert default_workers() == 1

    def test_certify_stability(self):
        cs = random_coupled_system(23, k=2, dims=[(4, 1, 1), (3, 1, 1)])
        red = balanced_truncate(cs.subsystems[0], 2)
        eps = hinf_norm(parallel_diff(cs.subsystems[0], red.reduced))[0]
        res = bottom_up_global(cs, [eps, 0.0], GRID)
        if res.global_value is None:
            pytest.skip("instance has no certificate")
        assert certify_stability(cs, cs.replace(0, red.reduced), res)

    def test_certify_requires_global(self):
        cs = random_coupled_system(23)
        res = bottom_up_freq(cs, [0.01, 0.0], GRID)
        with pytest.raises(BudgetError):
            certify_stability(cs, cs, res)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**5), scale=st.floats(0.5, 2.0))
def test_top_down_monotone_in_spec(seed, scale):
    cs = random_coupled_system(seed, k=2)
    grid = FrequencyGrid(np.logspace(-1, 1.5, 15))
    a = top_down_global(cs, 0.05 * scale, [0.0], 0, grid)
    b = top_down_global(cs, 0.1 * scale, [0.0], 0, grid)
    if a.global_value is not None:
        assert b.global_value is not None
        assert b.global_value >= a.global_value * (1 - 1e-3)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**5))
def test_bottom_up_monotone_in_levels(seed):
    cs = random_coupled_system(seed, k=2)
    grid = FrequencyGrid(np.logspace(-1, 1.5, 15))
    a = bottom_up_freq(cs, [0.01, 0.005], grid)
    b = bottom_up_freq(cs, [0.02, 0.005], grid)
    both = a.feasible & b.feasible
    assert np.all(b.feasible <= a.feasible)
    assert np.all(b.values[both] >= a.values[both] * (1 - 1e-3))
