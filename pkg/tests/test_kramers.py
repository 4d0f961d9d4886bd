import math
import warnings

import numpy as np
import pytest

import oracles
from escapelab import kramers, landscapes, sde
from escapelab.errors import (ArgumentError, ExpOverflowError, SaddleSearchError,
                              StepSizeError)

DW = landscapes.builtin("double_well_1d")
TWO = landscapes.builtin("two_well_2d", c1=1, c2=4, k=10)


def schedule_for(eta):
    # gamma = 0.5, beta = 1 -> M = eta / 4
    return sde.Schedule.constant(0.5, eta / 4.0, 1.0)


class TestFormula:
    @pytest.mark.parametrize("eta", [1.0, 4.0, 8.0, 12.0])
    def test_double_well(self, eta):
        p = kramers.EscapeProblem.from_catalog(DW, 0, 1, eta, epsilon=0.2)
        assert kramers.eyring_kramers_time(p) == pytest.approx(
            oracles.eyring_kramers_1d(2.0, 1.0, 0.25, eta), rel=1e-12)

    def test_known_value(self):
        p = kramers.EscapeProblem.from_catalog(DW, 0, 1, 4.0, epsilon=0.2)
        assert kramers.eyring_kramers_time(p) == pytest.approx(12.077, abs=5e-4)

    def test_two_well_uses_determinants(self):
        p = kramers.EscapeProblem.from_catalog(TWO, 0, 1, 8.0)
        expected = 2 * math.pi * math.sqrt(2.5 / 2.0) * math.exp(2.0)
        assert kramers.eyring_kramers_time(p) == pytest.approx(expected, rel=1e-7)
        assert kramers.eyring_kramers_time(p.reversed()) == pytest.approx(
            2 * math.pi * math.sqrt(2.5 / 8.0) * math.exp(2.0), rel=1e-7)

    def test_overflow_carries_log(self):
        p = kramers.EscapeProblem.from_catalog(DW, 0, 1, 4000.0)
        with pytest.raises(ExpOverflowError) as info:
            kramers.eyring_kramers_time(p)
        assert info.value.log_value == pytest.approx(kramers.log_eyring_kramers_time(p))
        assert info.value.log_value == pytest.approx(1000 + math.log(2 * math.pi / math.sqrt(2)))

    def test_tilted_barriers_order_times(self):
        land = landscapes.builtin("tilted_double_well_1d", delta=0.1)
        up = kramers.EscapeProblem.from_catalog(land, 0, 1, 6.0)
        assert kramers.eyring_kramers_time(up) > kramers.eyring_kramers_time(up.reversed())

    @pytest.mark.parametrize("kw", [{"eta": 0.0}, {"eta": math.inf}, {"epsilon": 1.5},
                                    {"epsilon": -0.1}])
    def test_invalid_problem(self, kw):
        args = {"eta": 4.0, "epsilon": 0.2}
        args.update(kw)
        with pytest.raises(ArgumentError):
            kramers.EscapeProblem.from_catalog(DW, 0, 1, args["eta"], args["epsilon"])

    def test_default_epsilon(self):
        assert kramers.EscapeProblem.from_catalog(DW, 0, 1, 4.0).epsilon == pytest.approx(0.2)


class TestMonteCarlo:
    def test_matches_exact_mfpt_at_high_temperature(self):
        eta = 2.0
        p = kramers.EscapeProblem.from_catalog(DW, 0, 1, eta, epsilon=0.2)
        stats = kramers.mc_first_passage(p, schedule_for(eta), 1e-3, 2000, master_seed=5,
                                         stability_radius=3.0)
        exact = oracles.exact_mfpt_1d(oracles.double_well, eta, -1.0, 0.8)
        assert stats.censored_count == 0
        assert abs(stats.mean_time - exact) < 4 * stats.standard_error + 0.02 * exact

    def test_reproducible_and_thread_independent(self):
        p = kramers.EscapeProblem.from_catalog(DW, 0, 1, 2.0, epsilon=0.2)
        run = [kramers.mc_first_passage(p, schedule_for(2.0), 1e-3, 300, master_seed=1,
                                        threads=t, stability_radius=3.0) for t in (1, 3)]
        np.testing.assert_array_equal(run[0].times, run[1].times)

    def test_censoring_flags_lower_bound(self):
        p = kramers.EscapeProblem.from_catalog(DW, 0, 1, 8.0, epsilon=0.2)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            stats = kramers.mc_first_passage(p, schedule_for(8.0), 1e-3, 200, master_seed=2,
                                             t_cap=1.0, stability_radius=3.0)
        assert stats.censored_count > 20
        assert stats.mean_is_lower_bound
        assert stats.warning and "inconclusive" in stats.warning
        assert any("inconclusive" in str(w.message) for w in caught)
        assert stats.mean_time <= 1.0

    def test_step_too_coarse_for_ball(self):
        p = kramers.EscapeProblem.from_catalog(DW, 0, 1, 0.4, epsilon=0.2)
        with pytest.raises(StepSizeError) as info:
            kramers.mc_first_passage(p, schedule_for(0.4), 1e-3, 10, master_seed=0)
        assert info.value.dt_max == pytest.approx(0.2 ** 2 / (10 * 5.0))

    def test_schedule_must_match_eta(self):
        p = kramers.EscapeProblem.from_catalog(DW, 0, 1, 4.0, epsilon=0.2)
        with pytest.raises(ArgumentError):
            kramers.mc_first_passage(p, schedule_for(8.0), 1e-3, 10, master_seed=0)

    def test_csv(self):
        p = kramers.EscapeProblem.from_catalog(DW, 0, 1, 2.0, epsilon=0.2)
        stats = kramers.mc_first_passage(p, schedule_for(2.0), 1e-3, 50, master_seed=0,
                                         stability_radius=3.0)
        lines = kramers.escape_csv([(p, stats)], header=["run=a"]).splitlines()
        assert lines[0] == "# run=a"
        assert lines[1].split(",")[:4] == ["problem", "eta", "epsilon", "formula_time"]
        assert float(lines[2].split(",")[4]) == stats.mean_time


class TestSaddleSearch:
    def test_double_well(self):
        s = kramers.find_min_saddle(DW, *DW.minima)
        assert s.location[0] == pytest.approx(0.0, abs=1e-10)
        assert s.lambda_star == pytest.approx(1.0)

    @pytest.mark.parametrize("delta", [-0.2, 0.1, 0.3])
    def test_tilted_matches_catalogue(self, delta):
        land = landscapes.builtin("tilted_double_well_1d", delta=delta)
        s = kramers.find_min_saddle(land, *land.minima)
        assert s.location[0] == pytest.approx(land.saddles[0].location[0], abs=1e-10)

    def test_two_well_string_method(self):
        s = kramers.find_min_saddle(TWO, *TWO.minima)
        np.testing.assert_allclose(s.location, [0.0, 0.0], atol=1e-6)
        assert s.barriers[0] == pytest.approx(0.25, abs=1e-9)
        assert s.barriers[1] == pytest.approx(0.25, abs=1e-9)

    def test_coincident_minima(self):
        with pytest.raises(SaddleSearchError):
            kramers.find_min_saddle(DW, DW.minima[0], DW.minima[0])
