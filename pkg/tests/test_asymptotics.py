import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from escapelab import asymptotics, fpe, landscapes, sde
from escapelab.errors import (ArgumentError, DegenerateCaseError, DomainError,
                              HypothesisViolationError, InsufficientDataError,
                              NoFiniteTimeError)

QUAD = landscapes.builtin("quadratic", a=1.0)
DW = landscapes.builtin("double_well_1d")
TWO = landscapes.builtin("two_well_2d", c1=1, c2=4, k=10)


class TestFitDecayRate:
    @given(st.floats(0.05, 5.0), st.floats(-3, 3))
    def test_exact_exponential(self, rate, c):
        t = np.linspace(0, 4, 40)
        fit = asymptotics.fit_decay_rate(t, np.exp(c - rate * t))
        assert fit.rate == pytest.approx(rate, rel=1e-8, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.t_lo == pytest.approx(t[20])

    def test_window(self):
        t = np.linspace(0, 10, 101)
        y = np.where(t < 5, np.exp(-3 * t), np.exp(-15) * np.exp(-(t - 5)))
        assert asymptotics.fit_decay_rate(t, y, window=(0, 4)).rate == pytest.approx(3.0)
        assert asymptotics.fit_decay_rate(t, y).rate == pytest.approx(1.0)

    def test_floor_excludes_tiny_values(self):
        t = np.arange(40.0)
        y = np.exp(-2.0 * t)
        with pytest.raises(InsufficientDataError):
            asymptotics.fit_decay_rate(t, y)

    @pytest.mark.parametrize("window", [(2.0, 1.0), (-1.0, 2.0)])
    def test_bad_window(self, window):
        with pytest.raises(ArgumentError):
            asymptotics.fit_decay_rate(np.arange(20.0), np.ones(20), window=window)


class TestTrapping:
    @pytest.mark.parametrize("eta,eps", [(4.0, 0.5), (8.0, 0.2), (20.0, 0.1)])
    def test_quadratic_ball_mass_is_erf(self, eta, eps):
        grid = fpe.Grid.uniform(-5, 5, 2000)
        res = asymptotics.trapping_probability(QUAD, QUAD.minima[0], eta, eps, grid)
        assert res.quadrature_probability == pytest.approx(
            oracles.gaussian_ball_mass_1d(eta, 1.0, eps), rel=2e-4)

    def test_formula_ratio_tends_to_constant(self):
        grid = fpe.Grid.uniform(-5, 5, 4000)
        ratios = [asymptotics.trapping_probability(QUAD, QUAD.minima[0], 4.0, e, grid).ratio
                  for e in (0.1, 0.05, 0.025)]
        assert abs(ratios[2] - ratios[1]) < abs(ratios[1] - ratios[0])

    def test_ball_must_avoid_other_stationary_points(self):
        grid = fpe.Grid.uniform(-3, 3, 300)
        with pytest.raises(HypothesisViolationError):
            asymptotics.trapping_probability(DW, DW.minima[0], 4.0, 1.2, grid)

    def test_ball_inside_grid(self):
        grid = fpe.Grid.uniform(-1.1, 3, 300)
        with pytest.raises(DomainError):
            asymptotics.trapping_probability(DW, DW.minima[0], 4.0, 0.3, grid)

    def test_two_well_ball_ratio_matches_quadrature(self):
        eta, r = 8.0, 0.5
        grid = fpe.Grid.uniform(-4, 4, 200, dim=2)
        p = fpe.stationary_density(TWO, eta, grid)
        flat = asymptotics.ball_mass(p, TWO.minima[0].location, r)
        sharp = asymptotics.ball_mass(p, TWO.minima[1].location, r)
        assert flat / sharp == pytest.approx(oracles.two_well_ball_ratio(eta, r), rel=5e-3)

    def test_small_ball_ratio(self):
        assert asymptotics.well_probability_ratio(*TWO.minima) == pytest.approx(2.0, rel=1e-7)
        tilted = landscapes.builtin("tilted_double_well_1d", delta=0.1)
        with pytest.raises(HypothesisViolationError):
            asymptotics.well_probability_ratio(*tilted.minima)


class TestPoincare:
    def test_quadratic_gap_is_curvature(self):
        grid = fpe.Grid.uniform(-8, 8, 400)
        assert asymptotics.poincare_constant(QUAD, grid) == pytest.approx(1.0, rel=1e-3)

    def test_double_well_matches_schrodinger_form(self):
        grid = fpe.Grid.uniform(-8, 8, 800)
        ref = oracles.poincare_1d_schrodinger(oracles.double_well, oracles.double_well_prime,
                                              oracles.double_well_second)
        assert asymptotics.poincare_constant(DW, grid) == pytest.approx(ref, rel=2e-3)

    @pytest.mark.parametrize("s", [4.0, 8.0])
    def test_scaled_double_well(self, s):
        grid = fpe.Grid.uniform(-4, 4, 800)
        ref = oracles.poincare_1d_schrodinger(
            lambda x: s * oracles.double_well(x), lambda x: s * oracles.double_well_prime(x),
            lambda x: s * oracles.double_well_second(x), lo=-4, hi=4)
        got = asymptotics.poincare_constant(landscapes.scaled(DW, s), grid)
        assert got == pytest.approx(ref, rel=5e-3)

    def test_deep_wells_have_small_gap(self):
        grid = fpe.Grid.uniform(-3, 3, 600)
        gaps = [asymptotics.poincare_constant(landscapes.scaled(DW, s), grid)
                for s in (2.0, 4.0, 8.0)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_two_dimensional_quadratic(self):
        land = landscapes.builtin("quadratic_2d", a1=1.0, a2=3.0)
        grid = fpe.Grid.uniform(-8, 8, 128, dim=2)
        assert asymptotics.poincare_constant(land, grid) == pytest.approx(1.0, rel=5e-3)


class TestBurnIn:
    def test_closed_form_envelope(self):
        T = asymptotics.burn_in_time(lambda t: 2.0 * math.exp(-0.5 * t), 0.1)
        assert T == pytest.approx(2.0 * math.log(20.0), rel=1e-10)

    def test_already_below(self):
        assert asymptotics.burn_in_time(lambda t: 0.0, 1e-3) == 0.0

    def test_never_below(self):
        with pytest.raises(NoFiniteTimeError):
            asymptotics.burn_in_time(lambda t: 1.0, 0.5)

    def test_threshold_for_exp_approach(self):
        s = sde.Schedule.exp_approach(4.0, 1.0, 0.5)
        grid = fpe.Grid.uniform(-6, 6, 240)
        b = asymptotics.burn_in_threshold(s, QUAD, grid, R=2.0, C_P=1.0)
        # C2 = sup |1 - 4 w^2| on |w| <= 2
        assert b.C2 == pytest.approx(15.0)
        assert b.tolerance == pytest.approx(min(4.0 / 3.0, 1.0 / (3.0 * b.C1)))
        assert abs(float(s.eta(b.T)) - 4.0) == pytest.approx(b.tolerance, rel=1e-9)

    def test_constant_schedule_needs_no_burn_in(self):
        s = sde.Schedule.constant(0.5, 1, 1.0)
        b = asymptotics.burn_in_threshold(s, QUAD, fpe.Grid.uniform(-6, 6, 240), R=1.0,
                                          C_P=1.0)
        assert b.T == 0.0


class TestTheorem1:
    def test_ou_bound_holds(self):
        s = sde.Schedule.constant(0.5, 2, 1.0)
        grid = fpe.Grid.uniform(-6, 6, 240)
        p0 = fpe.gaussian_density(grid, [1.0], 0.5)
        snaps = fpe.solve_fpe(QUAD, s, p0, 4.0, 0.002, 0.1)
        rep = asymptotics.theorem1_bound_check(QUAD, s, snaps, T=0.0, C_P=1.0)
        assert rep.all_satisfied
        assert rep.bound_rate == pytest.approx(0.125)
        assert rep.fit.rate > rep.bound_rate
        assert "t,measured,bound,satisfied" in rep.to_csv()

    def test_no_snapshot_after_T(self):
        s = sde.Schedule.constant(0.5, 2, 1.0)
        grid = fpe.Grid.uniform(-6, 6, 120)
        snaps = [fpe.gaussian_density(grid, [0.0], 0.7)]
        with pytest.raises(ArgumentError):
            asymptotics.theorem1_bound_check(QUAD, s, snaps, T=1.0, C_P=1.0)


class TestMsgdConstants:
    @pytest.mark.parametrize("gamma,xi,C_L", [(0.01, 0.9, 1.0), (0.04, 0.5, 1.0),
                                              (0.25, 0.5, 1.0), (0.01, 0.95, 2.0)])
    def test_matches_case_formulas(self, gamma, xi, C_L):
        c = asymptotics.msgd_rate_constants(gamma, xi, C_L, 0.0, 1.0, 1, 1.0, 1)
        mu, C, C_hat, lam = oracles.momentum_rate_constants(gamma, xi, C_L)
        assert (c.mu, c.C, c.C_hat) == pytest.approx((mu, C, C_hat), rel=1e-12)
        assert c.lambda_min == pytest.approx(lam, rel=1e-9)
        assert c.bound_rate == pytest.approx(2 * mu)

    def test_known_values(self):
        c = asymptotics.msgd_rate_constants(0.01, 0.9, 1.0, 0.0, 1.0, 1, 1.0, 1)
        assert (c.case, c.mu, c.C, c.C_hat, c.lambda_min) == pytest.approx(
            (1, 1.0, 1.0, 0.5, 0.5))
        c = asymptotics.msgd_rate_constants(0.01, 0.5, 1.0, 0.0, 1.0, 1, 1.0, 1)
        assert c.case == 2
        assert c.mu == pytest.approx(5 - math.sqrt(21))

    def test_positive_b_reduces_rate(self):
        a = asymptotics.msgd_rate_constants(0.01, 0.9, 1.0, 0.0, 1.0, 1, 1.0, 1)
        b = asymptotics.msgd_rate_constants(0.01, 0.9, 1.0, 0.5, 1.0, 1, 1.0, 1)
        assert b.bound_rate < a.bound_rate
        assert b.mu_hat == pytest.approx((1 + math.sqrt(2)) * 0.5 / (2 * 0.5))

    def test_large_b_is_vacuous(self):
        assert asymptotics.msgd_rate_constants(0.01, 0.9, 1.0, 5.0, 1.0, 1, 1.0, 1).vacuous

    def test_degenerate_boundary(self):
        with pytest.raises(DegenerateCaseError):
            asymptotics.msgd_rate_constants(0.01, 0.8, 1.0, 0.0, 1.0, 1, 1.0, 1)

    @pytest.mark.parametrize("kw", [{"xi": 0.0}, {"xi": 1.0}, {"gamma": 0.0}, {"b": -1.0},
                                    {"M": 0}])
    def test_invalid(self, kw):
        args = dict(gamma=0.01, xi=0.9, C_L=1.0, b=0.0, C_P=1.0, M=1, beta=1.0, dim=1)
        args.update(kw)
        with pytest.raises(ArgumentError):
            asymptotics.msgd_rate_constants(**args)


class TestHypocoercive:
    def _setup(self):
        grid = fpe.Grid.phase_space((-4, 4, 64), (-4, 4, 64))
        psi_inf = fpe.stationary_phase_density(QUAD, 0.01, 0.9, 1, 1.0, grid)
        c = asymptotics.msgd_rate_constants(0.01, 0.9, 1.0, 0.0, 1.0, 1, 1.0, 1)
        return grid, psi_inf, c

    def test_zero_at_equilibrium(self):
        grid, psi_inf, c = self._setup()
        assert asymptotics.hypocoercive_functional(psi_inf, psi_inf, c) == 0.0

    def test_positive_away_from_equilibrium(self):
        grid, psi_inf, c = self._setup()
        w, v = np.meshgrid(grid.centers(0), grid.centers(1), indexing="ij")
        psi = fpe.PhaseDensityField(grid, psi_inf.values * (1 + 0.1 * w), 0.0)
        # h = 0.1 w, so the functional is 0.01 times the Gibbs mass of the box
        assert asymptotics.hypocoercive_functional(psi, psi_inf, c) == pytest.approx(
            0.01 * psi_inf.mass, rel=1e-10)

    def test_theorem3_requires_start_at_zero(self):
        grid, psi_inf, c = self._setup()
        with pytest.raises(ArgumentError):
            asymptotics.theorem3_bound_check([fpe.with_time(psi_inf, 1.0)], c, psi_inf)
