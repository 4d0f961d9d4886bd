"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every criterion is checked at its stated tolerance. Where a check fails
for a mathematical reason rather than a numerical one, the test still
asserts the stated tolerance and fails; the details line carries the
measured values so the discrepancy is visible in the summary.
"""

import csv
import filecmp
import math
import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

import oracles
from escapelab import asymptotics, cli, fpe, kramers, landscapes, minibatch, sde

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

QUAD = landscapes.builtin("quadratic", a=1.0)
DW = landscapes.builtin("double_well_1d")
TWO = landscapes.builtin("two_well_2d", c1=1.0, c2=4.0, k=10.0)


def rel_err(a, b):
    return abs(a / b - 1.0)


def read_table(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


# --------------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_escape_times_follow_the_exponential_law(verdict):
    t0 = time.perf_counter()
    etas = [4.0, 8.0, 12.0]
    means, formulas = [], []
    for eta in etas:
        problem = kramers.EscapeProblem.from_catalog(DW, 0, 1, eta, epsilon=0.2)
        schedule = sde.Schedule.constant(gamma=0.5, batch=eta / 4.0, beta=1.0)
        stats = kramers.mc_first_passage(problem, schedule, 1e-3, 10_000, master_seed=20240601)
        means.append(stats.mean_time)
        formulas.append(kramers.eyring_kramers_time(problem))
    slope = np.polyfit(etas, np.log(means), 1)[0]
    wall = time.perf_counter() - t0
    # exact mean first-passage time to the near edge of the target ball
    exact = [oracles.exact_mfpt_1d(oracles.double_well, eta, -1.0, 0.8) for eta in etas]
    checks = {
        "eta*H=1 within 20%": rel_err(means[0], formulas[0]) <= 0.20,
        "eta*H=2 within 15%": rel_err(means[1], formulas[1]) <= 0.15,
        "eta*H=3 within 15%": rel_err(means[2], formulas[2]) <= 0.15,
        "slope within 10% of H": rel_err(slope, 0.25) <= 0.10,
        "runtime <= 10 min": wall <= 600,
    }
    verdict(checks, "mc/formula=" + ", ".join(f"{m / f:.4f}" for m, f in zip(means, formulas))
            + "; mc/exact=" + ", ".join(f"{m / e:.4f}" for m, e in zip(means, exact))
            + f"; slope={slope:.4f}; {wall:.0f}s")


@pytest.mark.criterion(2)
def test_fpe_relaxes_to_gibbs_density(verdict):
    t0 = time.perf_counter()
    schedule = sde.Schedule.constant(gamma=0.5, batch=1, beta=1.0)
    grid = fpe.Grid.uniform(-5.0, 5.0, 200)
    p_inf = fpe.stationary_density(QUAD, schedule.eta_inf, grid)
    snaps = fpe.solve_fpe(QUAD, schedule, fpe.mollified_dirac(grid, [1.0]), 10.0, 0.004, 0.5)
    dist = fpe.weighted_l2_distance(snaps[-1], p_inf)
    drift = max(abs(s.mass - snaps[0].mass) for s in snaps)
    still = fpe.solve_fpe(QUAD, schedule, p_inf, 1.0, 0.004, 1.0)
    sup_drift = float(np.max(np.abs(still[-1].values - p_inf.values))) / 1.0
    wall = time.perf_counter() - t0
    checks = {
        "weighted L2 <= 1e-3": dist <= 1e-3,
        "mass drift <= 1e-8": drift <= 1e-8,
        "fixed point drift <= 1e-6": sup_drift <= 1e-6,
        "runtime <= 1 min": wall <= 60,
    }
    verdict(checks, f"dist={dist:.3e}; mass drift={drift:.1e}; sup drift={sup_drift:.1e}; "
                    f"{wall:.1f}s")


@pytest.mark.criterion(3)
def test_fpe_decay_respects_poincare_bound(verdict):
    C_P = asymptotics.poincare_constant(QUAD, fpe.Grid.uniform(-8.0, 8.0, 320))
    grid = fpe.Grid.uniform(-6.0, 6.0, 240)
    rates, measured, satisfied = {}, {}, {}
    for M in (1, 2, 4):
        schedule = sde.Schedule.constant(gamma=0.5, batch=M, beta=1.0)
        T = asymptotics.burn_in_threshold(schedule, QUAD, grid, R=2.0, C_P=C_P).T
        snaps = fpe.solve_fpe(QUAD, schedule, fpe.mollified_dirac(grid, [1.0]), 6.0, 0.002, 0.1)
        rep = asymptotics.theorem1_bound_check(QUAD, schedule, snaps, T=T, C_P=C_P)
        rates[M], measured[M], satisfied[M] = rep.bound_rate, rep.fit.rate, rep.all_satisfied
    checks = {
        "C_P = 1 within 2%": rel_err(C_P, 1.0) <= 0.02,
        "bound holds at every snapshot": all(satisfied.values()),
        "measured rate >= bound rate": all(measured[M] >= rates[M] for M in rates),
        "bound rate halves when M doubles": rates[2] == rates[1] / 2 and rates[4] == rates[2] / 2,
    }
    verdict(checks, f"C_P={C_P:.5f}; bound rates={[rates[M] for M in rates]}; "
                    f"measured={[round(measured[M], 4) for M in measured]}")


def _basin_ratio(terminal):
    left = np.count_nonzero(terminal[:, 0] < 0.0)
    return left / (terminal.shape[0] - left)


def _two_well_ensemble(gamma, batch, n_paths, seed):
    spec = sde.SimulatorSpec(kind="sgd_sde", landscape=TWO, w0=(0.0, 0.0),
                             schedule=sde.Schedule.constant(gamma, batch, 1.0), dt=0.01,
                             t_end=100.0, stability_radius=1.5)
    return sde.run_ensemble(spec, n_paths, master_seed=seed).terminal_states


@pytest.mark.criterion(4)
def test_flat_well_holds_more_mass_by_determinant_ratio(verdict):
    target = asymptotics.well_probability_ratio(*TWO.minima)
    # (a) matched small balls on the Gibbs density
    grid = fpe.Grid.uniform(-3.5, 3.5, 350, dim=2)
    p8 = fpe.stationary_density(TWO, 8.0, grid)
    flat, sharp = (asymptotics.ball_mass(p8, m.location, 0.1) for m in TWO.minima)
    ball_ratio = flat / sharp
    ball_oracle = oracles.two_well_ball_ratio(8.0, 0.1)
    # (b) long-run ensemble started on the saddle, basins split at x = 0
    ratio_b = _basin_ratio(_two_well_ensemble(0.25, 1, 100_000, seed=81))
    # (c) other (gamma, M) at the same eta, and other eta by quadrature
    ratio_c = _basin_ratio(_two_well_ensemble(0.5, 2, 50_000, seed=82))
    by_eta = {}
    for eta in (6.0, 8.0, 10.0):
        p = fpe.stationary_density(TWO, eta, grid)
        left = p.values[grid.centers(0) < 0].sum()
        by_eta[eta] = left / p.values[grid.centers(0) > 0].sum()
    checks = {
        "determinant ratio is 2": rel_err(target, 2.0) < 1e-6,
        "grid ball masses match quadrature oracle": rel_err(ball_ratio, ball_oracle) <= 0.01,
        "(a) eps=0.1 ball ratio within 2% of 2": rel_err(ball_ratio, 2.0) <= 0.02,
        "(b) ensemble ratio within 5% of 2": rel_err(ratio_b, 2.0) <= 0.05,
        "(c) invariant under (gamma, M)": rel_err(ratio_c, ratio_b) <= 0.05,
        "(c) invariant under eta": max(by_eta.values()) / min(by_eta.values()) - 1 <= 0.05,
    }
    verdict(checks, f"ball ratio={ball_ratio:.4f} (oracle {ball_oracle:.4f}); "
                    f"ensemble={ratio_b:.4f}, {ratio_c:.4f}; "
                    f"by eta={', '.join(f'{v:.4f}' for v in by_eta.values())}")


@pytest.mark.criterion(5)
def test_trapping_probability_of_quadratic_well(verdict, tmp_path):
    grid = fpe.Grid.uniform(-5.0, 5.0, 400)
    m = QUAD.minima[0]
    q = asymptotics.trapping_probability(QUAD, m, 4.0, 0.5, grid).quadrature_probability
    r1 = asymptotics.trapping_probability(QUAD, m, 4.0, 0.1, grid).ratio
    r2 = asymptotics.trapping_probability(QUAD, m, 4.0, 0.05, grid).ratio
    cli.run(str(CONFIGS / "stationary_quadratic.yaml"), out=str(tmp_path))
    header = [ln for ln in (tmp_path / "trapping.csv").read_text().splitlines()
              if ln.startswith("#")]
    checks = {
        "eps=0.5 probability 0.68269 +- 0.005": abs(q - 0.68269) <= 0.005,
        "ratio stable within 5% from eps 0.1 to 0.05": rel_err(r2, r1) <= 0.05,
        "discrepancy report emitted": any("not forced" in ln for ln in header),
    }
    verdict(checks, f"P={q:.6f}; ratios={r1:.4f}, {r2:.4f}")


@pytest.mark.criterion(6)
def test_kinetic_equation_conserves_and_relaxes(verdict):
    t0 = time.perf_counter()
    args = (0.01, 0.9, 1.0, 1.0)
    grid = fpe.Grid.phase_space((-2.0, 2.0, 128), (-2.0, 2.0, 128))
    psi_inf = fpe.stationary_phase_density(QUAD, *args, grid)
    w, v = grid.mesh()[..., 0], grid.mesh()[..., 1]
    psi0 = fpe.gaussian_density(grid, [0.5, 0.0], [0.3, 0.3])
    snaps = fpe.solve_vfp(QUAD, *args, psi0, 10.0, 0.005, 0.5)
    drift = max(abs(s.mass - snaps[0].mass) for s in snaps)
    still = fpe.solve_vfp(QUAD, *args, psi_inf, 1.0, 0.005, 1.0)
    sup_drift = float(np.max(np.abs(still[-1].values - psi_inf.values))) / 1.0
    eta_p = fpe.phase_eta(*args)
    p_v = fpe.stationary_density(QUAD, eta_p, fpe.Grid(grid.axes[1:]))
    dist_v = fpe.weighted_l2_distance(snaps[-1].v_marginal(), p_v)
    wall = time.perf_counter() - t0
    checks = {
        "mass drift <= 1e-8": drift <= 1e-8,
        "fixed point drift <= 1e-5": sup_drift <= 1e-5,
        "v-marginal weighted L2 <= 1e-2": dist_v <= 1e-2,
        "runtime <= 5 min": wall <= 300,
    }
    verdict(checks, f"eta'={eta_p:g}; mass drift={drift:.1e}; sup drift={sup_drift:.1e}; "
                    f"v dist={dist_v:.2e}; {wall:.0f}s")


def _msgd_run(M):
    args = (0.01, 0.9, M, 1.0)
    grid = fpe.Grid.phase_space((-2.0, 2.0, 128), (-2.0, 2.0, 128))
    consts = asymptotics.msgd_rate_constants(0.01, 0.9, 1.0, 0.0, 1.0, M, 1.0, 1)
    psi_inf = fpe.stationary_phase_density(QUAD, *args, grid)
    psi0 = fpe.gaussian_density(grid, [0.5, 0.0], [0.3, 0.3])
    snaps = fpe.solve_vfp(QUAD, *args, psi0, 10.0, 0.005, 0.25)
    return asymptotics.theorem3_bound_check(snaps, consts, psi_inf)


@pytest.mark.criterion(7)
def test_momentum_rate_constants_and_bound(verdict):
    c1 = asymptotics.msgd_rate_constants(0.01, 0.9, 1.0, 0.0, 1.0, 1, 1.0, 1)
    c2 = asymptotics.msgd_rate_constants(0.01, 0.7, 1.0, 0.0, 1.0, 1, 1.0, 1)
    got1 = (c1.mu, c1.C, c1.C_hat, c1.lambda_min)
    got2 = (c2.mu, c2.C, c2.C_hat, c2.lambda_min)
    ref2 = oracles.momentum_rate_constants(0.01, 0.7, 1.0)
    one, two = _msgd_run(1.0), _msgd_run(2.0)
    H = one.H
    checks = {
        "first case to 1e-9": np.allclose(got1, (1.0, 1.0, 0.5, 0.5), rtol=0, atol=1e-9),
        "second case to 1e-9": np.allclose(got2, ref2, rtol=0, atol=1e-9)
        and np.allclose(got2, (3 - math.sqrt(5), 3.5, 1.5, (4.5 - math.sqrt(15.25)) / 2),
                        rtol=0, atol=1e-9),
        "bound holds at every snapshot": one.all_satisfied,
        "H non-increasing": bool(np.all(np.diff(H) <= 1e-12 * H[0])),
        "doubling M slows decay": two.fit.rate < one.fit.rate,
    }
    verdict(checks, f"lambda_min={got2[3]:.6f}; fitted rates M=1: {one.fit.rate:.4f}, "
                    f"M=2: {two.fit.rate:.4f}; bound rate={one.bound_rate:g}")


@pytest.mark.criterion(8)
def test_minibatch_noise_moments(verdict):
    data = minibatch.make_dataset("logistic", 512, 5, 0.0, 11, design="mixture")
    loss = minibatch.CrossEntropyLoss(0.01)
    w = data.w_true
    n_draws = 10_000
    mean, cov = minibatch.estimate_noise_moments(loss, data, w, 8, n_draws, seed=8)
    exact = oracles.finite_population_covariance(loss.per_sample_gradients(data, w))
    se = np.sqrt(np.diag(cov) / n_draws)
    z = float(np.max(np.abs(mean) / se))
    rel = float(np.linalg.norm(cov - exact) / np.linalg.norm(exact))
    checks = {
        "mean within 4 SE of 0": z <= 4.0,
        "covariance within 10% Frobenius": rel <= 0.10,
    }
    verdict(checks, f"max |mean|/SE={z:.2f}; relative Frobenius error={rel:.4f}")


def _negative_quadratic():
    return landscapes.custom("negative_quadratic", 1, lambda w: -0.5 * w[..., 0] ** 2,
                             lambda w: -w, lambda w: np.full(w.shape[:-1] + (1, 1), -1.0))


@pytest.mark.criterion(9)
def test_assumption_suite(verdict):
    names = [("quadratic", {}), ("double_well_1d", {}), ("tilted_double_well_1d", {"delta": 0.1}),
             ("two_well_2d", {"c1": 1.0, "c2": 4.0, "k": 10.0})]
    checks = {}
    for name, params in names:
        v = landscapes.check_assumptions(landscapes.builtin(name, **params)).verdicts()
        checks[f"{name} A1-A3 pass"] = v["A1"] == v["A2"] == v["A3"] == "pass"
    a4 = landscapes.check_assumptions(QUAD)["A4"]
    checks["quadratic A4 pass with b=0"] = a4.verdict == "pass" and a4.witness["b"] == 0.0
    checks["negative quadratic fails A1"] = (
        landscapes.check_assumptions(_negative_quadratic())["A1"].verdict == "fail")
    verdict(checks, f"{len(checks)} checks")


@pytest.mark.criterion(10)
def test_sharpness_grows_with_batch_size(verdict, tmp_path):
    t0 = time.perf_counter()
    cli.run(str(CONFIGS / "empirical_logistic.yaml"), out=str(tmp_path))
    wall = time.perf_counter() - t0
    med = {(float(r["gamma"]), int(float(r["M"]))): float(r["median_terminal_frobenius"])
           for r in read_table(tmp_path / "summary.csv")}
    checks = {
        "non-decreasing in M": med[(0.5, 4)] <= med[(0.5, 16)] <= med[(0.5, 64)],
        "(0.5,4) vs (1,8) within 15%": rel_err(med[(1.0, 8)], med[(0.5, 4)]) <= 0.15,
        "(0.5,16) vs (1,32) within 15%": rel_err(med[(1.0, 32)], med[(0.5, 16)]) <= 0.15,
        "runtime <= 10 min": wall <= 600,
    }
    verdict(checks, "medians " + ", ".join(f"{k}: {v:.4f}" for k, v in med.items())
            + f"; {wall:.0f}s")


@pytest.mark.criterion(11)
def test_outputs_do_not_depend_on_thread_count(verdict, tmp_path):
    checks = {}
    for name in ("kramers_double_well", "simulate_two_well", "stationary_quadratic"):
        dirs = []
        for threads in (1, 8):
            out = tmp_path / f"{name}-{threads}"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cli.run(str(CONFIGS / f"{name}.yaml"), out=str(out), threads=threads)
            dirs.append(out)
        files = sorted(f for f in os.listdir(dirs[0]) if f != "manifest.json")
        _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], files, shallow=False)
        checks[f"{name} identical"] = not mismatch and not errors and bool(files)
    verdict(checks, f"{len(checks)} configs compared")
