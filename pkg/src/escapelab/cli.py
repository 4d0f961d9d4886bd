"""``escape-lab`` command line: run or validate a YAML experiment config.

Exit codes: 0 success, 2 configuration/argument error, 3 numerical failure.
Artifacts are staged and only moved into the output directory when the
whole experiment succeeds. ``ESCAPE_LAB_OUT`` overrides the default output
directory (``--out`` and the config's ``output`` key take precedence).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import shutil
import sys
import tempfile
import time
import warnings

import numpy as np
import scipy

from . import __version__
from . import asymptotics as asy
from . import fpe, kramers, landscapes, minibatch, rng, sde
from .config import SECTIONS, build_grid, build_landscape, build_schedule, load_config
from .errors import ArgumentError, EscapeLabError, NumericError

ENV_OUT = "ESCAPE_LAB_OUT"
DEFAULT_OUT = "escape-lab-out"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


# --------------------------------------------------------------------------
# helpers

class Artifacts:
    """Ordered collection of output files for one run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.files = {}
        self.header = [f"fingerprint={cfg.fingerprint()}", f"master_seed={cfg.seed}",
                       f"experiment={cfg.kind}"]

    def csv(self, name, text):
        head = "".join(f"# {line}\n" for line in self.header)
        self.files[name] = (head + text).encode("utf-8")

    def table(self, name, columns, rows, extra_header=()):
        buf = io.StringIO()
        for line in extra_header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
        self.csv(name, buf.getvalue())

    def binary(self, name, data):
        self.files[name] = bytes(data)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _initial_density(grid, init, landscape, eta=None, phase_args=None):
    kind = init["kind"]
    if kind == "stationary":
        if phase_args is not None:
            return fpe.stationary_phase_density(landscape, *phase_args, grid)
        return fpe.stationary_density(landscape, eta, grid)
    center = init["center"]
    if center is None:
        center = [0.0] * grid.ndim
    if kind == "dirac":
        return fpe.mollified_dirac(grid, center)
    return fpe.gaussian_density(grid, center, init["std"])


def _poincare_grid(cfg, section, landscape):
    axes = cfg.section(section)["poincare_axes"]
    if axes is None:
        n = 320 if landscape.dim == 1 else 128
        return fpe.Grid.uniform(-8.0, 8.0, n, dim=landscape.dim)
    return build_grid(cfg, key=(section, "poincare_axes"))


# --------------------------------------------------------------------------
# experiment runners

def run_simulate(cfg, art, threads):
    land = build_landscape(cfg)
    s = cfg.section("simulate")
    mode = s["mode"]
    mom = cfg.section("momentum") or {}
    kw = dict(kind=mode, landscape=land, w0=tuple(s["w0"]),
              v0=None if s["v0"] is None else tuple(s["v0"]),
              guard_radius=s["guard_radius"], stability_radius=s["stability_radius"])
    if mode in ("sgd_sde", "discrete_sgd"):
        kw["schedule"] = build_schedule(cfg)
    else:
        kw.update(gamma=mom["gamma"], xi=mom["xi"], M=mom["M"], beta=mom["beta"])
    if mode.endswith("sde"):
        kw.update(dt=s["dt"], t_end=s["t_end"])
    else:
        kw.update(n_steps=s["n_steps"])
    spec = sde.SimulatorSpec(**kw)
    regions = [(r["center"], r["radius"]) for r in s["regions"]]
    stats = sde.run_ensemble(spec, s["n_paths"], cfg.seed, regions=regions, threads=threads)
    d = land.dim
    rows = [("n_paths", "", stats.n_paths)]
    rows += [("mean", i, stats.terminal_mean[i]) for i in range(d)]
    rows += [("covariance", f"{i}:{j}", stats.terminal_covariance[i, j])
             for i in range(d) for j in range(d)]
    rows += [("occupation", j, stats.occupations[j]) for j in range(len(regions))]
    art.table("ensemble.csv", ["quantity", "index", "value"], rows)
    cols = ["path", "seed"] + [f"w_{i + 1}" for i in range(d)]
    vel = stats.terminal_velocities
    if vel is not None:
        cols += [f"v_{i + 1}" for i in range(d)]
    term = []
    for p in range(stats.n_paths):
        row = [p, int(stats.seeds[p])] + list(stats.terminal_states[p])
        if vel is not None:
            row += list(vel[p])
        term.append(row)
    art.table("terminal.csv", cols, term)
    for p in range(min(s["n_trajectories"], stats.n_paths)):
        seed = int(stats.seeds[p])
        if mode == "sgd_sde":
            tr = sde.simulate_sgd_sde(land, kw["schedule"], s["w0"], s["dt"], s["t_end"], seed,
                                      guard_radius=s["guard_radius"],
                                      stability_radius=s["stability_radius"])
        elif mode == "discrete_sgd":
            tr = sde.simulate_discrete_sgd(land, kw["schedule"], s["w0"], s["n_steps"], seed,
                                           guard_radius=s["guard_radius"])
        elif mode == "msgd_sde":
            tr = sde.simulate_msgd_sde(land, mom["gamma"], mom["xi"], mom["M"], mom["beta"],
                                       s["w0"], s["v0"] or [0.0] * d, s["dt"], s["t_end"],
                                       seed, guard_radius=s["guard_radius"],
                                       stability_radius=s["stability_radius"])
        else:
            tr = sde.simulate_discrete_msgd(land, mom["gamma"], mom["xi"], mom["M"],
                                            mom["beta"], s["w0"], s["v0"] or [0.0] * d,
                                            s["n_steps"], seed, guard_radius=s["guard_radius"])
        art.csv(f"trajectory_{p}.csv", tr.to_csv())


def run_solve_fpe(cfg, art, threads):
    land = build_landscape(cfg)
    sched = build_schedule(cfg)
    grid = build_grid(cfg)
    sec = cfg.section("fpe")
    eta = sched.eta_inf
    p0 = _initial_density(grid, sec["initial"], land, eta=eta)
    snaps = fpe.solve_fpe(land, sched, p0, sec["t_end"], sec["dt"], sec["record_every"])
    p_inf = fpe.stationary_density(land, eta, grid)
    rows = []
    for snap in snaps:
        rows.append([snap.time, snap.mass, fpe.weighted_l2_distance(snap, p_inf)]
                    + [snap.variance(a) for a in range(grid.ndim)])
    art.table("fpe_series.csv", ["t", "mass", "weighted_l2"]
              + [f"variance_{a + 1}" for a in range(grid.ndim)], rows,
              extra_header=[f"eta_inf={eta!r}"])
    art.csv("density_final.csv", snaps[-1].to_csv())
    art.binary("density_final.fpe1", snaps[-1].to_bytes())


def run_solve_vfp(cfg, art, threads):
    land = build_landscape(cfg)
    m = cfg.section("momentum")
    args = (m["gamma"], m["xi"], m["M"], m["beta"])
    grid = build_grid(cfg, phase=True)
    sec = cfg.section("vfp")
    psi_inf = fpe.stationary_phase_density(land, *args, grid)
    psi0 = _initial_density(grid, sec["initial"], land, phase_args=args)
    snaps = fpe.solve_vfp(land, *args, psi0, sec["t_end"], sec["dt"], sec["record_every"])
    eta_p = fpe.phase_eta(*args)
    p_v = fpe.stationary_density(landscapes.builtin("quadratic", a=1.0), eta_p,
                                 fpe.Grid(grid.axes[1:]))
    rows = []
    for snap in snaps:
        vm = snap.v_marginal()
        rows.append([snap.time, snap.mass, fpe.weighted_l2_distance(snap, psi_inf), vm.mass,
                     fpe.weighted_l2_distance(vm, p_v)])
    art.table("vfp_series.csv", ["t", "mass", "weighted_l2", "v_marginal_mass",
                                 "v_marginal_weighted_l2"], rows,
              extra_header=[f"eta_prime={eta_p!r}"])
    art.csv("density_final.csv", snaps[-1].to_csv())
    art.binary("density_final.fpe1", snaps[-1].to_bytes())


def run_kramers(cfg, art, threads):
    land = build_landscape(cfg)
    sched = build_schedule(cfg)
    k = cfg.section("kramers")
    m1, m2 = land.minima[k["from"]], land.minima[k["to"]]
    if k["saddle"] == "search":
        saddle = kramers.find_min_saddle(land, m1, m2)
    else:
        saddle = land.saddles[0]
    problem = kramers.EscapeProblem(land, m1, m2, saddle, float(sched.eta(0.0)), k["epsilon"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        stats = kramers.mc_first_passage(problem, sched, k["dt"], k["n_paths"], cfg.seed,
                                         t_cap=k["t_cap"], threads=threads)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    art.csv("escape.csv", kramers.escape_csv([(problem, stats)]))


def run_stationary(cfg, art, threads):
    land = build_landscape(cfg)
    grid = build_grid(cfg)
    st = cfg.section("stationary") or {"eta": None, "epsilons": [], "minima": None}
    eta = st["eta"] if st["eta"] is not None else build_schedule(cfg).eta_inf
    p = fpe.stationary_density(land, eta, grid)
    art.csv("density.csv", p.to_csv(header=[f"eta={eta!r}"]))
    rows = [("mass", "", p.mass)]
    for a in range(grid.ndim):
        rows.append(("mean", a, p.moment(a, 1) / p.mass))
        rows.append(("variance", a, p.variance(a)))
    art.table("summary.csv", ["quantity", "index", "value"], rows,
              extra_header=[f"eta={eta!r}"])
    idx = st["minima"] if st["minima"] is not None else list(range(len(land.minima)))
    if st["epsilons"]:
        trows = []
        for i in idx:
            for eps in st["epsilons"]:
                r = asy.trapping_probability(land, land.minima[i], eta, eps, grid)
                trows.append([i, eps, r.quadrature_probability, r.formula_factor, r.ratio])
        extra = []
        if len(idx) == 2:
            m1, m2 = land.minima[idx[0]], land.minima[idx[1]]
            if abs(m1.value - m2.value) <= 1e-10:
                extra.append(f"determinant_ratio={asy.well_probability_ratio(m1, m2)!r}")
        extra.append("formula_factor uses the displayed small-ball limit verbatim; "
                     "ratio = formula_factor / quadrature is reported, not forced to 1")
        art.table("trapping.csv", ["minimum", "epsilon", "quadrature_probability",
                                   "formula_factor", "ratio"], trows, extra_header=extra)


def run_rates(cfg, art, threads):
    land = build_landscape(cfg)
    sched = build_schedule(cfg)
    grid = build_grid(cfg)
    sec = cfg.section("rates")
    C_P = asy.poincare_constant(land, _poincare_grid(cfg, "rates", land))
    burn = asy.burn_in_threshold(sched, land, grid, sec["R"], C_P=C_P)
    p0 = _initial_density(grid, sec["initial"], land, eta=sched.eta_inf)
    snaps = fpe.solve_fpe(land, sched, p0, sec["t_end"], sec["dt"], sec["record_every"])
    report = asy.theorem1_bound_check(land, sched, snaps, burn.T, C_P)
    extra = [f"burn_in_T={burn.T!r}", f"burn_in_tolerance={burn.tolerance!r}",
             f"C1={burn.C1!r}", f"C2={burn.C2!r}"]
    art.csv("bound.csv", report.to_csv(header=extra))


def run_msgd_rates(cfg, art, threads):
    land = build_landscape(cfg)
    m = cfg.section("momentum")
    sec = cfg.section("msgd_rates") or {k: f.default for k, f in SECTIONS["msgd_rates"].items()}
    C_L, b = sec["C_L"], sec["b"]
    if C_L is None or b is None:
        rep = landscapes.check_assumptions(land, box=sec["box"])
        wit = rep["A4"].witness
        C_L = wit["C_L"] if C_L is None else C_L
        b = wit["b"] if b is None else b
    C_P = sec["C_P"]
    if C_P is None:
        C_P = asy.poincare_constant(land, _poincare_grid(cfg, "msgd_rates", land))
    consts = asy.msgd_rate_constants(m["gamma"], m["xi"], C_L, b, C_P, m["M"], m["beta"],
                                     land.dim)
    rows = [(k, v) for k, v in consts.as_dict().items()]
    rows += [("case", consts.case), ("C_L", C_L), ("b", b), ("vacuous", consts.vacuous)]
    art.table("constants.csv", ["name", "value"], rows, extra_header=[f"box={sec['box']!r}"])
    if sec["run_vfp"]:
        grid = build_grid(cfg, phase=True)
        v = cfg.section("vfp")
        args = (m["gamma"], m["xi"], m["M"], m["beta"])
        psi_inf = fpe.stationary_phase_density(land, *args, grid)
        psi0 = _initial_density(grid, v["initial"], land, phase_args=args)
        snaps = fpe.solve_vfp(land, *args, psi0, v["t_end"], v["dt"], v["record_every"])
        report = asy.theorem3_bound_check(snaps, consts, psi_inf)
        art.csv("bound.csv", report.to_csv())
        art.table("functional.csv", ["t", "H"], zip(report.times, report.H))


def run_empirical(cfg, art, threads, plot_data=False):
    e = cfg.section("empirical")
    ds = e["dataset"]
    data = minibatch.make_dataset(ds["kind"], ds["n"], ds["d"], ds["noise"], ds["seed"],
                                  design=ds["design"], margin_scale=ds["margin_scale"])
    loss = (minibatch.SquaredLoss() if e["loss"]["kind"] == "squared"
            else minibatch.CrossEntropyLoss(e["loss"]["lam"]))
    seeds = [int(s) for s in rng.derive_seeds(cfg.seed, e["n_seeds"]) % np.uint64(2 ** 63)]
    trace_rows, summary, series = [], [], {}
    for i, r in enumerate(e["runs"]):
        opt = (minibatch.SGD(r["gamma"], r["M"]) if r["optimizer"] == "sgd"
               else minibatch.MSGD(r["gamma"], r["xi"], r["M"]))
        traces = [minibatch.train_with_sharpness(loss, data, opt, e["n_steps"],
                                                 e["record_every"], s) for s in seeds]
        for s, tr in zip(seeds, traces):
            for st, lv, fr in zip(tr.steps, tr.loss, tr.frobenius):
                trace_rows.append([i, s, st, lv, fr])
        term_f = np.array([tr.frobenius[-1] for tr in traces])
        term_l = np.array([tr.loss[-1] for tr in traces])
        summary.append([i, r["optimizer"], r["gamma"], r["M"],
                        "" if r["xi"] is None else r["xi"], float(np.median(term_f)),
                        float(np.median(term_l))])
        series[i] = (traces[0].steps, np.median(np.stack([t.frobenius for t in traces]), axis=0))
    art.table("sharpness.csv", ["run", "seed", "step", "loss", "hessian_frobenius"], trace_rows)
    art.table("summary.csv", ["run", "optimizer", "gamma", "M", "xi",
                              "median_terminal_frobenius", "median_terminal_loss"], summary)
    if plot_data:
        steps = series[0][0]
        cols = ["step"] + [f"log_frobenius[{_pair(r)}]" for r in e["runs"]]
        rows = [[st] + [math.log(series[i][1][k]) for i in range(len(e["runs"]))]
                for k, st in enumerate(steps)]
        art.table("plot_series.csv", cols, rows)
    nm = e["noise_moments"]
    if nm is not None:
        w = np.zeros(data.d) if nm["w"] is None else np.asarray(nm["w"], dtype=float)
        mean, cov = minibatch.estimate_noise_moments(loss, data, w, nm["M"], nm["n_draws"],
                                                     seeds[0])
        exact = minibatch.population_noise_covariance(loss, data, w)
        rel = float(np.linalg.norm(cov - exact) / np.linalg.norm(exact))
        beta_hat, aniso = minibatch.isotropy_diagnostic(cov)
        rows = [("mean", i, mean[i]) for i in range(data.d)]
        rows += [("covariance", f"{i}:{j}", cov[i, j]) for i in range(data.d)
                 for j in range(data.d)]
        rows += [("exact_covariance", f"{i}:{j}", exact[i, j]) for i in range(data.d)
                 for j in range(data.d)]
        rows += [("covariance_rel_frobenius_error", "", rel), ("beta_hat", "", beta_hat),
                 ("anisotropy", "", aniso)]
        art.table("noise_moments.csv", ["quantity", "index", "value"], rows)


def _pair(r):
    if r["optimizer"] == "msgd":
        return f"xi={r['xi']!r},M={r['M']}"
    return f"gamma={r['gamma']!r},M={r['M']}"


def run_assumptions(cfg, art, threads):
    land = build_landscape(cfg)
    a = cfg.section("assumptions") or {k: f.default for k, f in SECTIONS["assumptions"].items()}
    rep = landscapes.check_assumptions(land, radii=a["radii"],
                                       samples_per_shell=a["samples_per_shell"],
                                       box=a["box"], box_points=a["box_points"])
    art.csv("assumptions.csv", rep.to_csv())


RUNNERS = {
    "simulate": run_simulate,
    "solve-fpe": run_solve_fpe,
    "solve-vfp": run_solve_vfp,
    "kramers": run_kramers,
    "stationary": run_stationary,
    "rates": run_rates,
    "msgd-rates": run_msgd_rates,
    "empirical": run_empirical,
    "assumptions": run_assumptions,
}


# --------------------------------------------------------------------------
# run / validate

def _out_dir(args_out, cfg):
    if args_out:
        return args_out
    if cfg.data.get("output"):
        return cfg.data["output"]
    return os.environ.get(ENV_OUT) or DEFAULT_OUT


def _versions():
    return {"escapelab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run(config_path, out=None, threads=1, plot_data=False):
    """Execute an experiment; returns the manifest dictionary."""
    cfg = load_config(config_path)
    if threads < 1:
        raise ArgumentError("--threads must be >= 1")
    out_dir = _out_dir(out, cfg)
    art = Artifacts(cfg)
    t0 = time.perf_counter()
    runner = RUNNERS[cfg.kind]
    if cfg.kind == "empirical":
        runner(cfg, art, threads, plot_data=plot_data)
    else:
        runner(cfg, art, threads)
    wall = time.perf_counter() - t0
    os.makedirs(out_dir, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".staging-", dir=out_dir)
    moved = []
    try:
        for name, data in art.files.items():
            with open(os.path.join(staging, name), "wb") as fh:
                fh.write(data)
        manifest = {
            "config_fingerprint": cfg.fingerprint(),
            "experiment": cfg.kind,
            "master_seed": cfg.seed,
            "artifacts": [{"file": n, "bytes": len(d), "sha256": hashlib.sha256(d).hexdigest()}
                          for n, d in art.files.items()],
            "wall_clock_seconds": wall,
            "versions": _versions(),
        }
        with open(os.path.join(staging, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name in list(art.files) + ["manifest.json"]:
            os.replace(os.path.join(staging, name), os.path.join(out_dir, name))
            moved.append(name)
    except BaseException:
        for name in moved:
            try:
                os.remove(os.path.join(out_dir, name))
            except OSError:
                pass
        raise
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return manifest


def _boundary_diagnostics(grid, values, label):
    """Name every grid bound where the Gibbs density exceeds 1e-12 of its max."""
    out = []
    peak = float(np.max(values))
    for a, (lo, hi, _) in enumerate(grid.axes):
        for side, bound, idx in (("lower", lo, 0), ("upper", hi, -1)):
            sl = [slice(None)] * grid.ndim
            sl[a] = idx
            edge = float(np.max(values[tuple(sl)])) / peak
            if edge > fpe.BOUNDARY_RATIO:
                out.append(f"{label}[{a}] {side} bound {bound!r} truncates the stationary "
                           f"density (boundary value {edge:.3g} of max, needs <= 1e-12)")
    return out


def validate(config_path):
    """Return ``(info_lines, problems)`` without running the experiment."""
    cfg = load_config(config_path)
    info, problems = [], []
    kind = cfg.kind
    land = build_landscape(cfg) if cfg.section("landscape") else None
    sched = build_schedule(cfg) if cfg.section("schedule") else None
    mom = cfg.section("momentum")
    mem = 0
    if sched is not None:
        info.append(f"eta_inf: {sched.eta_inf!r}")
    if mom is not None and 0 < mom["xi"] < 1 and mom["beta"] > 0:
        info.append(f"eta_prime: {fpe.phase_eta(mom['gamma'], mom['xi'], mom['M'], mom['beta'])!r}")
    grid = None
    if cfg.section("grid") is not None:
        phase = kind in ("solve-vfp", "msgd-rates")
        grid = build_grid(cfg, phase=phase)
        mem += 8 * int(np.prod(grid.shape)) * 8
        if phase:
            args = (mom["gamma"], mom["xi"], mom["M"], mom["beta"])
            d = grid.dim
            w = grid.mesh()
            energy = land.value(w[..., :d]) + 0.5 * np.sum(w[..., d:] ** 2, axis=-1)
            vals = np.exp(-fpe.phase_eta(*args) * (energy - energy.min()))
        else:
            eta = None
            if kind == "stationary" and cfg.section("stationary") and \
                    cfg.section("stationary")["eta"] is not None:
                eta = cfg.section("stationary")["eta"]
            elif sched is not None:
                eta = sched.eta_inf
            if kind == "stationary":
                info.append(f"eta: {eta!r}")
            L = land.value(grid.mesh())
            vals = np.exp(-eta * (L - L.min()))
        problems += _boundary_diagnostics(grid, vals, "grid.axes")
    for name in ("fpe", "rates"):
        sec = cfg.section(name)
        if sec is not None and grid is not None and not problems:
            bound = fpe.fpe_max_dt(land, sched, grid)
            info.append(f"{name}.dt stability bound: {bound!r}")
            if sec["dt"] > bound:
                problems.append(f"{name}.dt={sec['dt']!r} exceeds the explicit stability bound "
                                f"{bound!r}")
            mem += 8 * int(np.prod(grid.shape)) * int(sec["t_end"] / sec["record_every"] + 2)
    vsec = cfg.section("vfp")
    if vsec is not None and grid is not None and grid.phase and not problems:
        args = (mom["gamma"], mom["xi"], mom["M"], mom["beta"])
        bound = fpe.vfp_max_dt(land, *args, grid)
        info.append(f"vfp.dt stability bound: {bound!r}")
        if vsec["dt"] > bound:
            problems.append(f"vfp.dt={vsec['dt']!r} exceeds the stability bound {bound!r}")
        mem += 8 * int(np.prod(grid.shape)) * int(vsec["t_end"] / vsec["record_every"] + 2)
    for name in ("simulate", "kramers"):
        sec = cfg.section(name)
        if sec is None or sec.get("dt") is None:
            continue
        radius = sec.get("stability_radius") or sec.get("guard_radius") or 10.0
        rho = sde.max_curvature(land, radius)
        info.append(f"{name}.dt stability bound: {2.0 / rho!r}")
        if sec["dt"] * rho >= 2.0:
            problems.append(f"{name}.dt={sec['dt']!r} violates dt * sup|Hess L| < 2 "
                            f"(bound {2.0 / rho!r})")
        n = sec.get("n_paths") or 1
        mem += 8 * land.dim * (3 * min(n, sde.BLOCK_SIZE) * 256 + 4 * n)
    info.append(f"memory_estimate_bytes: {mem}")
    return info, problems


def _parser():
    p = argparse.ArgumentParser(prog="escape-lab",
                                description="Run or validate an escape-lab experiment config.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute an experiment and write artifacts")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help=f"output directory (default ${ENV_OUT} "
                                               f"or ./{DEFAULT_OUT})")
    r.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
    r.add_argument("--plot-data", action="store_true",
                   help="also write pre-pivoted step vs log-Frobenius series")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    return p


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "run":
            manifest = run(args.config, out=args.out, threads=args.threads,
                           plot_data=args.plot_data)
            for a in manifest["artifacts"]:
                print(a["file"])
            return EXIT_OK
        info, problems = validate(args.config)
        for line in info:
            print(line)
        if problems:
            for line in problems:
                print(f"error: {line}", file=sys.stderr)
            return EXIT_CONFIG
        print("diagnostics: none")
        return EXIT_OK
    except NumericError as exc:
        print(f"numeric error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArgumentError, EscapeLabError) as exc:
        print(f"config error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
