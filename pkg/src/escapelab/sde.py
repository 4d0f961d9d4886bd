"""Trajectory simulation of SGD/MSGD diffusions and their discrete iterations.

All simulators share one vectorized engine: a block of paths advances in
lock-step, each path drawing its Gaussian increments from its own
counter-based stream (:mod:`escapelab.rng`). Ensembles are split into
fixed-size blocks so the result does not depend on the number of worker
threads.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ArgumentError, DivergenceError, StepSizeError

__all__ = [
    "Schedule",
    "Trajectory",
    "PhaseTrajectory",
    "EnsembleStats",
    "SimulatorSpec",
    "simulate_sgd_sde",
    "simulate_discrete_sgd",
    "simulate_msgd_sde",
    "simulate_discrete_msgd",
    "run_ensemble",
    "max_curvature",
]

BLOCK_SIZE = 4096


# --------------------------------------------------------------------------
# schedules

@dataclass(frozen=True)
class Schedule:
    """Learning rate gamma(t), batch size M(t) and isotropic noise scale beta.

    Use the constructors :meth:`constant`, :meth:`exp_approach` and
    :meth:`step_decay`; each provides the monotone envelope
    ``t -> sup_{s >= t} |eta(s) - eta_inf|`` needed for burn-in times.
    """

    family: str
    params: tuple
    beta: float

    @classmethod
    def constant(cls, gamma, batch, beta):
        _check_positive(gamma=gamma, batch=batch)
        if beta < 0:
            raise ArgumentError("beta must be >= 0")
        return cls("constant", (("gamma", float(gamma)), ("batch", float(batch))), float(beta))

    @classmethod
    def exp_approach(cls, eta_inf, amplitude, rate, gamma=1.0, beta=1.0):
        """Constant gamma with ``M(t) = M_inf (1 + amplitude e^{-rate t})``.

        ``M_inf`` is chosen so that ``eta(inf) = eta_inf``, hence
        ``eta(t) = eta_inf (1 + amplitude e^{-rate t})``.
        """
        _check_positive(eta_inf=eta_inf, gamma=gamma, beta=beta, rate=rate)
        if amplitude <= -1:
            raise ArgumentError("amplitude must exceed -1 so that M(t) > 0")
        return cls("exp_approach",
                   (("eta_inf", float(eta_inf)), ("amplitude", float(amplitude)),
                    ("rate", float(rate)), ("gamma", float(gamma))), float(beta))

    @classmethod
    def step_decay(cls, points, beta):
        """Piecewise-constant schedule from ``[(t_start, gamma, batch), ...]``."""
        pts = tuple((float(t), float(g), float(m)) for t, g, m in points)
        if not pts or pts[0][0] != 0.0:
            raise ArgumentError("step_decay points must start at t=0")
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ArgumentError("step_decay start times must increase")
        for _, g, m in pts:
            _check_positive(gamma=g, batch=m)
        _check_positive(beta=beta)
        return cls("step_decay", (("points", pts),), float(beta))

    @property
    def p(self):
        return dict(self.params)

    def gamma(self, t):
        p = self.p
        if self.family == "constant":
            return np.full_like(np.asarray(t, dtype=float), p["gamma"])[()]
        if self.family == "exp_approach":
            return np.full_like(np.asarray(t, dtype=float), p["gamma"])[()]
        return self._piece(t, 1)

    def batch(self, t):
        p = self.p
        if self.family == "constant":
            return np.full_like(np.asarray(t, dtype=float), p["batch"])[()]
        if self.family == "exp_approach":
            t = np.asarray(t, dtype=float)
            return (self.batch_inf * (1.0 + p["amplitude"] * np.exp(-p["rate"] * t)))[()]
        return self._piece(t, 2)

    def _piece(self, t, col):
        pts = self.p["points"]
        starts = np.array([q[0] for q in pts])
        vals = np.array([q[col] for q in pts])
        idx = np.searchsorted(starts, np.asarray(t, dtype=float), side="right") - 1
        return vals[np.clip(idx, 0, len(pts) - 1)][()]

    @property
    def gamma_inf(self):
        if self.family == "step_decay":
            return self.p["points"][-1][1]
        return self.p["gamma"]

    @property
    def batch_inf(self):
        p = self.p
        if self.family == "constant":
            return p["batch"]
        if self.family == "exp_approach":
            return 0.5 * p["eta_inf"] * p["gamma"] * self.beta
        return p["points"][-1][2]

    def eta(self, t):
        """Inverse temperature ``2 M(t) / (gamma(t) beta)``."""
        with np.errstate(divide="ignore"):
            return 2.0 * np.asarray(self.batch(t)) / (np.asarray(self.gamma(t)) * self.beta)

    @property
    def eta_inf(self):
        if self.beta == 0:
            return math.inf
        return 2.0 * self.batch_inf / (self.gamma_inf * self.beta)

    def diffusion(self, t):
        """Noise variance rate ``gamma(t) beta / M(t)``."""
        return np.asarray(self.gamma(t)) * self.beta / np.asarray(self.batch(t))

    def deviation_envelope(self, t):
        """``sup_{s >= t} |eta(s) - eta(inf)|`` (non-increasing in t)."""
        t = np.asarray(t, dtype=float)
        if self.family == "constant":
            return np.zeros_like(t)[()]
        if self.family == "exp_approach":
            p = self.p
            return (p["eta_inf"] * abs(p["amplitude"]) * np.exp(-p["rate"] * t))[()]
        pts = self.p["points"]
        eta_inf = self.eta_inf
        dev = np.array([abs(2.0 * m / (g * self.beta) - eta_inf) for _, g, m in pts])
        tail = np.maximum.accumulate(dev[::-1])[::-1]
        starts = np.array([q[0] for q in pts])
        idx = np.searchsorted(starts, t, side="right") - 1
        return tail[np.clip(idx, 0, len(pts) - 1)][()]

    def to_dict(self):
        d = {"family": self.family, "beta": self.beta}
        for k, v in self.params:
            d[k] = [list(q) for q in v] if k == "points" else v
        return d

    def fingerprint(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _check_positive(**kw):
    for name, val in kw.items():
        if not (isinstance(val, (int, float, np.floating, np.integer)) and val > 0
                and math.isfinite(val)):
            raise ArgumentError(f"{name} must be a positive finite number, got {val!r}")


# --------------------------------------------------------------------------
# result containers

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    seed: int
    fingerprint: str

    def to_csv(self):
        return _trajectory_csv(self.times, self.states, None, self.seed, self.fingerprint)


@dataclass
class PhaseTrajectory:
    times: np.ndarray
    w_states: np.ndarray
    v_states: np.ndarray
    xi: float
    seed: int
    fingerprint: str = ""

    def to_csv(self):
        return _trajectory_csv(self.times, self.w_states, self.v_states, self.seed,
                               self.fingerprint)


def _trajectory_csv(times, w, v, seed, fingerprint):
    buf = io.StringIO()
    buf.write(f"# fingerprint={fingerprint}\n# seed={int(seed)}\n")
    d = w.shape[1]
    header = ["t"] + [f"w_{i + 1}" for i in range(d)]
    if v is not None:
        header += [f"v_{i + 1}" for i in range(d)]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for k in range(times.size):
        row = [repr(float(times[k]))] + [repr(float(x)) for x in w[k]]
        if v is not None:
            row += [repr(float(x)) for x in v[k]]
        writer.writerow(row)
    return buf.getvalue()


@dataclass
class EnsembleStats:
    n_paths: int
    terminal_mean: np.ndarray
    terminal_covariance: np.ndarray
    occupations: dict
    seeds: np.ndarray
    terminal_states: np.ndarray = field(repr=False, default=None)
    terminal_velocities: np.ndarray = field(repr=False, default=None)


# --------------------------------------------------------------------------
# stability helpers

def max_curvature(landscape, radius, n=401):
    """Sup of the Hessian spectral radius over the ball of given radius."""
    t = np.linspace(-radius, radius, n if landscape.dim == 1 else min(n, 201))
    if landscape.dim == 1:
        pts = t[:, None]
    else:
        grids = np.meshgrid(*([t] * landscape.dim), indexing="ij")
        pts = np.stack(grids, axis=-1).reshape(-1, landscape.dim)
        pts = pts[np.sum(pts * pts, axis=1) <= radius * radius]
    H = landscape.hessian(pts)
    return float(np.max(np.abs(np.linalg.eigvalsh(H))))


def _check_dt(landscape, dt, radius):
    if not dt > 0:
        raise ArgumentError("dt must be positive")
    rho = max_curvature(landscape, radius)
    if dt * rho >= 2.0:
        raise StepSizeError(
            f"dt={dt} is unstable: dt * sup spectral radius ({rho:.4g}) >= 2 on the "
            f"ball of radius {radius}", dt_max=2.0 / rho)


def _as_point(landscape, w0):
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    if w0.shape != (landscape.dim,):
        raise ArgumentError(f"initial point must have length {landscape.dim}")
    if not np.all(np.isfinite(w0)):
        raise ArgumentError("initial point must be finite")
    return w0


def _n_steps(dt, t_end):
    if not t_end >= dt:
        raise ArgumentError("t_end must be >= dt")
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ArgumentError("t_end must be an integer multiple of dt")
    return n


def _guard(states, guard_radius, step, offset=0):
    # one reduction on the fast path; NaN fails the comparison too
    if states.size == 0 or np.max(np.abs(states)) <= guard_radius:
        return
    bad = ~np.all(np.isfinite(states), axis=-1) | np.any(np.abs(states) > guard_radius, axis=-1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DivergenceError(
            f"path {offset + i} left the guard region (|w| > {guard_radius}) at step {step}",
            step=step, path_index=offset + i)


def _fingerprint(*parts):
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# vectorized kernels over a block of paths

def _sgd_sde_block(landscape, schedule, W, dt, n_steps, seeds, guard_radius,
                   record=False, offset=0):
    W = W.copy()
    noise = rng.NoiseStream(seeds, landscape.dim)
    sqdt = math.sqrt(dt)
    path = [W.copy()] if record else None
    for k in range(n_steps):
        sigma = math.sqrt(float(schedule.diffusion(k * dt)))
        W = W - landscape.gradient(W) * dt + (sigma * sqdt) * noise.at(k)
        _guard(W, guard_radius, k + 1, offset)
        if record:
            path.append(W.copy())
    return W, path


def _discrete_sgd_block(landscape, schedule, W, n_steps, seeds, guard_radius,
                        record=False, offset=0):
    W = W.copy()
    noise = rng.NoiseStream(seeds, landscape.dim)
    sqb = math.sqrt(schedule.beta)
    path = [W.copy()] if record else None
    times = [0.0]
    t = 0.0
    for k in range(n_steps):
        g = float(schedule.gamma(t))
        m = max(1, int(round(float(schedule.batch(t)))))
        step = -g * landscape.gradient(W) + (g / math.sqrt(m)) * (sqb * noise.at(k))
        W = W + step
        t += g
        _guard(W, guard_radius, k + 1, offset)
        if record:
            path.append(W.copy())
            times.append(t)
    return W, path, np.array(times)


def _msgd_sde_block(landscape, gamma, xi, M, beta, W, V, dt, n_steps, seeds,
                    guard_radius, record=False, offset=0):
    W, V = W.copy(), V.copy()
    noise = rng.NoiseStream(seeds, landscape.dim)
    friction = (1.0 - xi) / math.sqrt(gamma)
    amp = gamma ** 0.25 * math.sqrt(beta / M) * math.sqrt(dt)
    wp, vp = ([W.copy()], [V.copy()]) if record else (None, None)
    for k in range(n_steps):
        dV = (-landscape.gradient(W) - friction * V) * dt + amp * noise.at(k)
        W = W + V * dt
        V = V + dV
        _guard(np.concatenate([W, V], axis=-1), guard_radius, k + 1, offset)
        if record:
            wp.append(W.copy())
            vp.append(V.copy())
    return W, V, wp, vp


def _discrete_msgd_block(landscape, gamma, xi, M, beta, W, Z, n_steps, seeds,
                         guard_radius, record=False, offset=0):
    W, Z = W.copy(), Z.copy()
    noise = rng.NoiseStream(seeds, landscape.dim)
    scale = gamma / math.sqrt(M)
    sqb = math.sqrt(beta)
    wp, zp = ([W.copy()], [Z.copy()]) if record else (None, None)
    for k in range(n_steps):
        step = -gamma * landscape.gradient(W) + scale * (sqb * noise.at(k))
        Z = xi * Z + step
        W = W + Z
        _guard(W, guard_radius, k + 1, offset)
        if record:
            wp.append(W.copy())
            zp.append(Z.copy())
    return W, Z, wp, zp


# --------------------------------------------------------------------------
# single-path simulators

def simulate_sgd_sde(landscape, schedule, w0, dt, t_end, seed, guard_radius=10.0,
                     stability_radius=None):
    """Euler-Maruyama path of ``dW = -grad L dt + sqrt(gamma beta / M) dB``.

    Parameters
    ----------
    landscape : Landscape
    schedule : Schedule
        ``beta = 0`` gives the deterministic gradient flow.
    w0 : array_like
        Initial point.
    dt, t_end : float
        Step and horizon; ``t_end`` must be a multiple of ``dt``.
    seed : int
        64-bit seed of the path's noise stream.
    guard_radius : float
        Paths leaving ``max_i |w_i| <= guard_radius`` raise
        :class:`DivergenceError`.
    stability_radius : float, optional
        Radius of the ball on which ``dt * sup ||Hess L|| < 2`` is enforced
        (default: ``guard_radius``).

    Returns
    -------
    Trajectory
    """
    w0 = _as_point(landscape, w0)
    n = _n_steps(dt, t_end)
    _check_dt(landscape, dt, guard_radius if stability_radius is None else stability_radius)
    seeds = np.array([seed], dtype=np.uint64)
    _, path = _sgd_sde_block(landscape, schedule, w0[None, :], dt, n, seeds,
                             guard_radius, record=True)
    states = np.concatenate(path, axis=0)
    fp = _fingerprint("sgd_sde", landscape.fingerprint(), schedule.fingerprint(), dt)
    return Trajectory(times=np.arange(n + 1) * dt, states=states, seed=int(seed), fingerprint=fp)


def simulate_discrete_sgd(landscape, schedule, w0, n_steps, seed, guard_radius=10.0):
    """Mini-batch SGD iteration with synthetic isotropic gradient noise.

    ``w_{k+1} = w_k - g_k grad L(w_k) + (g_k / sqrt(M_k)) eps_k`` with
    ``eps_k ~ N(0, beta I)``; ``M_k`` is the schedule's batch size at the
    accumulated time ``sum_{j<k} g_j`` rounded to an integer >= 1.
    Recorded times are those accumulated times.
    """
    w0 = _as_point(landscape, w0)
    if n_steps < 1:
        raise ArgumentError("n_steps must be >= 1")
    seeds = np.array([seed], dtype=np.uint64)
    _, path, times = _discrete_sgd_block(landscape, schedule, w0[None, :], int(n_steps),
                                         seeds, guard_radius, record=True)
    fp = _fingerprint("discrete_sgd", landscape.fingerprint(), schedule.fingerprint())
    return Trajectory(times=times, states=np.concatenate(path, axis=0), seed=int(seed),
                      fingerprint=fp)


def _check_momentum(xi, allow_zero=False):
    lo_ok = xi >= 0 if allow_zero else xi > 0
    if not (lo_ok and xi < 1):
        raise ArgumentError("momentum xi must lie in (0, 1)")


def simulate_msgd_sde(landscape, gamma, xi, M, beta, w0, v0, dt, t_end, seed,
                      guard_radius=10.0, stability_radius=None):
    """Euler-Maruyama path of the momentum diffusion.

    ``dV = -grad L(W) dt - ((1 - xi)/sqrt(gamma)) V dt + gamma^{1/4} sqrt(beta/M) dB``
    and ``dW = V dt``.
    """
    _check_momentum(xi)
    _check_positive(gamma=gamma, M=M)
    if beta < 0:
        raise ArgumentError("beta must be >= 0")
    w0, v0 = _as_point(landscape, w0), _as_point(landscape, v0)
    n = _n_steps(dt, t_end)
    _check_dt(landscape, dt, guard_radius if stability_radius is None else stability_radius)
    friction = (1.0 - xi) / math.sqrt(gamma)
    if dt * friction >= 2.0:
        raise StepSizeError(f"dt * friction = {dt * friction:.4g} >= 2", dt_max=2.0 / friction)
    seeds = np.array([seed], dtype=np.uint64)
    _, _, wp, vp = _msgd_sde_block(landscape, gamma, xi, M, beta, w0[None, :], v0[None, :],
                                   dt, n, seeds, guard_radius, record=True)
    fp = _fingerprint("msgd_sde", landscape.fingerprint(), gamma, xi, M, beta, dt)
    return PhaseTrajectory(times=np.arange(n + 1) * dt, w_states=np.concatenate(wp),
                           v_states=np.concatenate(vp), xi=float(xi), seed=int(seed),
                           fingerprint=fp)


def simulate_discrete_msgd(landscape, gamma, xi, M, beta, w0, z0, n_steps, seed,
                           guard_radius=10.0):
    """Momentum SGD coupled updates with synthetic gradient noise.

    ``z_{k+1} = xi z_k - gamma grad L(w_k) + (gamma/sqrt(M)) eps_k``,
    ``w_{k+1} = w_k + z_{k+1}``, ``eps_k ~ N(0, beta I)``. The stored
    velocities are ``v_k = z_k / sqrt(gamma)`` and the times ``k sqrt(gamma)``.
    ``xi = 0`` is accepted and reproduces :func:`simulate_discrete_sgd`.
    """
    _check_momentum(xi, allow_zero=True)
    _check_positive(gamma=gamma, M=M)
    if beta < 0:
        raise ArgumentError("beta must be >= 0")
    if n_steps < 1:
        raise ArgumentError("n_steps must be >= 1")
    w0, z0 = _as_point(landscape, w0), _as_point(landscape, z0)
    m = max(1, int(round(M)))
    seeds = np.array([seed], dtype=np.uint64)
    _, _, wp, zp = _discrete_msgd_block(landscape, gamma, xi, m, beta, w0[None, :],
                                        z0[None, :], int(n_steps), seeds, guard_radius,
                                        record=True)
    fp = _fingerprint("discrete_msgd", landscape.fingerprint(), gamma, xi, M, beta)
    return PhaseTrajectory(times=np.arange(n_steps + 1) * math.sqrt(gamma),
                           w_states=np.concatenate(wp),
                           v_states=np.concatenate(zp) / math.sqrt(gamma), xi=float(xi),
                           seed=int(seed), fingerprint=fp)


# --------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True)
class SimulatorSpec:
    """Which simulator an ensemble runs, with all its arguments but the seed.

    ``kind`` is one of ``"sgd_sde"``, ``"discrete_sgd"``, ``"msgd_sde"``,
    ``"discrete_msgd"``. SGD kinds read ``schedule``; momentum kinds read
    ``gamma, xi, M, beta``. SDE kinds need ``dt`` and ``t_end``, discrete
    kinds ``n_steps``. ``v0`` is the initial velocity (``z0`` for
    ``discrete_msgd``).
    """

    kind: str
    landscape: object
    w0: tuple
    schedule: Schedule = None
    gamma: float = None
    xi: float = None
    M: float = None
    beta: float = None
    v0: tuple = None
    dt: float = None
    t_end: float = None
    n_steps: int = None
    guard_radius: float = 10.0
    stability_radius: float = None

    def validate(self):
        if self.kind not in ("sgd_sde", "discrete_sgd", "msgd_sde", "discrete_msgd"):
            raise ArgumentError(f"unknown simulator kind {self.kind!r}")
        _as_point(self.landscape, self.w0)
        if self.kind.startswith("msgd") or self.kind == "discrete_msgd":
            _check_momentum(self.xi, allow_zero=self.kind == "discrete_msgd")
            _check_positive(gamma=self.gamma, M=self.M)
        elif self.schedule is None:
            raise ArgumentError("SGD simulators need a schedule")
        if self.kind.endswith("sde"):
            _n_steps(self.dt, self.t_end)
            rad = self.guard_radius if self.stability_radius is None else self.stability_radius
            _check_dt(self.landscape, self.dt, rad)
        elif not (self.n_steps and self.n_steps >= 1):
            raise ArgumentError("discrete simulators need n_steps >= 1")

    def run_block(self, seeds, offset):
        d = self.landscape.dim
        n = seeds.size
        W = np.broadcast_to(np.asarray(self.w0, dtype=float), (n, d)).copy()
        V = np.zeros((n, d)) if self.v0 is None else np.broadcast_to(
            np.asarray(self.v0, dtype=float), (n, d)).copy()
        if self.kind == "sgd_sde":
            W, _ = _sgd_sde_block(self.landscape, self.schedule, W, self.dt,
                                  _n_steps(self.dt, self.t_end), seeds, self.guard_radius,
                                  offset=offset)
            return W, None
        if self.kind == "discrete_sgd":
            W, _, _ = _discrete_sgd_block(self.landscape, self.schedule, W, self.n_steps,
                                          seeds, self.guard_radius, offset=offset)
            return W, None
        if self.kind == "msgd_sde":
            W, V, _, _ = _msgd_sde_block(self.landscape, self.gamma, self.xi, self.M,
                                         self.beta, W, V, self.dt,
                                         _n_steps(self.dt, self.t_end), seeds,
                                         self.guard_radius, offset=offset)
            return W, V
        W, Z, _, _ = _discrete_msgd_block(self.landscape, self.gamma, self.xi,
                                          max(1, int(round(self.M))), self.beta, W, V,
                                          self.n_steps, seeds, self.guard_radius,
                                          offset=offset)
        return W, Z / math.sqrt(self.gamma)


def map_blocks(fn, n_items, threads=1, block_size=BLOCK_SIZE):
    """Apply ``fn(start, stop)`` to fixed-size index blocks, results in block order."""
    bounds = [(s, min(s + block_size, n_items)) for s in range(0, n_items, block_size)]
    if threads is None or threads <= 1 or len(bounds) == 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


def run_ensemble(spec, n_paths, master_seed, regions=(), threads=1):
    """Simulate ``n_paths`` independent paths and summarize terminal states.

    Path ``i`` uses the seed ``rng.derive_seeds(master_seed, 1, i)``, so
    ``simulate_*`` with ``seeds[i]`` replays it exactly. ``regions`` is a
    list of ``(center, radius)`` balls; occupations are the fractions of
    terminal positions inside each ball.
    """
    if n_paths < 1:
        raise ArgumentError("n_paths must be >= 1")
    spec.validate()
    seeds = rng.derive_seeds(master_seed, n_paths)

    def block(a, b):
        return spec.run_block(seeds[a:b], a)

    parts = map_blocks(block, n_paths, threads)
    W = np.concatenate([p[0] for p in parts], axis=0)
    V = None if parts[0][1] is None else np.concatenate([p[1] for p in parts], axis=0)
    mean = W.mean(axis=0)
    cov = np.zeros((W.shape[1], W.shape[1])) if n_paths == 1 else np.atleast_2d(
        np.cov(W, rowvar=False))
    occ = {}
    for j, (center, radius) in enumerate(regions):
        c = np.asarray(center, dtype=float)
        occ[j] = float(np.mean(np.sum((W - c) ** 2, axis=1) <= radius ** 2))
    return EnsembleStats(n_paths=int(n_paths), terminal_mean=mean, terminal_covariance=cov,
                         occupations=occ, seeds=seeds, terminal_states=W,
                         terminal_velocities=V)
