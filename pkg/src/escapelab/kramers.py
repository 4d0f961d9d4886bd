"""Escape times between minima: Eyring-Kramers formula, Monte Carlo first
passage, and minimal-height saddle search."""

from __future__ import annotations

import io
import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import (ArgumentError, DivergenceError, ExpOverflowError, SaddleSearchError,
                     SignatureError, StepSizeError)
from .landscapes import Saddle
from .sde import _check_dt, map_blocks

__all__ = [
    "EscapeProblem",
    "EscapeStats",
    "eyring_kramers_time",
    "log_eyring_kramers_time",
    "mc_first_passage",
    "find_min_saddle",
    "escape_csv",
]

EXP_LIMIT = 700.0
CENSOR_WARN_FRACTION = 0.1


@dataclass(frozen=True, eq=False)
class EscapeProblem:
    """Transition from the basin of ``from_min`` to an epsilon-ball at ``to_min``.

    ``epsilon`` defaults to a tenth of the distance between the minima.
    """

    landscape: object
    from_min: object
    to_min: object
    saddle: object
    eta: float
    epsilon: float = None

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ArgumentError("eta must be positive and finite")
        dist = float(np.linalg.norm(self.to_min.location - self.from_min.location))
        if dist == 0:
            raise ArgumentError("departure and target minima coincide")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 0.1 * dist)
        if not (0 < self.epsilon < 0.5 * dist):
            raise ArgumentError("epsilon must lie in (0, half the distance between the minima)")
        if self.barrier <= 0:
            raise ArgumentError("saddle must lie above the departure minimum")

    @classmethod
    def from_catalog(cls, landscape, from_index, to_index, eta, epsilon=None, saddle_index=0):
        if not landscape.saddles:
            raise ArgumentError(f"{landscape.name} has no catalogued saddle")
        return cls(landscape, landscape.minima[from_index], landscape.minima[to_index],
                   landscape.saddles[saddle_index], float(eta), epsilon)

    @property
    def barrier(self):
        """``H(w*, w_1) = L(w*) - L(w_1)``."""
        return float(self.saddle.value - self.from_min.value)

    def reversed(self):
        """The opposite transition (geometry taken at the other minimum)."""
        return EscapeProblem(self.landscape, self.to_min, self.from_min, self.saddle,
                             self.eta, self.epsilon)

    def fingerprint(self):
        loc = ",".join(repr(float(x)) for x in self.from_min.location)
        tgt = ",".join(repr(float(x)) for x in self.to_min.location)
        return f"{self.landscape.fingerprint()}:{loc}->{tgt}"


def log_eyring_kramers_time(problem):
    """Natural log of the leading-order expected transition time."""
    s = problem.saddle
    prefactor = (2.0 * math.pi / s.lambda_star) * math.sqrt(
        s.hessian_det_abs / problem.from_min.hessian_det)
    return math.log(prefactor) + problem.eta * problem.barrier


def eyring_kramers_time(problem):
    """Leading-order Eyring-Kramers expected transition time.

    ``(2 pi / lambda*) sqrt(|det Hess L(w*)| / det Hess L(w_1)) exp(eta H)``.
    Determinants are used for the curvature factor.

    Raises
    ------
    ExpOverflowError
        If ``eta H > 700``; ``log_value`` carries the log-domain result.
    """
    if problem.eta * problem.barrier > EXP_LIMIT:
        log_t = log_eyring_kramers_time(problem)
        raise ExpOverflowError(
            f"eta*H = {problem.eta * problem.barrier:.6g} exceeds {EXP_LIMIT:g}; "
            f"log of the escape time is {log_t!r}", log_value=log_t)
    return math.exp(log_eyring_kramers_time(problem))


# --------------------------------------------------------------------------
# Monte Carlo

@dataclass
class EscapeStats:
    n_paths: int
    mean_time: float
    standard_error: float
    median_time: float
    censored_count: int
    times: np.ndarray = field(repr=False)
    mean_is_lower_bound: bool = False
    warning: str = None


def mc_first_passage(problem, schedule, dt, n_paths, master_seed, t_cap=None, threads=1,
                     guard_radius=10.0, stability_radius=None):
    """Monte Carlo first-passage times from ``from_min`` into the target ball.

    Each path starts at the departure minimum and is integrated with
    Euler-Maruyama; the first step end inside the closed epsilon-ball
    around ``to_min`` is its hitting time. Paths still running at ``t_cap``
    (default 50 times the formula value) are censored at ``t_cap``.

    Returns
    -------
    EscapeStats
        With censored paths the mean is a lower bound and flagged; if more
        than 10% are censored a warning is attached and emitted.
    """
    if n_paths < 1:
        raise ArgumentError("n_paths must be >= 1")
    eta0 = float(schedule.eta(0.0))
    if abs(eta0 - problem.eta) > 1e-12 * problem.eta:
        raise ArgumentError(f"schedule eta at departure ({eta0!r}) differs from the "
                            f"problem's eta ({problem.eta!r})")
    noise_rate = float(schedule.diffusion(0.0))
    eps = problem.epsilon
    if dt > eps * eps / (10.0 * noise_rate):
        raise StepSizeError(f"dt={dt} too coarse for escape detection: need "
                            f"dt <= eps^2/(10 gamma beta/M) = {eps * eps / (10 * noise_rate):.4g}",
                            dt_max=eps * eps / (10.0 * noise_rate))
    land = problem.landscape
    _check_dt(land, dt, guard_radius if stability_radius is None else stability_radius)
    if t_cap is None:
        log_t = log_eyring_kramers_time(problem)
        if log_t > EXP_LIMIT:
            raise ExpOverflowError("formula time overflows; pass t_cap explicitly",
                                   log_value=log_t)
        t_cap = 50.0 * math.exp(log_t)
    n_cap = int(math.ceil(t_cap / dt))
    seeds = rng.derive_seeds(master_seed, n_paths)
    start = np.asarray(problem.from_min.location, dtype=float)
    target = np.asarray(problem.to_min.location, dtype=float)
    time_dependent = schedule.family != "constant"

    def block(a, b):
        n = b - a
        noise = rng.NoiseStream(seeds[a:b], land.dim)
        W = np.broadcast_to(start, (n, land.dim)).copy()
        idx = np.arange(a, b)
        live = np.ones(n, dtype=bool)
        n_live = n
        out = np.full(n, np.inf)
        sig = math.sqrt(noise_rate * dt)
        for k in range(n_cap):
            if time_dependent:
                sig = math.sqrt(float(schedule.diffusion(k * dt)) * dt)
            W = W - land.gradient(W) * dt + sig * noise.at(k)
            bad = live & (~np.isfinite(W).all(axis=1) | (np.abs(W) > guard_radius).any(axis=1))
            if bad.any():
                i = int(idx[np.flatnonzero(bad)[0]])
                raise DivergenceError(f"path {i} left the guard region at step {k + 1}",
                                      step=k + 1, path_index=i)
            diff = W - target
            hit = live & ((diff * diff).sum(axis=1) <= eps * eps)
            if hit.any():
                out[idx[hit] - a] = (k + 1) * dt
                live &= ~hit
                n_live -= int(hit.sum())
                if n_live == 0:
                    break
                # drop absorbed rows once they make up half the block
                if n_live <= W.shape[0] // 2:
                    W, idx = W[live], idx[live]
                    noise.compact(live)
                    live = np.ones(n_live, dtype=bool)
        return out

    times = np.concatenate(map_blocks(block, n_paths, threads))
    censored = ~np.isfinite(times)
    n_cens = int(np.sum(censored))
    filled = np.where(censored, n_cap * dt, times)
    mean = float(np.mean(filled))
    se = float(np.std(filled, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.nan
    msg = None
    if n_cens > CENSOR_WARN_FRACTION * n_paths:
        msg = (f"inconclusive statistics: {n_cens} of {n_paths} paths censored at "
               f"t_cap={n_cap * dt:.6g}")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return EscapeStats(n_paths=int(n_paths), mean_time=mean, standard_error=se,
                       median_time=float(np.median(filled)), censored_count=n_cens,
                       times=times, mean_is_lower_bound=n_cens > 0, warning=msg)


def escape_csv(rows, header=()):
    """CSV of ``(problem, stats)`` pairs, one row each."""
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["problem", "eta", "epsilon", "formula_time", "mc_mean", "mc_se", "n",
                "censored"])
    for problem, stats in rows:
        try:
            formula = repr(eyring_kramers_time(problem))
        except ExpOverflowError:
            formula = "inf"
        w.writerow([problem.fingerprint(), repr(float(problem.eta)),
                    repr(float(problem.epsilon)), formula, repr(stats.mean_time),
                    repr(stats.standard_error), stats.n_paths, stats.censored_count])
    return buf.getvalue()


# --------------------------------------------------------------------------
# saddle search

def _newton(landscape, x, tol=1e-12, max_iter=50):
    x = np.array(x, dtype=float)
    for _ in range(max_iter):
        g = landscape.gradient(x)
        if np.linalg.norm(g) <= tol:
            break
        H = landscape.hessian(x)
        try:
            step = np.linalg.solve(np.atleast_2d(H), g)
        except np.linalg.LinAlgError:
            break
        x = x - step
        if not np.all(np.isfinite(x)):
            break
    return x, float(np.linalg.norm(landscape.gradient(x)))


def _as_saddle(landscape, x, minima_pairs):
    eig = np.linalg.eigvalsh(np.atleast_2d(landscape.hessian(x)))
    n_neg = int(np.sum(eig < 0))
    if n_neg != 1 or np.any(eig == 0):
        raise SignatureError(f"stationary point {x} has Hessian eigenvalues {eig}; "
                             "expected exactly one negative")
    value = float(landscape.value(x))
    barriers = {key: value - m.value for key, m in minima_pairs}
    return Saddle(location=x, value=value, lambda_star=float(-eig[0]),
                  hessian_det_abs=float(abs(np.prod(eig))), barriers=barriers)


def _minimum_key(landscape, m, fallback):
    try:
        return landscape.minimum_index(m)
    except ArgumentError:
        return fallback


def _reparametrize(path):
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return path
    s /= s[-1]
    u = np.linspace(0.0, 1.0, path.shape[0])
    return np.stack([np.interp(u, s, path[:, j]) for j in range(path.shape[1])], axis=1)


def find_min_saddle(landscape, min1, min2, n_path_points=101, n_candidates=3,
                    max_iter=20000, tol=1e-6):
    """Index-one saddle on the minimal-height path between two minima.

    In one dimension the segment between the minima is scanned on a grid
    of ``n_path_points`` and the argmax is refined by Newton's method. In
    two dimensions a string of ``n_path_points`` nodes, initialized on the
    straight segment, relaxes by steepest descent with arclength
    reparametrization; the ``n_candidates`` highest nodes are refined by
    Newton's method and the lowest one with the right signature wins.

    Raises
    ------
    SaddleSearchError
        No interior maximum, or the string/Newton iterations do not converge.
    SignatureError
        The refined point does not have exactly one negative eigenvalue.
    """
    if landscape.dim > 2:
        raise ArgumentError("saddle search supports dim <= 2")
    a = np.asarray(min1.location, dtype=float)
    b = np.asarray(min2.location, dtype=float)
    pairs = [(_minimum_key(landscape, min1, 0), min1), (_minimum_key(landscape, min2, 1), min2)]
    if np.allclose(a, b):
        raise SaddleSearchError("the two minima coincide; no barrier separates them")
    n = max(int(n_path_points), 5)
    if landscape.dim == 1:
        s = np.linspace(0.0, 1.0, n)
        pts = a[None, :] + s[:, None] * (b - a)[None, :]
        vals = landscape.value(pts)
        i = int(np.argmax(vals))
        if i in (0, n - 1) or vals[i] <= max(vals[0], vals[-1]):
            raise SaddleSearchError("no interior maximum between the minima (no barrier)",
                                    best=pts[i])
        x, gnorm = _newton(landscape, pts[i])
        if gnorm > tol or not (min(a[0], b[0]) < x[0] < max(a[0], b[0])):
            raise SaddleSearchError("Newton refinement of the grid maximum failed", best=x)
        return _as_saddle(landscape, x, pairs)

    path = a[None, :] + np.linspace(0.0, 1.0, n)[:, None] * (b - a)[None, :]
    box = float(np.max(np.abs(path))) + 1.0
    from .sde import max_curvature
    step = 0.2 / max(max_curvature(landscape, box, n=81), 1e-12)
    converged = False
    for _ in range(max_iter):
        new = path.copy()
        new[1:-1] -= step * landscape.gradient(path[1:-1])
        new = _reparametrize(new)
        change = float(np.max(np.abs(new - path)))
        path = new
        if change < 1e-10:
            converged = True
            break
    vals = landscape.value(path)
    if not np.any(vals[1:-1] > max(vals[0], vals[-1])):
        raise SaddleSearchError("string has no interior maximum (no barrier)",
                                best=path[int(np.argmax(vals))])
    if not converged:
        raise SaddleSearchError("string relaxation did not converge",
                                best=path[int(np.argmax(vals))])
    order = np.argsort(vals[1:-1])[::-1][:max(1, int(n_candidates))] + 1
    found = []
    last_error = None
    for i in order:
        x, gnorm = _newton(landscape, path[i])
        if gnorm > tol:
            continue
        try:
            found.append(_as_saddle(landscape, x, pairs))
        except SignatureError as exc:
            last_error = exc
    if not found:
        if last_error is not None:
            raise last_error
        raise SaddleSearchError("Newton refinement did not reach a stationary point",
                                best=path[order[0]])
    return min(found, key=lambda s: s.value)
