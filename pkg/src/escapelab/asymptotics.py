"""Asymptotic-regime quantities: trapping probabilities, decay-rate fits,
Poincare constants, burn-in times and the hypocoercive constants of
momentum SGD."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.special import logsumexp

from .errors import (ArgumentError, ConvergenceError, DegenerateCaseError, DomainError,
                     HypothesisViolationError, InsufficientDataError, NoFiniteTimeError)
from .fpe import (Grid, _gibbs, _landscape_on, bernoulli, stationary_density,
                  weighted_l2_distance)

__all__ = [
    "RateFit",
    "fit_decay_rate",
    "TrappingResult",
    "trapping_probability",
    "well_probability_ratio",
    "poincare_constant",
    "BoundReport",
    "theorem1_bound_check",
    "burn_in_time",
    "burn_in_threshold",
    "MsgdConstants",
    "msgd_rate_constants",
    "hypocoercive_functional",
    "theorem3_bound_check",
]

FLOOR = 1e-12
MIN_FIT_SAMPLES = 8


# --------------------------------------------------------------------------
# decay-rate fits

@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    t_lo: float
    t_hi: float
    r_squared: float
    n_samples: int


def fit_decay_rate(times, values, window=None):
    """Least-squares fit of ``log value = intercept - rate * t``.

    Parameters
    ----------
    times, values : array_like
        Sample times and positive values.
    window : (t_lo, t_hi), optional
        Fit window. By default the last half of the samples, excluding any
        value below ``1e-12``.

    Raises
    ------
    InsufficientDataError
        Fewer than 8 samples fall in the window.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ArgumentError("times and values must be 1-D arrays of equal length")
    if window is None:
        keep = np.zeros(t.size, dtype=bool)
        keep[t.size // 2:] = True
        keep &= y >= FLOOR
    else:
        lo, hi = window
        if not lo < hi:
            raise ArgumentError("window needs t_lo < t_hi")
        if lo < t.min() - 1e-12 or hi > t.max() + 1e-12:
            raise ArgumentError("window lies outside the series span")
        keep = (t >= lo) & (t <= hi)
        if np.any(y[keep] <= 0):
            raise ArgumentError("values must be positive inside the fit window")
    n = int(np.sum(keep))
    if n < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"{n} samples in the fit window; need >= {MIN_FIT_SAMPLES}")
    tk, ly = t[keep], np.log(y[keep])
    slope, intercept = np.polyfit(tk, ly, 1)
    resid = ly - (intercept + slope * tk)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return RateFit(rate=float(-slope), intercept=float(intercept), t_lo=float(tk[0]),
                   t_hi=float(tk[-1]), r_squared=r2, n_samples=n)


# --------------------------------------------------------------------------
# trapping probabilities

@dataclass(frozen=True)
class TrappingResult:
    minimum: object
    eta: float
    epsilon: float
    quadrature_probability: float
    formula_factor: float

    @property
    def ratio(self):
        """``formula_factor / quadrature_probability``."""
        return self.formula_factor / self.quadrature_probability


def _ball_fraction(grid, center, radius, sub=8):
    """Fraction of each cell covered by the closed ball (exact in 1-D)."""
    if grid.ndim == 1:
        x = grid.centers(0)
        h = grid.spacing[0]
        lo = np.maximum(x - h / 2, center[0] - radius)
        hi = np.minimum(x + h / 2, center[0] + radius)
        return np.clip(hi - lo, 0.0, None) / h
    offs = [(np.arange(sub) + 0.5) / sub - 0.5 for _ in range(grid.ndim)]
    frac = np.zeros(grid.shape)
    mesh = grid.mesh()
    for o in np.stack(np.meshgrid(*offs, indexing="ij"), axis=-1).reshape(-1, grid.ndim):
        p = mesh + o * np.asarray(grid.spacing)
        frac += np.sum((p - center) ** 2, axis=-1) <= radius * radius
    return frac / sub ** grid.ndim


def ball_mass(density, center, radius):
    """Mass of a density field inside a closed ball."""
    g = density.grid
    c = np.asarray(center, dtype=float)
    for a, (lo, hi, _) in enumerate(g.axes):
        if c[a] - radius < lo or c[a] + radius > hi:
            raise DomainError(f"ball of radius {radius} around {c} crosses the grid boundary "
                              f"on axis {a}")
    return float(np.sum(density.values * _ball_fraction(g, c, radius)) * g.cell_volume)


def log_partition(landscape, eta, grid):
    """``log of the integral of exp(-eta L)`` by cell-sum quadrature."""
    L = _landscape_on(landscape, grid)
    return float(logsumexp(-eta * L) + math.log(grid.cell_volume))


def formula_factor(landscape, minimum, eta, epsilon, grid):
    """Limit expression for the trapping probability evaluated at finite epsilon.

    ``kappa e^{-2 eta L(w)} / (eta^{d/2} det Hess) * e^{eta eps^2} *
    prod_j sqrt(1 - exp(-eps^2 eta lambda_j / pi))`` with
    ``kappa = 1 / integral exp(-eta L)``.
    """
    d = landscape.dim
    lam = np.asarray(minimum.hessian_eigenvalues, dtype=float)
    log_val = (-log_partition(landscape, eta, grid) - 2.0 * eta * minimum.value
               - 0.5 * d * math.log(eta) - math.log(minimum.hessian_det)
               + eta * epsilon ** 2
               + 0.5 * float(np.sum(np.log1p(-np.exp(-epsilon ** 2 * eta * lam / math.pi)))))
    return math.exp(log_val)


def trapping_probability(landscape, minimum, eta, epsilon, grid):
    """Stationary probability of the epsilon-ball around a minimum.

    ``quadrature_probability`` integrates the Gibbs density over the ball
    (cell values weighted by covered cell fraction); ``formula_factor``
    evaluates the small-ball limit expression at the same epsilon.

    Raises
    ------
    HypothesisViolationError
        Another catalogued stationary point lies inside the ball.
    DomainError
        The ball crosses the grid boundary.
    """
    if not (eta > 0 and epsilon > 0):
        raise ArgumentError("eta and epsilon must be positive")
    c = np.asarray(minimum.location, dtype=float)
    for other in list(landscape.minima) + list(landscape.saddles):
        if other is minimum or np.allclose(other.location, c):
            continue
        if np.linalg.norm(other.location - c) <= epsilon:
            raise HypothesisViolationError(
                f"ball of radius {epsilon} around {c} contains the stationary point "
                f"{other.location}")
    p = stationary_density(landscape, eta, grid)
    q = ball_mass(p, c, epsilon)
    return TrappingResult(minimum=minimum, eta=float(eta), epsilon=float(epsilon),
                          quadrature_probability=q,
                          formula_factor=formula_factor(landscape, minimum, eta, epsilon, grid))


def well_probability_ratio(min1, min2):
    """Small-ball probability ratio ``sqrt(det Hess(min2) / det Hess(min1))``.

    Raises
    ------
    HypothesisViolationError
        If the minima do not have equal depth (within 1e-10).
    """
    if abs(min1.value - min2.value) > 1e-10:
        raise HypothesisViolationError(
            f"minima have unequal depths {min1.value!r} and {min2.value!r}")
    return math.sqrt(min2.hessian_det / min1.hessian_det)


# --------------------------------------------------------------------------
# Poincare constant

def _weighted_laplacian(landscape, grid):
    """Face-weighted Laplacian and mass weights on cells where ``e^{-L}`` is representable.

    Cells with ``L - min L > 690`` carry no representable mass and are
    dropped together with their faces.
    """
    L = _landscape_on(landscape, grid)
    L = L - np.min(L)
    active = L < 690.0
    mu = np.exp(-np.where(active, L, 0.0))
    ids = np.full(grid.shape, -1)
    ids[active] = np.arange(int(active.sum()))
    n = int(active.sum())
    rows, cols, vals = [], [], []
    for axis, h in enumerate(grid.spacing):
        lo = [slice(None)] * grid.ndim
        hi = [slice(None)] * grid.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        both = (active[lo] & active[hi]).ravel()
        # exponentially fitted face weight, symmetric for mu = exp(-L)
        wgt = (bernoulli(L[hi] - L[lo]) * mu[lo] / (h * h)).ravel()[both]
        i, j = ids[lo].ravel()[both], ids[hi].ravel()[both]
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [wgt, wgt, -wgt, -wgt]
    K = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return K, mu[active]


def poincare_constant(landscape, grid):
    """Spectral gap of ``-div(e^{-L} grad f) / e^{-L}`` with no-flux boundaries.

    Discretized as the symmetric generalized problem ``K f = lambda M f``
    (``M = diag(e^{-L})``) and solved by shift-invert Lanczos; the constant
    mode has eigenvalue 0 and the next one is returned.

    Raises
    ------
    ConvergenceError
        If the Lanczos iteration does not converge.
    """
    if landscape.dim > 2:
        raise ArgumentError("poincare_constant supports dim <= 2")
    _gibbs(_landscape_on(landscape, grid), grid)  # boundary coverage check
    K, mu = _weighted_laplacian(landscape, grid)
    scale = float(K.diagonal().max() / mu.max())
    M = sp.diags(mu)
    try:
        vals = eigsh(K, k=2, M=M, sigma=-1e-6 * scale, which="LM",
                     return_eigenvectors=False, tol=1e-12, maxiter=10000)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos iteration did not converge: {exc}") from exc
    vals = np.sort(vals)
    if abs(vals[0]) > 1e-8 * max(1.0, abs(vals[1])):
        raise ConvergenceError(f"constant mode not recovered (eigenvalue {vals[0]!r})")
    return float(vals[1])


# --------------------------------------------------------------------------
# bound reports

@dataclass
class BoundReport:
    """Measured distance vs closed-form bound along a run."""

    times: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    satisfied: np.ndarray
    fit: RateFit
    bound_rate: float
    constants: dict = field(default_factory=dict)

    @property
    def all_satisfied(self):
        return bool(np.all(self.satisfied))

    def to_csv(self, header=()):
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        for k, v in self.constants.items():
            buf.write(f"# {k}={v!r}\n")
        if self.fit is not None:
            buf.write(f"# measured_rate={self.fit.rate!r}\n")
        buf.write(f"# bound_rate={self.bound_rate!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "measured", "bound", "satisfied"])
        for t, m, b, s in zip(self.times, self.measured, self.bound, self.satisfied):
            w.writerow([repr(float(t)), repr(float(m)), repr(float(b)), str(bool(s)).lower()])
        return buf.getvalue()


def _try_fit(times, values):
    try:
        return fit_decay_rate(times, values)
    except InsufficientDataError:
        return None


def theorem1_bound_check(landscape, schedule, snapshots, T, C_P, p_inf=None):
    """Compare ``||h(t)||^2`` with ``C(t,T) exp(-r (t - T))`` for ``t >= T``.

    ``r = C_P gamma_inf beta / (2 M_inf)`` and
    ``C(t,T) = r (t - T) + ||h(T)||^2``; ``h(T)`` comes from the first
    snapshot at or after ``T``.
    """
    after = [s for s in snapshots if s.time >= T - 1e-12]
    if not after:
        raise ArgumentError(f"no snapshot at or after T={T}")
    if p_inf is None:
        p_inf = stationary_density(landscape, schedule.eta_inf, after[0].grid)
    t0 = after[0].time
    rate = C_P * schedule.gamma_inf * schedule.beta / (2.0 * schedule.batch_inf)
    times = np.array([s.time for s in after])
    measured = np.array([weighted_l2_distance(s, p_inf) for s in after])
    bound = (rate * (times - t0) + measured[0]) * np.exp(-rate * (times - t0))
    slack = 1e-12 * max(1.0, measured[0])
    return BoundReport(times=times, measured=measured, bound=bound,
                       satisfied=measured <= bound + slack, fit=_try_fit(times, measured),
                       bound_rate=rate,
                       constants={"C_P": C_P, "eta_inf": schedule.eta_inf, "T": t0})


# --------------------------------------------------------------------------
# burn-in

def burn_in_time(envelope, tolerance, t_max=1e6, rtol=1e-13):
    """Smallest ``T`` with ``envelope(T) <= tolerance`` for a non-increasing envelope.

    Raises
    ------
    NoFiniteTimeError
        If the envelope stays above the tolerance up to ``t_max``.
    """
    if not tolerance > 0:
        raise ArgumentError("tolerance must be positive")
    if float(envelope(0.0)) <= tolerance:
        return 0.0
    hi = 1.0
    while float(envelope(hi)) > tolerance:
        hi *= 2.0
        if hi > t_max:
            raise NoFiniteTimeError(f"deviation stays above {tolerance!r} up to t={t_max:g}")
    lo = 0.0
    while hi - lo > rtol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if float(envelope(mid)) <= tolerance:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class BurnIn:
    T: float
    tolerance: float
    C1: float
    C2: float
    C_P: float
    gibbs_cube_root_integral: float


def burn_in_threshold(schedule, landscape, grid, R, C_P=None, n_ball=201):
    """Burn-in time after which ``eta(t)`` stays close enough to ``eta_inf``.

    ``C2 = sup_{|w| <= R} |Lap L - eta_inf |grad L|^2|`` (sampled on a grid),
    ``C1 = (M_inf/2) max(1, eta_inf) max(int p_inf^{1/3}, 1 + C2/2)``, and
    the tolerance is ``min(eta_inf/3, C_P/(3 C1))``.
    """
    if not R > 0:
        raise ArgumentError("R must be positive")
    eta = schedule.eta_inf
    if not math.isfinite(eta):
        raise ArgumentError("schedule needs a finite eta_inf")
    if C_P is None:
        C_P = poincare_constant(landscape, grid)
    t = np.linspace(-R, R, n_ball)
    pts = np.stack(np.meshgrid(*([t] * landscape.dim), indexing="ij"), axis=-1)
    pts = pts.reshape(-1, landscape.dim)
    pts = pts[np.sum(pts * pts, axis=1) <= R * R]
    lap = np.trace(landscape.hessian(pts), axis1=-2, axis2=-1)
    g = landscape.gradient(pts)
    C2 = float(np.max(np.abs(lap - eta * np.sum(g * g, axis=-1))))
    p = stationary_density(landscape, eta, grid)
    cube = grid.integrate(np.cbrt(p.values))
    C1 = 0.5 * schedule.batch_inf * max(1.0, eta) * max(cube, 1.0 + 0.5 * C2)
    tol = min(eta / 3.0, C_P / (3.0 * C1))
    T = burn_in_time(schedule.deviation_envelope, tol)
    return BurnIn(T=T, tolerance=tol, C1=C1, C2=C2, C_P=C_P, gibbs_cube_root_integral=cube)


# --------------------------------------------------------------------------
# momentum SGD constants

@dataclass(frozen=True)
class MsgdConstants:
    gamma: float
    xi: float
    C_L: float
    b: float
    C_P: float
    M: float
    beta: float
    dim: int
    case: int
    mu: float
    C: float
    C_hat: float
    lambda_min: float
    mu_hat: float
    bound_rate: float
    prefactor: float

    @property
    def vacuous(self):
        """True when the decay rate is not positive."""
        return self.bound_rate <= 0

    @property
    def P(self):
        return np.array([[1.0, self.C_hat], [self.C_hat, self.C]])

    def as_dict(self):
        return {k: getattr(self, k) for k in ("mu", "C", "C_hat", "lambda_min", "mu_hat",
                                              "bound_rate", "prefactor", "C_P")}


def msgd_rate_constants(gamma, xi, C_L, b, C_P, M, beta, dim):
    """Hypocoercive decay constants for momentum SGD.

    With ``g = (1 - xi)/sqrt(gamma)``: if ``g < 2 C_L`` then ``mu = g``,
    ``C = C_L^2``; if ``g > 2 C_L`` then ``mu = g - sqrt(g^2 - 4 C_L^2)``,
    ``C = g^2/2 - C_L^2``; in both cases ``C_hat = g/2``. ``lambda_min`` is
    the smaller eigenvalue of ``[[1, C_hat], [C_hat, C]]``,
    ``mu_hat = (1 + sqrt 2) b / (2 lambda_min)``,
    ``bound_rate = 2 (mu - mu_hat)`` and
    ``prefactor = gamma beta / (2 M min(C_P, d) (1 - xi) lambda_min)``.

    Raises
    ------
    DegenerateCaseError
        If ``g == 2 C_L`` (the matrix P is singular there).
    """
    if not (0 < xi < 1):
        raise ArgumentError("momentum xi must lie in (0, 1)")
    if not gamma > 0:
        raise ArgumentError("gamma must be positive")
    if C_L < 0 or b < 0:
        raise ArgumentError("C_L and b must be nonnegative")
    for name, val in (("C_P", C_P), ("M", M), ("beta", beta), ("dim", dim)):
        if not val > 0:
            raise ArgumentError(f"{name} must be positive")
    g = (1.0 - xi) / math.sqrt(gamma)
    if math.isclose(g, 2.0 * C_L, rel_tol=1e-12, abs_tol=1e-15):
        raise DegenerateCaseError(f"(1 - xi)/sqrt(gamma) = {g!r} equals 2 C_L; P is singular")
    if g < 2.0 * C_L:
        case, mu, C = 1, g, C_L ** 2
    else:
        case, mu, C = 2, g - math.sqrt(g * g - 4.0 * C_L ** 2), 0.5 * g * g - C_L ** 2
    C_hat = 0.5 * g
    lam = float(np.linalg.eigvalsh(np.array([[1.0, C_hat], [C_hat, C]]))[0])
    if not lam > 0:
        raise DegenerateCaseError(f"P is not positive definite (lambda_min={lam!r})")
    mu_hat = (1.0 + math.sqrt(2.0)) * b / (2.0 * lam)
    prefactor = gamma * beta / (2.0 * M * min(C_P, dim) * (1.0 - xi) * lam)
    return MsgdConstants(gamma=float(gamma), xi=float(xi), C_L=float(C_L), b=float(b),
                         C_P=float(C_P), M=float(M), beta=float(beta), dim=int(dim),
                         case=case, mu=mu, C=C, C_hat=C_hat, lambda_min=lam, mu_hat=mu_hat,
                         bound_rate=2.0 * (mu - mu_hat), prefactor=prefactor)


def hypocoercive_functional(psi, psi_inf, constants):
    """``integral [grad_w h, grad_v h] P [grad_w h, grad_v h]^T psi_inf``.

    ``h = (psi - psi_inf)/psi_inf``; gradients by central differences.
    """
    if psi.grid != psi_inf.grid:
        raise ArgumentError("densities live on different grids")
    C, Ch = constants.C, constants.C_hat
    if not (C > Ch * Ch and C > 0):
        raise ArgumentError("P is not positive definite")
    g = psi.grid
    if np.min(psi_inf.values) <= 1e-300:
        raise DomainError("reference density underflows (<= 1e-300) on the grid")
    h = psi.values / psi_inf.values - 1.0
    d = g.dim
    grads = np.gradient(h, *g.spacing)
    gw, gv = grads[:d], grads[d:]
    q = sum(a * a for a in gw) + C * sum(a * a for a in gv) \
        + 2.0 * Ch * sum(a * c for a, c in zip(gw, gv))
    return g.integrate(q * psi_inf.values)


def theorem3_bound_check(snapshots, constants, psi_inf):
    """Compare ``||h(t)||^2`` with ``prefactor e^{-bound_rate t} H(0)``.

    The report's ``constants`` also record ``H(t)`` per snapshot under the
    key ``"H"`` and whether it is non-increasing after the first snapshot.
    """
    if not snapshots or abs(snapshots[0].time) > 1e-12:
        raise ArgumentError("snapshots must start at t=0")
    times = np.array([s.time for s in snapshots])
    measured = np.array([weighted_l2_distance(s, psi_inf) for s in snapshots])
    H = np.array([hypocoercive_functional(s, psi_inf, constants) for s in snapshots])
    bound = constants.prefactor * np.exp(-constants.bound_rate * times) * H[0]
    slack = 1e-12 * max(1.0, measured[0])
    consts = dict(constants.as_dict())
    consts["H0"] = float(H[0])
    report = BoundReport(times=times, measured=measured, bound=bound,
                         satisfied=measured <= bound + slack, fit=_try_fit(times, measured),
                         bound_rate=constants.bound_rate, constants=consts)
    report.H = H
    return report
