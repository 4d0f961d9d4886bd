"""Analytic risk functions with exact derivatives and stationary-point metadata.

Every landscape evaluates its value, gradient and Hessian in closed form and
vectorized over leading axes: for ``w`` of shape ``(..., dim)`` the three
callables return arrays of shape ``(...)``, ``(..., dim)`` and
``(..., dim, dim)``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ArgumentError, CatalogError

__all__ = [
    "Landscape",
    "Minimum",
    "Saddle",
    "AssumptionEntry",
    "AssumptionReport",
    "evaluate",
    "builtin",
    "available",
    "custom",
    "scaled",
    "check_assumptions",
    "sharpness",
]


@dataclass(frozen=True, eq=False)
class Minimum:
    location: np.ndarray
    value: float
    hessian_det: float
    hessian_eigenvalues: np.ndarray
    hessian_frobenius: float


@dataclass(frozen=True, eq=False)
class Saddle:
    """Index-one saddle.

    ``barriers`` maps the index of an adjacent minimum (position in
    ``Landscape.minima``) to the barrier height ``L(saddle) - L(minimum)``.
    """

    location: np.ndarray
    value: float
    lambda_star: float
    hessian_det_abs: float
    barriers: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Landscape:
    name: str
    dim: int
    parameters: dict
    value_fn: object
    grad_fn: object
    hess_fn: object
    minima: tuple = ()
    saddles: tuple = ()
    convexity_split_constant: float = 0.0
    hessian_entry_bound: float = math.inf

    def value(self, w):
        return self.value_fn(np.asarray(w, dtype=float))

    def gradient(self, w):
        return self.grad_fn(np.asarray(w, dtype=float))

    def hessian(self, w):
        return self.hess_fn(np.asarray(w, dtype=float))

    def fingerprint(self):
        """Short content hash of name and parameters."""
        payload = json.dumps({"name": self.name, "parameters": self.parameters},
                             sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def minimum_index(self, minimum):
        for i, m in enumerate(self.minima):
            if m is minimum or np.allclose(m.location, minimum.location, atol=1e-12):
                return i
        raise ArgumentError("minimum is not catalogued on this landscape")

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.parameters.items())
        return f"Landscape({self.name}({params}))"


def evaluate(landscape, w):
    """Value, gradient and Hessian of ``landscape`` at a single point ``w``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (landscape.dim,):
        raise ArgumentError(
            f"expected a point of length {landscape.dim}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ArgumentError("point has non-finite coordinates")
    return (float(landscape.value(w)), landscape.gradient(w), landscape.hessian(w))


# --------------------------------------------------------------------------
# construction helpers

def _minimum(hess_fn, value_fn, location):
    loc = np.asarray(location, dtype=float)
    H = hess_fn(loc)
    eig = np.linalg.eigvalsh(H)
    return Minimum(location=loc, value=float(value_fn(loc)),
                   hessian_det=float(np.prod(eig)),
                   hessian_eigenvalues=eig,
                   hessian_frobenius=float(np.linalg.norm(H)))


def _saddle(hess_fn, value_fn, location, minima, adjacent):
    loc = np.asarray(location, dtype=float)
    eig = np.linalg.eigvalsh(hess_fn(loc))
    value = float(value_fn(loc))
    barriers = {i: value - minima[i].value for i in adjacent}
    return Saddle(location=loc, value=value, lambda_star=float(-eig[0]),
                  hessian_det_abs=float(abs(np.prod(eig))), barriers=barriers)


def custom(name, dim, value_fn, grad_fn, hess_fn, minima=(), saddles=(),
           parameters=None, convexity_split_constant=0.0,
           hessian_entry_bound=math.inf):
    """Wrap user-supplied vectorized callables as a :class:`Landscape`.

    ``minima`` is a list of locations and ``saddles`` a list of
    ``(location, adjacent_minimum_indices)`` pairs; their metadata is
    computed from the Hessian.
    """
    mins = tuple(_minimum(hess_fn, value_fn, m) for m in minima)
    sads = tuple(_saddle(hess_fn, value_fn, s, mins, adj) for s, adj in saddles)
    return Landscape(name=name, dim=int(dim), parameters=dict(parameters or {}),
                     value_fn=value_fn, grad_fn=grad_fn, hess_fn=hess_fn,
                     minima=mins, saddles=sads,
                     convexity_split_constant=float(convexity_split_constant),
                     hessian_entry_bound=float(hessian_entry_bound))


def scaled(landscape, factor):
    """Return ``factor * L`` with metadata rescaled (barriers, determinants)."""
    if not factor > 0:
        raise ArgumentError("scale factor must be positive")
    s = float(factor)
    base = landscape
    params = dict(base.parameters)
    params["scale"] = s * params.get("scale", 1.0)
    return custom(
        base.name, base.dim,
        lambda w: s * base.value_fn(w),
        lambda w: s * base.grad_fn(w),
        lambda w: s * base.hess_fn(w),
        minima=[m.location for m in base.minima],
        saddles=[(sd.location, list(sd.barriers)) for sd in base.saddles],
        parameters=params,
        convexity_split_constant=math.sqrt(s) * base.convexity_split_constant,
        hessian_entry_bound=s * base.hessian_entry_bound,
    )


# --------------------------------------------------------------------------
# catalog

def _quadratic(a=1.0):
    a = float(a)
    if not a > 0:
        raise ArgumentError("quadratic requires a > 0 (confinement)")
    return custom(
        "quadratic", 1,
        lambda w: 0.5 * a * w[..., 0] ** 2,
        lambda w: a * w,
        lambda w: np.full(w.shape[:-1] + (1, 1), a),
        minima=[[0.0]], parameters={"a": a},
        convexity_split_constant=math.sqrt(a), hessian_entry_bound=0.0)


def _quadratic_2d(a1=1.0, a2=1.0):
    a1, a2 = float(a1), float(a2)
    if not (a1 > 0 and a2 > 0):
        raise ArgumentError("quadratic_2d requires a1, a2 > 0 (confinement)")
    coef = np.array([a1, a2])

    def hess(w):
        out = np.zeros(w.shape[:-1] + (2, 2))
        out[..., 0, 0] = a1
        out[..., 1, 1] = a2
        return out

    # C_L^2 at the midpoint of the spectrum minimizes the A4 bound
    c_l = math.sqrt(0.5 * (a1 + a2))
    return custom(
        "quadratic_2d", 2,
        lambda w: 0.5 * np.sum(coef * w ** 2, axis=-1),
        lambda w: coef * w,
        hess, minima=[[0.0, 0.0]], parameters={"a1": a1, "a2": a2},
        convexity_split_constant=c_l, hessian_entry_bound=0.5 * abs(a2 - a1))


def _dw_value(w, delta):
    x = w[..., 0]
    return 0.25 * (x * x - 1.0) ** 2 + delta * x


def _dw_grad(w, delta):
    x = w[..., 0]
    return (x * x * x - x + delta)[..., None]


def _dw_hess(w):
    x = w[..., 0]
    return (3.0 * x * x - 1.0)[..., None, None]


def _double_well_1d():
    return custom(
        "double_well_1d", 1,
        lambda w: _dw_value(w, 0.0), lambda w: _dw_grad(w, 0.0), _dw_hess,
        minima=[[-1.0], [1.0]], saddles=[([0.0], [0, 1])], parameters={})


_TILT_MAX = 2.0 / (3.0 * math.sqrt(3.0))


def _tilted_double_well_1d(delta=0.1):
    delta = float(delta)
    if not abs(delta) < _TILT_MAX:
        raise ArgumentError(
            f"tilted_double_well_1d needs |delta| < {_TILT_MAX:.6f} for two minima")
    # trigonometric roots of w^3 - w + delta = 0, polished by Newton
    phi = math.acos(-1.5 * math.sqrt(3.0) * delta)
    roots = sorted(2.0 / math.sqrt(3.0) * math.cos(phi / 3.0 - 2.0 * math.pi * k / 3.0)
                   for k in range(3))
    polished = []
    for r in roots:
        for _ in range(3):
            r -= (r ** 3 - r + delta) / (3.0 * r * r - 1.0)
        polished.append(r)
    lo, mid, hi = polished
    return custom(
        "tilted_double_well_1d", 1,
        lambda w: _dw_value(w, delta), lambda w: _dw_grad(w, delta), _dw_hess,
        minima=[[lo], [hi]], saddles=[([mid], [0, 1])],
        parameters={"delta": delta})


def _two_well_2d(c1=1.0, c2=4.0, k=10.0):
    c1, c2, k = float(c1), float(c2), float(k)
    if not (c1 > 0 and c2 > 0):
        raise ArgumentError("two_well_2d requires c1, c2 > 0 (confinement)")
    if not k >= 0:
        raise ArgumentError("two_well_2d requires k >= 0")
    mean, half = 0.5 * (c1 + c2), 0.5 * (c2 - c1)

    def c(x):
        return mean + half * np.tanh(k * x)

    def dc(x):
        return half * k / np.cosh(k * x) ** 2

    def ddc(x):
        return -2.0 * half * k * k * np.tanh(k * x) / np.cosh(k * x) ** 2

    def value(w):
        x, y = w[..., 0], w[..., 1]
        return 0.25 * (x * x - 1.0) ** 2 + 0.5 * c(x) * y * y

    def grad(w):
        x, y = w[..., 0], w[..., 1]
        th = np.tanh(k * x)
        out = np.empty(w.shape)
        out[..., 0] = x * x * x - x + (0.5 * half * k) * (1.0 - th * th) * y * y
        out[..., 1] = (mean + half * th) * y
        return out

    def hess(w):
        x, y = w[..., 0], w[..., 1]
        out = np.empty(w.shape[:-1] + (2, 2))
        out[..., 0, 0] = 3.0 * x * x - 1.0 + 0.5 * ddc(x) * y * y
        out[..., 0, 1] = out[..., 1, 0] = dc(x) * y
        out[..., 1, 1] = c(x)
        return out

    return custom(
        "two_well_2d", 2, value, grad, hess,
        minima=[[-1.0, 0.0], [1.0, 0.0]], saddles=[([0.0, 0.0], [0, 1])],
        parameters={"c1": c1, "c2": c2, "k": k})


_CATALOG = {
    "quadratic": _quadratic,
    "quadratic_2d": _quadratic_2d,
    "double_well_1d": _double_well_1d,
    "tilted_double_well_1d": _tilted_double_well_1d,
    "two_well_2d": _two_well_2d,
}


def available():
    return sorted(_CATALOG)


def builtin(name, **parameters):
    """Construct a catalogued landscape by name.

    >>> builtin("two_well_2d", c1=1, c2=4, k=10).saddles[0].lambda_star
    1.0
    """
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise CatalogError(
            f"unknown landscape {name!r}; available: {', '.join(available())}") from None
    try:
        return factory(**parameters)
    except TypeError as exc:
        raise ArgumentError(f"bad parameters for {name}: {exc}") from None


def sharpness(minimum):
    """Determinant and Frobenius norm of the Hessian at a minimum."""
    return minimum.hessian_det, minimum.hessian_frobenius


# --------------------------------------------------------------------------
# assumption checks

@dataclass
class AssumptionEntry:
    verdict: str  # "pass" | "fail" | "inconclusive"
    evidence: list  # rows of (radius, quantity, value)
    witness: dict = field(default_factory=dict)


@dataclass
class AssumptionReport:
    entries: dict
    box: tuple = None

    def __getitem__(self, key):
        return self.entries[key]

    def verdicts(self):
        return {k: e.verdict for k, e in self.entries.items()}

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["assumption", "radius", "quantity", "value", "verdict"])
        for name, entry in self.entries.items():
            for radius, quantity, value in entry.evidence:
                writer.writerow([name, repr(float(radius)), quantity,
                                 repr(float(value)), entry.verdict])
        return buf.getvalue()


# largest acceptable outer-shell value of Tr(H)/|grad L|^2 for "tends to 0"
A2_RATIO_LIMIT = 0.1


def _shell_points(dim, radius, n):
    if dim == 1:
        return np.array([[-radius], [radius]])
    theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
    return radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def _trend(values):
    """'up', 'down' or 'mixed' for the outer half of a sequence.

    Non-strict steps count (underflow to a constant zero is common far out),
    but at least one strict step is required.
    """
    v = np.asarray(values, dtype=float)
    tail = v[len(v) // 2:] if len(v) > 2 else v
    d = np.diff(tail)
    if d.size == 0 or np.any(np.isnan(d)):
        return "mixed"
    if np.all(d >= 0) and np.any(d > 0):
        return "up"
    if np.all(d <= 0) and np.any(d < 0):
        return "down"
    return "mixed"


def _interior_mass(landscape, R, n_per_axis):
    t = np.linspace(-R, R, n_per_axis)
    if landscape.dim == 1:
        with np.errstate(over="ignore"):
            f = np.exp(-landscape.value(t[:, None]))
        return float(integrate.trapezoid(f, t))
    X, Y = np.meshgrid(t, t, indexing="ij")
    with np.errstate(over="ignore"):
        f = np.exp(-landscape.value(np.stack([X, Y], axis=-1)))
    return float(integrate.trapezoid(integrate.trapezoid(f, t, axis=1), t))


def _tail_bound(dim, R, L_min, slope, curvature):
    """Mass of exp(-L) outside radius R under a quadratic lower bound on L."""
    if curvature < 0 or (curvature == 0 and slope <= 0):
        return math.inf
    area = 2.0 if dim == 1 else 2.0 * math.pi

    def integrand(s):
        u = s - R
        return s ** (dim - 1) * math.exp(-(L_min + slope * u + 0.5 * curvature * u * u))

    with np.errstate(over="ignore"):
        val, _ = integrate.quad(integrand, R, math.inf, limit=200)
    return area * val


def check_assumptions(landscape, radii=None, samples_per_shell=64, box=5.0,
                      box_points=201, quad_points=None):
    """Numerical evidence for the confinement/Poincare/A4 hypotheses.

    Parameters
    ----------
    landscape : Landscape
    radii : increasing sequence of float, optional
        Shell radii, default ``1, 2, ..., 10``.
    samples_per_shell : int
        Directions per shell (2D); 1D shells are always ``{-r, r}``.
    box : float
        Half-width of the bounded box on which A4 is assessed.
    box_points : int
        Tensor-grid points per axis for the A4 sup-entry matrix.

    Returns
    -------
    AssumptionReport
        Entries ``A1``..``A4``. The A4 witness records ``C_L``, ``b`` and
        the box, since quartic landscapes only satisfy it on bounded sets.
    """
    radii = np.arange(1.0, 11.0) if radii is None else np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0:
        raise ArgumentError("radii must be a non-empty 1-D sequence")
    if np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise ArgumentError("radii must be positive and strictly increasing")
    if samples_per_shell < 1:
        raise ArgumentError("samples_per_shell must be >= 1")
    d = landscape.dim
    if d not in (1, 2):
        raise ArgumentError("assumption checks support dim 1 or 2")

    rows1, rows2, rows3 = [], [], []
    min_L, q_grow, q_ratio, q_a3 = [], [], [], []
    slope_last = curv_last = None
    for r in radii:
        pts = _shell_points(d, r, samples_per_shell)
        L = landscape.value(pts)
        g = landscape.gradient(pts)
        H = landscape.hessian(pts)
        g2 = np.sum(g * g, axis=-1)
        tr = np.trace(H, axis1=-2, axis2=-1)
        unit = pts / r
        radial_slope = np.sum(g * unit, axis=-1)
        radial_curv = np.einsum("...i,...ij,...j->...", unit, H, unit)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            a3 = np.abs(np.exp(-L) * (g2 - tr))
            ratio = np.where(g2 > 0, np.abs(tr) / g2, np.inf)
        min_L.append(float(L.min()))
        q_grow.append(float(np.min(0.5 * g2 - tr)))
        q_ratio.append(float(np.max(ratio)))
        q_a3.append(float(np.max(a3)))
        slope_last, curv_last = float(radial_slope.min()), float(radial_curv.min())
        rows1.append((r, "min_shell_L", min_L[-1]))
        rows2.append((r, "min_shell_half_grad2_minus_trace", q_grow[-1]))
        rows2.append((r, "max_shell_trace_over_grad2", q_ratio[-1]))
        rows3.append((r, "max_shell_a3_quantity", q_a3[-1]))

    R = float(radii[-1])
    n_quad = quad_points or (4001 if d == 1 else 801)
    interior = _interior_mass(landscape, R, n_quad)
    tail = _tail_bound(d, R, min_L[-1], slope_last, curv_last)
    rows1.append((R, "interior_mass", interior))
    rows1.append((R, "tail_bound", tail))
    trend = _trend(min_L)
    if trend == "down" or not math.isfinite(interior) or not math.isfinite(tail):
        v1 = "fail"
    elif trend == "up" and tail < 1e-6 * interior:
        v1 = "pass"
    else:
        v1 = "inconclusive"

    t_grow, t_ratio = _trend(q_grow), _trend(q_ratio)
    if t_grow == "up" and q_grow[-1] > 0 and t_ratio == "down" and q_ratio[-1] <= A2_RATIO_LIMIT:
        v2 = "pass"
    elif t_grow == "down" or t_ratio == "up":
        v2 = "fail"
    else:
        v2 = "inconclusive"

    # A3: sup over shells and a dense interior grid
    t = np.linspace(-R, R, 401 if d == 2 else n_quad)
    grid = t[:, None] if d == 1 else np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
    with np.errstate(over="ignore", invalid="ignore"):
        G = landscape.gradient(grid)
        inner = np.abs(np.exp(-landscape.value(grid))
                       * (np.sum(G * G, -1) - np.trace(landscape.hessian(grid), axis1=-2, axis2=-1)))
    M_w = float(max(np.nanmax(inner), max(q_a3)))
    rows3.append((R, "M_w", M_w))
    t3 = _trend(q_a3)
    if not math.isfinite(M_w) or t3 == "up":
        v3 = "fail"
    elif (t3 == "down" and q_a3[-1] < M_w) or q_a3[-1] <= 1e-12 * M_w:
        v3 = "pass"
    else:
        v3 = "inconclusive"

    # A4 on the bounded box
    c_l = landscape.convexity_split_constant
    tb = np.linspace(-box, box, box_points)
    bpts = tb[:, None] if d == 1 else np.stack(np.meshgrid(tb, tb, indexing="ij"), -1).reshape(-1, 2)
    Ht = landscape.hessian(bpts) - c_l ** 2 * np.eye(d)
    sup_entry = np.max(np.abs(Ht), axis=0)
    b = float(np.max(np.abs(np.linalg.eigvals(sup_entry)))) if np.all(np.isfinite(sup_entry)) else math.inf
    rows4 = [(box, f"sup_entry_{i}{j}", sup_entry[i, j]) for i in range(d) for j in range(d)]
    rows4.append((box, "spectral_radius", b))
    v4 = "pass" if math.isfinite(b) else "fail"

    entries = {
        "A1": AssumptionEntry(v1, rows1, {"interior_mass": interior, "tail_bound": tail}),
        "A2": AssumptionEntry(v2, rows2, {}),
        "A3": AssumptionEntry(v3, rows3, {"M_w": M_w}),
        "A4": AssumptionEntry(v4, rows4, {"C_L": c_l, "b": b, "box": (-box, box)}),
    }
    return AssumptionReport(entries=entries, box=(-float(box), float(box)))
