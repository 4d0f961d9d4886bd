"""Finite-volume solvers for the isotropic Fokker-Planck equation and the
Vlasov-Fokker-Planck equation of the momentum diffusion.

Both solvers use exponentially fitted (Scharfetter-Gummel / Chang-Cooper)
fluxes, so the Gibbs densities are exact fixed points of the discrete
operators. The kinetic transport step is written for ``h = psi / psi_inf``
with a discretely divergence-free flux field built from a stream function,
which keeps ``psi_inf`` fixed and ``h`` inside its initial range.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import exprel

from .errors import ArgumentError, DomainError, SchemeError, StepSizeError

__all__ = [
    "Grid",
    "DensityField",
    "PhaseDensityField",
    "stationary_density",
    "stationary_phase_density",
    "mollified_dirac",
    "gaussian_density",
    "solve_fpe",
    "solve_vfp",
    "weighted_l2_distance",
    "read_binary",
]

BOUNDARY_RATIO = 1e-12
NEGATIVE_TOL = -1e-14
_MAGIC = b"FPE1"


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred tensor grid.

    Parameters
    ----------
    axes : tuple of (lower, upper, n_cells)
        One entry per axis. For a phase grid the first half of the axes are
        positions and the second half velocities.
    phase : bool
        Whether the grid is a (w, v) phase grid.
    """

    axes: tuple
    phase: bool = False

    def __post_init__(self):
        axes = tuple((float(a), float(b), int(n)) for a, b, n in self.axes)
        if not axes:
            raise ArgumentError("grid needs at least one axis")
        for lo, hi, n in axes:
            if not lo < hi:
                raise ArgumentError(f"grid axis needs lower < upper, got [{lo}, {hi}]")
            if n < 16:
                raise ArgumentError(f"grid axis needs n_cells >= 16, got {n}")
        if self.phase and len(axes) % 2:
            raise ArgumentError("phase grid needs equal numbers of w and v axes")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, lower, upper, n_cells, dim=1):
        return cls(((lower, upper, n_cells),) * dim)

    @classmethod
    def phase_space(cls, w_axis, v_axis):
        return cls((tuple(w_axis), tuple(v_axis)), phase=True)

    @property
    def ndim(self):
        return len(self.axes)

    @property
    def dim(self):
        """Spatial dimension (half the axes for phase grids)."""
        return self.ndim // 2 if self.phase else self.ndim

    @property
    def shape(self):
        return tuple(n for _, _, n in self.axes)

    @property
    def spacing(self):
        return tuple((hi - lo) / n for lo, hi, n in self.axes)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def centers(self, axis):
        lo, hi, n = self.axes[axis]
        h = (hi - lo) / n
        return lo + h * (np.arange(n) + 0.5)

    def edges(self, axis):
        lo, hi, n = self.axes[axis]
        return np.linspace(lo, hi, n + 1)

    def mesh(self):
        """Cell centres as an array of shape ``shape + (ndim,)``."""
        return np.stack(np.meshgrid(*[self.centers(a) for a in range(self.ndim)],
                                    indexing="ij"), axis=-1)

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for a in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[a] = 0
            mask[tuple(idx)] = True
            idx[a] = -1
            mask[tuple(idx)] = True
        return mask

    def integrate(self, values):
        return float(np.sum(values) * self.cell_volume)


@dataclass
class DensityField:
    """Cell-centred density on a spatial grid."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    @property
    def mass(self):
        return self.grid.integrate(self.values)

    def moment(self, axis, order):
        x = self.grid.mesh()[..., axis]
        return self.grid.integrate(self.values * x ** order)

    def variance(self, axis=0):
        m1 = self.moment(axis, 1) / self.mass
        return self.moment(axis, 2) / self.mass - m1 * m1

    def to_csv(self, header=()):
        return _field_csv(self, header, ["w_%d" % (i + 1) for i in range(self.grid.ndim)])

    def to_bytes(self):
        return _field_bytes(self)


@dataclass
class PhaseDensityField(DensityField):
    """Cell-centred density on a (w, v) phase grid."""

    def v_marginal_axis(self):
        return tuple(range(self.grid.dim, self.grid.ndim))

    def w_marginal(self):
        """Position marginal (integral over velocities) as a DensityField."""
        g = self.grid
        hv = float(np.prod(g.spacing[g.dim:]))
        vals = self.values.sum(axis=self.v_marginal_axis()) * hv
        return DensityField(Grid(g.axes[:g.dim]), vals, self.time)

    def v_marginal(self):
        g = self.grid
        hw = float(np.prod(g.spacing[:g.dim]))
        vals = self.values.sum(axis=tuple(range(g.dim))) * hw
        return DensityField(Grid(g.axes[g.dim:]), vals, self.time)

    def to_csv(self, header=()):
        d = self.grid.dim
        names = [f"w_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)]
        return _field_csv(self, header, names)


def _field_csv(fld, header, names):
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write(f"# time={fld.time!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(names) + ["value"])
    pts = fld.grid.mesh().reshape(-1, fld.grid.ndim)
    for x, val in zip(pts, fld.values.ravel()):
        w.writerow([repr(float(c)) for c in x] + [repr(float(val))])
    return buf.getvalue()


def _field_bytes(fld):
    g = fld.grid
    parts = [_MAGIC, struct.pack("<I", g.ndim)]
    parts.append(struct.pack(f"<{g.ndim}I", *g.shape))
    parts.append(struct.pack(f"<{2 * g.ndim}d", *[b for lo, hi, _ in g.axes for b in (lo, hi)]))
    parts.append(struct.pack("<d", fld.time))
    parts.append(np.ascontiguousarray(fld.values, dtype="<f8").tobytes(order="C"))
    return b"".join(parts)


def read_binary(data, phase=False):
    """Inverse of ``DensityField.to_bytes``."""
    if data[:4] != _MAGIC:
        raise ArgumentError("not an FPE1 dump")
    (ndim,) = struct.unpack_from("<I", data, 4)
    off = 8
    shape = struct.unpack_from(f"<{ndim}I", data, off)
    off += 4 * ndim
    bounds = struct.unpack_from(f"<{2 * ndim}d", data, off)
    off += 16 * ndim
    (time,) = struct.unpack_from("<d", data, off)
    off += 8
    values = np.frombuffer(data, dtype="<f8", offset=off).reshape(shape).astype(float)
    grid = Grid(tuple((bounds[2 * i], bounds[2 * i + 1], shape[i]) for i in range(ndim)),
                phase=phase)
    cls = PhaseDensityField if phase else DensityField
    return cls(grid, values, time)


# --------------------------------------------------------------------------
# stationary densities and initial conditions

def _landscape_on(landscape, grid, axes=None):
    pts = grid.mesh()
    if axes is not None:
        pts = pts[..., axes]
    if pts.shape[-1] != landscape.dim:
        raise ArgumentError(f"grid spatial dimension {pts.shape[-1]} does not match "
                            f"landscape dimension {landscape.dim}")
    return landscape.value(pts)


def _gibbs(exponent, grid, check_boundary=True):
    """Normalized ``exp(-exponent)`` on the grid with the boundary check."""
    log_p = -(exponent - np.min(exponent))
    vals = np.exp(log_p)
    if check_boundary:
        edge = np.max(vals[grid.boundary_mask()])
        if edge > BOUNDARY_RATIO:
            raise DomainError(
                f"grid truncates the stationary density: boundary value is {edge:.3g} of "
                f"the maximum (needs <= {BOUNDARY_RATIO:g}); enlarge the bounds")
    return vals / grid.integrate(vals)


def stationary_density(landscape, eta_inf, grid):
    """Gibbs density ``kappa exp(-eta_inf L)`` normalized on ``grid``."""
    if not eta_inf > 0:
        raise ArgumentError("eta_inf must be positive")
    if grid.phase:
        raise ArgumentError("use stationary_phase_density for phase grids")
    return DensityField(grid, _gibbs(eta_inf * _landscape_on(landscape, grid), grid))


def phase_eta(gamma, xi, M, beta):
    """``(2M / (gamma beta)) (1 - xi)``."""
    return 2.0 * M * (1.0 - xi) / (gamma * beta)


def stationary_phase_density(landscape, gamma, xi, M, beta, grid):
    """``kappa' exp(-eta' (L(w) + |v|^2 / 2))`` on a phase grid."""
    _check_msgd(gamma, xi, M, beta)
    if not grid.phase:
        raise ArgumentError("stationary_phase_density needs a phase grid")
    d = grid.dim
    Lw = _landscape_on(landscape, grid, axes=slice(0, d))
    v = grid.mesh()[..., d:]
    energy = Lw + 0.5 * np.sum(v * v, axis=-1)
    return PhaseDensityField(grid, _gibbs(phase_eta(gamma, xi, M, beta) * energy, grid))


def gaussian_density(grid, mean, std):
    """Grid-normalized isotropic Gaussian (cell-centre values)."""
    x = grid.mesh()
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (grid.ndim,))
    std = np.broadcast_to(np.asarray(std, dtype=float), (grid.ndim,))
    q = np.sum(((x - mean) / std) ** 2, axis=-1)
    vals = np.exp(-0.5 * q)
    cls = PhaseDensityField if grid.phase else DensityField
    return cls(grid, vals / grid.integrate(vals))


def mollified_dirac(grid, w0):
    """Point mass at ``w0`` regularized to a Gaussian of std ``2h`` per axis."""
    return gaussian_density(grid, w0, 2.0 * np.asarray(grid.spacing))


def _check_msgd(gamma, xi, M, beta):
    if not (0 < xi < 1):
        raise ArgumentError("momentum xi must lie in (0, 1)")
    for name, val in (("gamma", gamma), ("M", M), ("beta", beta)):
        if not (val > 0 and math.isfinite(val)):
            raise ArgumentError(f"{name} must be positive and finite")


# --------------------------------------------------------------------------
# exponentially fitted fluxes

def bernoulli(x):
    """``B(x) = x / (e^x - 1)`` with ``B(0) = 1``."""
    return 1.0 / exprel(x)


def _sg_coefficients(phi, D, h, axis):
    """Face coefficients (a_plus, a_minus) with F = a_plus p_i - a_minus p_{i+1}.

    ``phi`` is the drift potential and ``D`` the diffusion coefficient
    (scalar or cell field); the face value of ``D`` is the arithmetic mean.
    """
    sl_lo = [slice(None)] * phi.ndim
    sl_hi = [slice(None)] * phi.ndim
    sl_lo[axis] = slice(None, -1)
    sl_hi[axis] = slice(1, None)
    sl_lo, sl_hi = tuple(sl_lo), tuple(sl_hi)
    if np.ndim(D) == 0:
        Df = np.full(phi[sl_lo].shape, float(D))
    else:
        Df = 0.5 * (D[sl_lo] + D[sl_hi])
    du = (phi[sl_hi] - phi[sl_lo]) / Df
    scale = Df / (h * h)
    return scale * bernoulli(du), scale * bernoulli(-du)


def _outflow_rate(coefs, shape):
    """Per-cell sum of outgoing coefficients (rate of loss of p_i)."""
    out = np.zeros(shape)
    for axis, (ap, am) in coefs:
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] += ap
        out[tuple(hi)] += am
    return out


def _apply_fluxes(p, coefs, dt):
    new = p.copy()
    for axis, (ap, am) in coefs:
        lo = [slice(None)] * p.ndim
        hi = [slice(None)] * p.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        flux = ap * p[lo] - am * p[hi]
        new[lo] -= dt * flux
        new[hi] += dt * flux
    return new


def _check_step_count(t_end, dt, record_every):
    if not dt > 0:
        raise ArgumentError("dt must be positive")
    if not t_end > 0:
        raise ArgumentError("t_end must be positive")
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * t_end:
        raise ArgumentError("t_end must be an integer multiple of dt")
    every = int(round(record_every / dt))
    if every < 1 or abs(every * dt - record_every) > 1e-9 * max(record_every, dt):
        raise ArgumentError("record_every must be a positive integer multiple of dt")
    return n, every


def _check_density(fld, grid_phase):
    if fld.grid.phase != grid_phase:
        raise ArgumentError("density field is on the wrong kind of grid")
    if np.any(fld.values < 0) or not np.all(np.isfinite(fld.values)):
        raise ArgumentError("initial density must be finite and nonnegative")
    if abs(fld.mass - 1.0) > 1e-8:
        raise ArgumentError(f"initial density must have mass 1, got {fld.mass!r}")


def _check_positivity(p, t):
    low = float(np.min(p))
    if low < NEGATIVE_TOL:
        raise SchemeError(f"density became negative ({low:.3g}) at t={t:.6g}")


def fpe_max_dt(landscape, schedule, grid, t=0.0, beta_field=None):
    """Largest stable explicit step at time ``t`` (positivity bound)."""
    coefs = _fpe_coefficients(landscape, schedule, grid, t, beta_field)
    return 1.0 / float(np.max(_outflow_rate(coefs, grid.shape)))


def _fpe_coefficients(landscape, schedule, grid, t, beta_field):
    L = _landscape_on(landscape, grid)
    g = float(schedule.gamma(t))
    m = float(schedule.batch(t))
    if beta_field is None:
        D = g * schedule.beta / (2.0 * m)
        phi = L
    else:
        D = g * beta_field(grid.mesh()) / (2.0 * m)
        if np.any(D <= 0):
            raise ArgumentError("beta_field must be positive on the grid")
        phi = L + D
    return [(a, _sg_coefficients(phi, D, h, a)) for a, h in enumerate(grid.spacing)]


def solve_fpe(landscape, schedule, p0, t_end, dt, record_every, beta_field=None):
    """Explicit exponentially fitted finite-volume solve of the SGD Fokker-Planck equation.

    Solves ``dp/dt = div( grad(L + D) p + D grad p )`` with
    ``D = gamma(t) beta(w) / (2 M(t))`` and zero flux through the box
    boundary. For constant ``beta`` the Gibbs density ``exp(-L/D)`` is an
    exact discrete steady state.

    Parameters
    ----------
    landscape : Landscape
    schedule : Schedule
    p0 : DensityField
        Nonnegative initial density of unit mass.
    t_end, dt, record_every : float
        Horizon, step, and snapshot spacing (multiples of ``dt``).
    beta_field : callable, optional
        ``beta(w)`` evaluated on an array of points; overrides the schedule's
        constant ``beta`` in the diffusion coefficient.

    Returns
    -------
    list of DensityField
        Snapshots at ``0, record_every, 2 record_every, ...`` (and ``t_end``).

    Raises
    ------
    StepSizeError
        If ``dt`` exceeds the positivity bound at any step.
    SchemeError
        If a cell value drops below ``-1e-14``.
    """
    _check_density(p0, False)
    n, every = _check_step_count(t_end, dt, record_every)
    grid = p0.grid
    time_dependent = schedule.family != "constant"
    p = p0.values.astype(float).copy()
    snaps = [DensityField(grid, p.copy(), 0.0)]
    coefs = None
    for k in range(n):
        t = k * dt
        if coefs is None or time_dependent:
            coefs = _fpe_coefficients(landscape, schedule, grid, t, beta_field)
            rate = float(np.max(_outflow_rate(coefs, grid.shape)))
            if dt * rate > 1.0:
                raise StepSizeError(f"dt={dt} exceeds the explicit positivity bound "
                                    f"{1.0 / rate:.6g} at t={t:.6g}", dt_max=1.0 / rate)
        p = _apply_fluxes(p, coefs, dt)
        _check_positivity(p, t + dt)
        if (k + 1) % every == 0 or k + 1 == n:
            snaps.append(DensityField(grid, p.copy(), (k + 1) * dt))
    return snaps


# --------------------------------------------------------------------------
# Vlasov-Fokker-Planck

@dataclass
class _VfpOperator:
    grid: Grid
    psi_inf: np.ndarray
    flux_w: np.ndarray   # faces normal to w, shape (nw+1, nv)
    flux_v: np.ndarray   # faces normal to v, shape (nw, nv+1)
    coll: tuple = field(default=None)   # (a_plus, a_minus) along v, or None
    transport_rate: np.ndarray = field(default=None)
    collision_rate: float = 0.0


def _vfp_operator(landscape, gamma, xi, M, beta, grid, balance_eta=None, friction=None,
                  diffusion=None):
    if grid.dim != 1:
        raise ArgumentError("solve_vfp supports one spatial dimension")
    if landscape.dim != 1:
        raise ArgumentError("solve_vfp needs a one-dimensional landscape")
    (wlo, whi, nw), (vlo, vhi, nv) = grid.axes
    hw, hv = grid.spacing
    eta = phase_eta(gamma, xi, M, beta) if balance_eta is None else float(balance_eta)
    # stream function at cell corners: S = psi_inf / eta (unnormalized, shifted)
    we, ve = grid.edges(0), grid.edges(1)
    wc, vc = grid.centers(0), grid.centers(1)
    Le, Lc = landscape.value(we[:, None]), landscape.value(wc[:, None])
    shift = min(np.min(Le), np.min(Lc))
    energy_c = (Lc - shift)[:, None] + 0.5 * vc[None, :] ** 2
    energy_e = (Le - shift)[:, None] + 0.5 * ve[None, :] ** 2
    emin = min(np.min(energy_c), np.min(energy_e))
    psi_c = np.exp(-eta * (energy_c - emin))
    S = np.exp(-eta * (energy_e - emin)) / eta
    norm = np.sum(psi_c) * hw * hv
    psi_c, S = psi_c / norm, S / norm
    if np.min(psi_c) <= 1e-300:
        raise DomainError("stationary phase density underflows on the grid; shrink the box")
    # G = (1/eta) * (-d/dv, d/dw) psi_inf integrated over faces
    flux_w = S[:, :-1] - S[:, 1:]
    flux_v = S[1:, :] - S[:-1, :]
    flux_w[0, :] = 0.0
    flux_w[-1, :] = 0.0
    flux_v[:, 0] = 0.0
    flux_v[:, -1] = 0.0
    out = (np.maximum(flux_w[1:, :], 0) + np.maximum(-flux_w[:-1, :], 0)
           + np.maximum(flux_v[:, 1:], 0) + np.maximum(-flux_v[:, :-1], 0))
    transport_rate = out / (hw * hv * psi_c)
    op = _VfpOperator(grid, psi_c, flux_w, flux_v, transport_rate=transport_rate)
    g = (1.0 - xi) / math.sqrt(gamma) if friction is None else float(friction)
    Dv = math.sqrt(gamma) * beta / (2.0 * M) if diffusion is None else float(diffusion)
    if Dv > 0:
        U = np.broadcast_to(0.5 * g * vc ** 2, (nw, nv))
        ap, am = _sg_coefficients(np.ascontiguousarray(U), Dv, hv, axis=1)
        op.coll = (ap, am)
        op.collision_rate = float(np.max(_outflow_rate([(1, (ap, am))], (nw, nv))))
    elif g != 0:
        raise ArgumentError("friction without diffusion is not supported")
    return op


def vfp_max_dt(landscape, gamma, xi, M, beta, grid, **kw):
    """Largest step satisfying both the transport and collision bounds."""
    op = _vfp_operator(landscape, gamma, xi, M, beta, grid, **kw)
    bound = 2.0 / float(np.max(op.transport_rate))
    if op.coll is not None:
        bound = min(bound, 1.0 / op.collision_rate)
    return bound


def _transport(op, psi, tau):
    h = psi / op.psi_inf
    # upwind h on interior faces; boundary faces carry no flux
    hw_up = np.zeros_like(op.flux_w)
    hw_up[1:-1] = np.where(op.flux_w[1:-1] > 0, h[:-1], h[1:])
    hv_up = np.zeros_like(op.flux_v)
    hv_up[:, 1:-1] = np.where(op.flux_v[:, 1:-1] > 0, h[:, :-1], h[:, 1:])
    fw = op.flux_w * hw_up
    fv = op.flux_v * hv_up
    hw, hv = op.grid.spacing
    div = (fw[1:, :] - fw[:-1, :]) + (fv[:, 1:] - fv[:, :-1])
    return psi - (tau / (hw * hv)) * div


def solve_vfp(landscape, gamma, xi, M, beta, psi0, t_end, dt, record_every,
              balance_eta=None, friction=None, diffusion=None):
    """Strang-split finite-volume solve of the kinetic Fokker-Planck equation.

    ``d psi/dt + v d psi/dw - L'(w) d psi/dv = d/dv( g v psi + D_v d psi/dv )``
    with ``g = (1 - xi)/sqrt(gamma)`` and ``D_v = sqrt(gamma) beta / (2M)``.
    Each step applies half a transport step, a full collision step and a
    second half transport step. Transport is an upwind scheme for
    ``h = psi / psi_inf`` with divergence-free face fluxes; collision uses
    exponentially fitted fluxes in ``v``. All box faces carry zero flux.

    Parameters
    ----------
    landscape : Landscape
        One-dimensional landscape.
    gamma, xi, M, beta : float
        Momentum-SGD parameters.
    psi0 : PhaseDensityField
    t_end, dt, record_every : float
    balance_eta : float, optional
        Inverse temperature of the Gibbs weight used to build the transport
        fluxes. Defaults to ``eta' = 2M(1-xi)/(gamma beta)``; any positive
        value gives a consistent transport discretization.
    friction, diffusion : float, optional
        Override ``g`` and ``D_v`` (``0, 0`` gives pure Hamiltonian transport).

    Returns
    -------
    list of PhaseDensityField
    """
    if friction is None and diffusion is None:
        _check_msgd(gamma, xi, M, beta)
    _check_density(psi0, True)
    n, every = _check_step_count(t_end, dt, record_every)
    op = _vfp_operator(landscape, gamma, xi, M, beta, psi0.grid, balance_eta=balance_eta,
                       friction=friction, diffusion=diffusion)
    t_rate = float(np.max(op.transport_rate))
    if 0.5 * dt * t_rate > 1.0:
        raise StepSizeError(f"dt={dt} violates the transport CFL bound {2.0 / t_rate:.6g}",
                            dt_max=2.0 / t_rate)
    if op.coll is not None and dt * op.collision_rate > 1.0:
        raise StepSizeError(f"dt={dt} violates the collision bound "
                            f"{1.0 / op.collision_rate:.6g}", dt_max=1.0 / op.collision_rate)
    grid = psi0.grid
    psi = psi0.values.astype(float).copy()
    snaps = [PhaseDensityField(grid, psi.copy(), 0.0)]
    coll = [(1, op.coll)] if op.coll is not None else None
    for k in range(n):
        psi = _transport(op, psi, 0.5 * dt)
        if coll is not None:
            psi = _apply_fluxes(psi, coll, dt)
        psi = _transport(op, psi, 0.5 * dt)
        _check_positivity(psi, (k + 1) * dt)
        if (k + 1) % every == 0 or k + 1 == n:
            snaps.append(PhaseDensityField(grid, psi.copy(), (k + 1) * dt))
    return snaps


# --------------------------------------------------------------------------
# distances

def weighted_l2_distance(p, p_ref):
    """Quadrature of ``(p - p_ref)^2 / p_ref`` on a shared grid."""
    if p.grid != p_ref.grid:
        raise ArgumentError("densities live on different grids")
    if np.min(p_ref.values) <= 1e-300:
        raise DomainError("reference density underflows (<= 1e-300) on the grid")
    diff = p.values - p_ref.values
    return p.grid.integrate(diff * diff / p_ref.values)


def at_time(snapshots, t):
    """Snapshot whose time is closest to ``t``."""
    return min(snapshots, key=lambda s: abs(s.time - t))


def with_time(fld, t):
    return replace(fld, time=t)
