"""Mini-batch sampling on synthetic datasets: gradient-noise moments and
sharpness trajectories of SGD and momentum SGD.

Linear and logistic models stand in for neural networks so that the
full-data Hessian is available in closed form.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .errors import ArgumentError, DivergenceError

__all__ = [
    "Dataset",
    "make_dataset",
    "SquaredLoss",
    "CrossEntropyLoss",
    "minibatch_gradient",
    "estimate_noise_moments",
    "population_noise_covariance",
    "isotropy_diagnostic",
    "SGD",
    "MSGD",
    "SharpnessTrace",
    "train_with_sharpness",
]

MAX_DIM = 50


@dataclass(frozen=True, eq=False)
class Dataset:
    kind: str
    inputs: np.ndarray
    targets: np.ndarray
    w_true: np.ndarray
    noise: float
    seed: int
    design: str = "gaussian"

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def d(self):
        return self.inputs.shape[1]


def make_dataset(kind, n, d, noise, seed, design="gaussian", margin_scale=0.5):
    """Synthetic regression or classification data.

    Parameters
    ----------
    kind : {"linear_regression", "logistic"}
    n, d : int
        Sample count and input dimension.
    noise : float
        Regression: std of additive target noise. Logistic: std of a
        Gaussian perturbation of the logits before drawing labels.
    seed : int
    design : {"gaussian", "mixture"}
        ``"gaussian"`` draws i.i.d. standard normal rows. ``"mixture"`` draws
        rows from two clusters at ``+-u`` (``u`` a unit vector) with unit
        isotropic spread and places the true boundary so that most points sit
        near the margin, where the logistic curvature is largest.
    margin_scale : float
        Norm of the true weight vector for ``design="mixture"``.
    """
    if kind not in ("linear_regression", "logistic"):
        raise ArgumentError(f"unknown dataset kind {kind!r}")
    if design not in ("gaussian", "mixture"):
        raise ArgumentError(f"unknown design {design!r}")
    if n < 1 or d < 1:
        raise ArgumentError("n and d must be >= 1")
    if d > MAX_DIM:
        raise ArgumentError(f"d must be <= {MAX_DIM}")
    if noise < 0:
        raise ArgumentError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    if design == "gaussian":
        X = rng.standard_normal((n, d))
        w0 = rng.standard_normal(d)
    else:
        u = np.zeros(d)
        u[0] = 1.0
        side = rng.choice([-1.0, 1.0], size=n)
        X = side[:, None] * 2.0 * u[None, :] + rng.standard_normal((n, d))
        w0 = margin_scale * rng.standard_normal(d) / math.sqrt(d)
    if kind == "linear_regression":
        y = X @ w0 + noise * rng.standard_normal(n)
    else:
        z = X @ w0 + noise * rng.standard_normal(n)
        y = (rng.random(n) < expit(z)).astype(float)
    return Dataset(kind=kind, inputs=X, targets=y, w_true=w0, noise=float(noise),
                   seed=int(seed), design=design)


# --------------------------------------------------------------------------
# losses

class SquaredLoss:
    """``L_n(w) = (x_n . w - y_n)^2 / 2``."""

    name = "squared"

    def per_sample_values(self, data, w, idx=None):
        X, y = _rows(data, idx)
        r = X @ w - y
        return 0.5 * r * r

    def per_sample_gradients(self, data, w, idx=None):
        X, y = _rows(data, idx)
        return (X @ w - y)[:, None] * X

    def hessian(self, data, w):
        X = data.inputs
        return X.T @ X / data.n

    def value(self, data, w):
        return float(np.mean(self.per_sample_values(data, w)))

    def gradient(self, data, w):
        return self.per_sample_gradients(data, w).mean(axis=0)

    def describe(self):
        return {"loss": self.name}


class CrossEntropyLoss:
    """Logistic cross entropy with penalty ``lam ||w||^2`` (``lam > 0``)."""

    name = "cross_entropy"

    def __init__(self, lam):
        if not lam > 0:
            raise ArgumentError("cross-entropy penalty lam must be > 0 for confinement")
        self.lam = float(lam)

    def per_sample_values(self, data, w, idx=None):
        X, y = _rows(data, idx)
        z = X @ w
        return -(y * log_expit(z) + (1.0 - y) * log_expit(-z)) + self.lam * float(w @ w)

    def per_sample_gradients(self, data, w, idx=None):
        X, y = _rows(data, idx)
        return (expit(X @ w) - y)[:, None] * X + 2.0 * self.lam * w[None, :]

    def hessian(self, data, w):
        X = data.inputs
        s = expit(X @ w)
        return (X * (s * (1.0 - s))[:, None]).T @ X / data.n + 2.0 * self.lam * np.eye(data.d)

    def value(self, data, w):
        return float(np.mean(self.per_sample_values(data, w)))

    def gradient(self, data, w):
        return self.per_sample_gradients(data, w).mean(axis=0)

    def describe(self):
        return {"loss": self.name, "lam": self.lam}


def _rows(data, idx):
    if idx is None:
        return data.inputs, data.targets
    return data.inputs[idx], data.targets[idx]


def minibatch_gradient(loss, data, w, batch_indices):
    """Mean per-sample gradient over ``batch_indices``."""
    idx = np.asarray(batch_indices, dtype=int)
    if idx.size == 0:
        raise ArgumentError("batch is empty")
    if np.any(idx < 0) or np.any(idx >= data.n):
        raise ArgumentError("batch index out of range")
    return loss.per_sample_gradients(data, np.asarray(w, dtype=float), idx).mean(axis=0)


def _draw_batch(rng, n, M, replace):
    if replace:
        return rng.integers(0, n, size=M)
    return rng.choice(n, size=M, replace=False)


def estimate_noise_moments(loss, data, w, M, n_draws, seed, replace=True):
    """Sample mean and covariance of ``sqrt(M) (grad L_hat(w) - batch gradient)``.

    Batches are uniform with replacement by default, in which case the
    covariance equals :func:`population_noise_covariance` exactly in
    expectation for every ``M``.
    """
    if not 1 <= M <= data.n:
        raise ArgumentError("batch size must satisfy 1 <= M <= n")
    if n_draws < 100:
        raise ArgumentError("n_draws must be >= 100")
    w = np.asarray(w, dtype=float)
    rng = np.random.default_rng(seed)
    full = loss.gradient(data, w)
    G = loss.per_sample_gradients(data, w)
    eps = np.empty((n_draws, data.d))
    for k in range(n_draws):
        idx = _draw_batch(rng, data.n, M, replace)
        eps[k] = math.sqrt(M) * (full - G[idx].mean(axis=0))
    return eps.mean(axis=0), np.atleast_2d(np.cov(eps, rowvar=False))


def population_noise_covariance(loss, data, w):
    """Finite-population covariance of per-sample gradients at ``w``."""
    G = loss.per_sample_gradients(data, np.asarray(w, dtype=float))
    D = G - G.mean(axis=0)
    return D.T @ D / data.n


def isotropy_diagnostic(covariance):
    """``(trace/d, (lambda_max - lambda_min) / (trace/d))`` of a covariance."""
    S = np.atleast_2d(np.asarray(covariance, dtype=float))
    if S.shape[0] != S.shape[1] or not np.allclose(S, S.T, atol=1e-12):
        raise ArgumentError("covariance must be a symmetric matrix")
    eig = np.linalg.eigvalsh(S)
    if eig[0] < -1e-10 * max(1.0, eig[-1]):
        raise ArgumentError("covariance must be positive semidefinite")
    beta_hat = float(np.trace(S) / S.shape[0])
    if beta_hat == 0:
        return 0.0, 0.0
    return beta_hat, float((eig[-1] - eig[0]) / beta_hat)


# --------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class SGD:
    gamma: float
    M: int

    def describe(self):
        return {"optimizer": "sgd", "gamma": self.gamma, "M": self.M}


@dataclass(frozen=True)
class MSGD:
    gamma: float
    xi: float
    M: int

    def describe(self):
        return {"optimizer": "msgd", "gamma": self.gamma, "xi": self.xi, "M": self.M}


@dataclass
class SharpnessTrace:
    steps: np.ndarray
    frobenius: np.ndarray
    loss: np.ndarray
    config: dict = field(default_factory=dict)
    final_weights: np.ndarray = None

    def to_csv(self, header=()):
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        for k, v in self.config.items():
            buf.write(f"# {k}={v!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss", "hessian_frobenius"])
        for s, l, f in zip(self.steps, self.loss, self.frobenius):
            w.writerow([int(s), repr(float(l)), repr(float(f))])
        return buf.getvalue()


def train_with_sharpness(loss, data, optimizer, n_steps, record_every, seed, w0=None,
                         replace=True, guard_radius=1e6):
    """Run mini-batch SGD or momentum SGD and record the Hessian Frobenius norm.

    Each step draws a fresh uniform batch. The full-data loss and
    ``||Hess L_hat(w_k)||_F`` are recorded at steps ``0, record_every, ...``
    and at ``n_steps``.

    Raises
    ------
    DivergenceError
        If the iterate becomes non-finite or leaves ``|w_i| <= guard_radius``.
    """
    if not 1 <= optimizer.M <= data.n:
        raise ArgumentError("batch size must satisfy 1 <= M <= n")
    if optimizer.gamma < 0:
        raise ArgumentError("gamma must be >= 0")
    if isinstance(optimizer, MSGD) and not (0 <= optimizer.xi < 1):
        raise ArgumentError("momentum xi must lie in [0, 1)")
    if n_steps < 1 or record_every < 1:
        raise ArgumentError("n_steps and record_every must be >= 1")
    rng = np.random.default_rng(seed)
    w = np.zeros(data.d) if w0 is None else np.array(w0, dtype=float)
    z = np.zeros(data.d)
    xi = optimizer.xi if isinstance(optimizer, MSGD) else 0.0
    steps, frob, vals = [], [], []

    def record(k):
        steps.append(k)
        frob.append(float(np.linalg.norm(loss.hessian(data, w))))
        vals.append(loss.value(data, w))

    record(0)
    for k in range(1, n_steps + 1):
        idx = _draw_batch(rng, data.n, optimizer.M, replace)
        g = loss.per_sample_gradients(data, w, idx).mean(axis=0)
        z = xi * z - optimizer.gamma * g
        w = w + z
        if not np.all(np.isfinite(w)) or np.any(np.abs(w) > guard_radius):
            raise DivergenceError(f"iterate left the guard region at step {k}", step=k)
        if k % record_every == 0 or k == n_steps:
            record(k)
    config = dict(optimizer.describe())
    config.update(loss.describe())
    config["seed"] = int(seed)
    return SharpnessTrace(steps=np.array(steps), frobenius=np.array(frob),
                          loss=np.array(vals), config=config, final_weights=w)
