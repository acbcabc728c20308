"""Constant-velocity Gaussian state recursion and association likelihoods.

Each track carries exactly one Gaussian component over the state
(x, y, vx, vy); the mixture across tracks is what competes for
observations. Weights are renormalised per observation by ``reweight``
when a component is updated, which is also what the position/motion
affinity is built from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_F = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
_Q = 0.5 * np.diag([5.0**2, 10.0**2, 5.0**2, 10.0**2])
_P0 = np.diag([5.0**2, 10.0**2, 5.0**2, 10.0**2])
_R = np.diag([5.0**2, 10.0**2])
_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])

MIN_WEIGHT = 1e-3
_SYM_TOL = 1e-9


class DegenerateUpdateError(ValueError):
    """Every weighted likelihood is zero; the observation cannot be claimed."""


def _as_matrix(value, shape, name) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64).reshape(shape)
    return arr


def _require_pd(mat: np.ndarray, name: str):
    if not np.allclose(mat, mat.T, atol=_SYM_TOL):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None


@dataclass(frozen=True)
class ModelParams:
    """Constant parameter matrices of the motion/observation model.

    Defaults are the tracker's stock values: unit-step constant-velocity
    transition, diagonal noise with (5 px, 10 px) position scales, and an
    observation matrix selecting (x, y).
    """

    f: np.ndarray = field(default_factory=lambda: _F.copy())
    q: np.ndarray = field(default_factory=lambda: _Q.copy())
    p0: np.ndarray = field(default_factory=lambda: _P0.copy())
    r: np.ndarray = field(default_factory=lambda: _R.copy())
    h: np.ndarray = field(default_factory=lambda: _H.copy())

    def __post_init__(self):
        object.__setattr__(self, "f", _as_matrix(self.f, (4, 4), "f"))
        object.__setattr__(self, "q", _as_matrix(self.q, (4, 4), "q"))
        object.__setattr__(self, "p0", _as_matrix(self.p0, (4, 4), "p0"))
        object.__setattr__(self, "r", _as_matrix(self.r, (2, 2), "r"))
        object.__setattr__(self, "h", _as_matrix(self.h, (2, 4), "h"))
        _require_pd(self.q, "q")
        _require_pd(self.p0, "p0")
        _require_pd(self.r, "r")

    @classmethod
    def from_flat(cls, **rows) -> "ModelParams":
        """Build from row-major number lists (config-file override path)."""
        defaults = cls()
        kwargs = {}
        for key, shape in (("f", (4, 4)), ("q", (4, 4)), ("p0", (4, 4)), ("r", (2, 2)), ("h", (2, 4))):
            if key in rows and rows[key] is not None:
                kwargs[key] = _as_matrix(rows[key], shape, key)
            else:
                kwargs[key] = getattr(defaults, key)
        return cls(**kwargs)


@dataclass
class GaussianComponent:
    """One weighted Gaussian over (x, y, vx, vy)."""

    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(4)
        self.cov = np.asarray(self.cov, dtype=np.float64).reshape(4, 4)
        if self.weight <= 0:
            raise ValueError(f"component weight must be positive, got {self.weight}")
        if not np.allclose(self.cov, self.cov.T, atol=_SYM_TOL):
            raise ValueError("covariance must be symmetric")
        if np.any(np.diag(self.cov) <= 0):
            raise ValueError("covariance diagonal must be positive")

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]


def init_component(z, conf_norm: float) -> GaussianComponent:
    """Start a component at an observation: zero velocity, stock covariance.

    The weight is the detector confidence, clamped to [1e-3, 1].
    """
    if conf_norm <= 0:
        raise ValueError(f"confidence must be positive, got {conf_norm}")
    z = np.asarray(z, dtype=np.float64).reshape(2)
    weight = min(max(conf_norm, MIN_WEIGHT), 1.0)
    return GaussianComponent(weight=weight, mean=np.array([z[0], z[1], 0.0, 0.0]), cov=_P0.copy())


def predict(c: GaussianComponent, params: ModelParams) -> GaussianComponent:
    """One constant-velocity step: mean through f, covariance grows by q."""
    mean = params.f @ c.mean
    cov = params.q + params.f @ c.cov @ params.f.T
    cov = 0.5 * (cov + cov.T)
    return GaussianComponent(weight=c.weight, mean=mean, cov=cov)


def _innovation(c: GaussianComponent, params: ModelParams):
    z_pred = params.h @ c.mean
    s = params.r + params.h @ c.cov @ params.h.T
    return z_pred, s


def likelihood(c_pred: GaussianComponent, z, params: ModelParams) -> float:
    """Bivariate normal density of the observation under the predicted state."""
    z = np.asarray(z, dtype=np.float64).reshape(2)
    z_pred, s = _innovation(c_pred, params)
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    if det <= 0:
        raise np.linalg.LinAlgError("innovation covariance is not positive definite")
    d = z - z_pred
    # closed-form 2x2 inverse in the quadratic form
    maha = (s[1, 1] * d[0] * d[0] - (s[0, 1] + s[1, 0]) * d[0] * d[1] + s[0, 0] * d[1] * d[1]) / det
    if maha > 1400.0:  # exp underflows anyway; keep the scalar path warning-free
        return 0.0
    return math.exp(-0.5 * maha) / (2.0 * math.pi * math.sqrt(det))


def update(c_pred: GaussianComponent, z, params: ModelParams) -> GaussianComponent:
    """Posterior mean/covariance for a claimed observation (weight untouched)."""
    z = np.asarray(z, dtype=np.float64).reshape(2)
    z_pred, s = _innovation(c_pred, params)
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    if det <= 0:
        raise np.linalg.LinAlgError("innovation covariance is not positive definite")
    s_inv = np.array([[s[1, 1], -s[0, 1]], [-s[1, 0], s[0, 0]]]) / det
    gain = c_pred.cov @ params.h.T @ s_inv
    mean = c_pred.mean + gain @ (z - z_pred)
    cov = (np.eye(4) - gain @ params.h) @ c_pred.cov
    cov = 0.5 * (cov + cov.T)
    return GaussianComponent(weight=c_pred.weight, mean=mean, cov=cov)


def reweight(components, q_values) -> list[float]:
    """Normalise the weighted likelihoods of components competing for one
    observation; the result sums to one.

    Raises DegenerateUpdateError when every product is zero, in which case
    the caller treats the observation as unmatched.
    """
    if len(components) != len(q_values):
        raise ValueError("components and q_values must have equal length")
    products = [c.weight * q for c, q in zip(components, q_values)]
    total = sum(products)
    if total <= 0.0:
        raise DegenerateUpdateError("all weighted likelihoods are zero")
    return [p / total for p in products]
