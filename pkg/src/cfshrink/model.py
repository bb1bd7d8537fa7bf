"""Structural and canonical two-stage linear models with Normal noise.

The structural model is

    Y_i = alpha + beta X_i + W_i' gamma + U_i
    X_i = alpha_x + Z_i' pi + W_i' gamma_x + V_i

with (U_i, V_i) bivariate Normal, correlation ``rho`` and scales ``sigma``,
``tau``.  Rotating the sample by an orthonormal basis adapted to
(1, w, z) gives the canonical form on which all estimators operate:

    X* ~ N((mu, 0_s), tau^2 I)
    Y* | X* = x ~ N(x beta + (x - (mu, 0_s)) rho sigma / tau, (1 - rho^2) sigma^2 I)

Instruments and controls are treated as fixed; everything is conditional on
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "RNG_NAME",
    "StructuralParams",
    "ReducedFormParams",
    "CanonicalParams",
    "CanonicalData",
    "Dataset",
    "make_rng",
    "reduced_form",
    "sample_raw",
    "sample_canonical",
    "sample_canonical_batch",
    "log_density",
]

#: Bit generator used for every stream; recorded in simulation output.
RNG_NAME = "numpy.Philox"

_LOG_2PI = np.log(2.0 * np.pi)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a counter-based generator for sub-stream ``stream`` of ``seed``.

    Streams with distinct keys are statistically independent, and the same
    ``(seed, *stream)`` always reproduces the same draws.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in stream))
    return np.random.Generator(np.random.Philox(ss))


def _vector(a, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(a, dtype=float))
    if v.ndim != 1:
        raise ConfigurationError(f"{name} must be a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ConfigurationError(f"{name} must be finite")
    return v


def _check_noise(rho: float, sigma: float, tau: float) -> None:
    if not -1.0 < rho < 1.0:
        raise ConfigurationError(f"rho must lie in (-1, 1), got {rho}")
    if not sigma > 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")


@dataclass(frozen=True)
class StructuralParams:
    """Parameters of the structural two-equation model."""

    beta: float
    pi: np.ndarray
    rho: float
    sigma: float = 1.0
    tau: float = 1.0
    alpha: float = 0.0
    alpha_x: float = 0.0
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gamma_x: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "pi", _vector(self.pi, "pi"))
        object.__setattr__(self, "gamma", _vector(self.gamma, "gamma"))
        object.__setattr__(self, "gamma_x", _vector(self.gamma_x, "gamma_x"))
        if self.pi.size < 1:
            raise ConfigurationError("need at least one instrument (ell >= 1)")
        if self.gamma.size != self.gamma_x.size:
            raise ConfigurationError("gamma and gamma_x must have the same length")
        _check_noise(self.rho, self.sigma, self.tau)

    @property
    def ell(self) -> int:
        return self.pi.size

    @property
    def k(self) -> int:
        return self.gamma.size


@dataclass(frozen=True)
class ReducedFormParams:
    pi_y: np.ndarray
    gamma_y: np.ndarray
    Sigma: np.ndarray


@dataclass(frozen=True)
class CanonicalParams:
    """theta = (beta, mu, rho, sigma, tau) of the canonical model."""

    beta: float
    mu: np.ndarray
    rho: float
    sigma: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu", _vector(self.mu, "mu"))
        if self.mu.size < 1:
            raise ConfigurationError("mu must have length ell >= 1")
        _check_noise(self.rho, self.sigma, self.tau)

    @property
    def ell(self) -> int:
        return self.mu.size

    @property
    def kappa(self) -> float:
        """Noncentrality ||mu||^2 / (2 tau^2)."""
        return float(self.mu @ self.mu) / (2.0 * self.tau**2)

    @property
    def endogeneity(self) -> float:
        """The bias scale rho sigma / tau."""
        return self.rho * self.sigma / self.tau


@dataclass(frozen=True)
class CanonicalData:
    """A canonical observation (x*, y*) split into instrument and residual blocks."""

    x_z: np.ndarray
    x_r: np.ndarray
    y_z: np.ndarray
    y_r: np.ndarray

    def __post_init__(self):
        for name in ("x_z", "x_r", "y_z", "y_r"):
            object.__setattr__(self, name, _vector(getattr(self, name), name))
        if self.x_z.size < 1 or self.x_r.size < 1:
            raise ConfigurationError("canonical data needs ell >= 1 and s >= 1")
        if self.x_z.shape != self.y_z.shape or self.x_r.shape != self.y_r.shape:
            raise ConfigurationError("x and y blocks must have matching lengths")

    @classmethod
    def from_stacked(cls, x, y, ell: int) -> "CanonicalData":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return cls(x[:ell], x[ell:], y[:ell], y[ell:])

    @property
    def ell(self) -> int:
        return self.x_z.size

    @property
    def s(self) -> int:
        return self.x_r.size

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.x_z, self.x_r])

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.y_z, self.y_r])


@dataclass(frozen=True)
class Dataset:
    """Raw sample: outcome y, regressor x, instruments z (n, ell), controls w (n, k)."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    w: np.ndarray

    @property
    def n(self) -> int:
        return self.y.size


def reduced_form(p: StructuralParams) -> ReducedFormParams:
    """Map structural parameters to reduced-form coefficients and covariance."""
    b, r, sg, t = p.beta, p.rho, p.sigma, p.tau
    cov = r * sg * t + b * t**2
    Sigma = np.array([[sg**2 + 2 * r * b * sg * t + b**2 * t**2, cov], [cov, t**2]])
    return ReducedFormParams(pi_y=p.pi * b, gamma_y=p.gamma + p.gamma_x * b, Sigma=Sigma)


def _as_matrix(a, n_rows: int | None, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ConfigurationError(f"{name} must be a matrix")
    if n_rows is not None and m.shape[0] != n_rows:
        raise ConfigurationError(f"{name} has {m.shape[0]} rows, expected {n_rows}")
    return m


def _design(z, w) -> tuple[np.ndarray, np.ndarray]:
    z = _as_matrix(z, None, "z")
    n = z.shape[0]
    w = np.zeros((n, 0)) if w is None else _as_matrix(w, n, "w")
    return z, w


def sample_raw(p: StructuralParams, z, w, rng: np.random.Generator) -> Dataset:
    """Draw (y, x) from the structural model at fixed instruments and controls."""
    z, w = _design(z, w)
    n = z.shape[0]
    if z.shape[1] != p.ell or w.shape[1] != p.k:
        raise ConfigurationError("z/w column counts do not match pi/gamma lengths")
    m = 1 + p.k + p.ell
    if m > n - 1:
        raise ConfigurationError(f"need n >= {m + 1} observations, got {n}")
    design = np.column_stack([np.ones(n), w, z])
    if np.linalg.matrix_rank(design) < m:
        raise ConfigurationError("(1, w, z) does not have full column rank")
    e = rng.standard_normal((n, 2))
    u = p.sigma * e[:, 0]
    v = p.tau * (p.rho * e[:, 0] + np.sqrt(1.0 - p.rho**2) * e[:, 1])
    x = p.alpha_x + z @ p.pi + w @ p.gamma_x + v
    y = p.alpha + p.beta * x + w @ p.gamma + u
    return Dataset(y=y, x=x, z=z, w=w)


def sample_canonical_batch(
    theta: CanonicalParams, s: int, size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` canonical samples; returns stacked (X, Y), each (size, ell + s)."""
    if s < 1:
        raise ConfigurationError("s must be >= 1")
    n_star = theta.ell + s
    mean = np.concatenate([theta.mu, np.zeros(s)])
    e1 = rng.standard_normal((size, n_star))
    e2 = rng.standard_normal((size, n_star))
    X = mean + theta.tau * e1
    # X - mean = tau e1, so the control-function term is rho sigma e1
    Y = X * theta.beta + theta.rho * theta.sigma * e1
    Y += np.sqrt(1.0 - theta.rho**2) * theta.sigma * e2
    return X, Y


def sample_canonical(
    theta: CanonicalParams, ell: int, s: int, rng: np.random.Generator
) -> CanonicalData:
    if ell != theta.ell:
        raise ConfigurationError(f"ell={ell} does not match len(mu)={theta.ell}")
    X, Y = sample_canonical_batch(theta, s, 1, rng)
    return CanonicalData.from_stacked(X[0], Y[0], ell)


def log_density(theta: CanonicalParams, d: CanonicalData) -> float:
    """Exact log-density of (x*, y*) under the canonical model at ``theta``."""
    if d.ell != theta.ell:
        raise ConfigurationError("data and mu dimensions disagree")
    x, y = d.x, d.y
    n_star = x.size
    mean_x = np.concatenate([theta.mu, np.zeros(d.s)])
    rx = (x - mean_x) / theta.tau
    cond_sd = np.sqrt(1.0 - theta.rho**2) * theta.sigma
    ry = (y - x * theta.beta - (x - mean_x) * theta.endogeneity) / cond_sd
    return float(
        -n_star * _LOG_2PI
        - n_star * (np.log(theta.tau) + np.log(cond_sd))
        - 0.5 * (rx @ rx + ry @ ry)
    )
