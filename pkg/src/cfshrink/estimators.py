"""OLS, 2SLS and control-function shrinkage estimators in canonical form.

The control-function estimator regresses y* on x* while controlling for the
first-stage residual x* - (mu_hat, 0).  With scalar shrinkage
mu_hat = c x*_z the control column is b = ((1 - c) x*_z, x*_r), so the
estimate is the coefficient on x* after partialling out b:

    beta_hat = (a x)' y / ||a x||^2,    a = I - b b' / (b' b).

Every estimator here is linear in y* given x*, which is what the analytic
bias oracles rely on.  Batch versions take arrays whose last axis indexes the
canonical coordinates and return NaN where the estimator is undefined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateFirstStageError,
    DivergenceError,
    EstimatorUndefinedError,
)
from .model import CanonicalData

__all__ = [
    "VARIANTS",
    "ShrinkageSpec",
    "default_p",
    "shrinkage_factor",
    "shrinkage_factor_batch",
    "cf_beta",
    "shrink_iv_beta",
    "shrink_iv_weight",
    "tsls_beta",
    "ols_beta",
    "tsls_batch",
    "ols_batch",
    "shrink_iv_batch",
]

VARIANTS = ("none", "james_stein", "james_stein_positive", "harmonic")

RANK_RTOL = 1e-10


def default_p(ell: int, s: int) -> float:
    """Bias-safe default tuning constant p = (ell - 2) / s, i.e. lambda = ell - 2."""
    return max(ell - 2, 0) / s


@dataclass(frozen=True)
class ShrinkageSpec:
    """First-stage shrinkage factor ``variant`` with tuning constant ``p``.

    ``p=None`` means "use :func:`default_p` for the data at hand".
    """

    variant: str = "harmonic"
    p: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown shrinkage variant {self.variant!r}")
        if self.p is not None and not (np.isfinite(self.p) and self.p >= 0):
            raise ConfigurationError(f"p must be finite and >= 0, got {self.p}")

    @classmethod
    def from_lambda(cls, variant: str, lam: float, s: int) -> "ShrinkageSpec":
        """Spec with effective shrinkage strength lambda = p * s."""
        return cls(variant, lam / s)

    def resolve_p(self, ell: int, s: int) -> float:
        return default_p(ell, s) if self.p is None else float(self.p)

    @property
    def name(self) -> str:
        return "tsls" if self.variant == "none" else self.variant


def shrinkage_factor_batch(variant: str, p: float, sq_z, sq_r) -> np.ndarray:
    """Vectorized shrinkage factor; no checks on ``sq_z``."""
    sq_z = np.asarray(sq_z, dtype=float)
    sq_r = np.asarray(sq_r, dtype=float)
    if variant == "none" or p == 0:
        return np.ones(np.broadcast(sq_z, sq_r).shape)
    if variant == "harmonic":
        return sq_z / (sq_z + p * sq_r)
    c = 1.0 - p * sq_r / sq_z
    if variant == "james_stein_positive":
        c = np.maximum(c, 0.0)
    return c


def shrinkage_factor(spec: ShrinkageSpec, sq_z: float, sq_r: float, *, ell=None, s=None) -> float:
    """Shrinkage factor c from the squared norms ||x_z||^2 and ||x_r||^2.

    ``ell`` and ``s`` are only needed when ``spec.p`` is left at its default.
    """
    if not sq_z > 0:
        raise DegenerateFirstStageError("||x_z|| = 0: no instrument signal in sample")
    if spec.p is None and (ell is None or s is None):
        raise ConfigurationError("spec has no p; pass ell and s to use the default")
    p = spec.resolve_p(ell, s) if spec.p is None else spec.p
    return float(shrinkage_factor_batch(spec.variant, p, sq_z, sq_r))


def _well_conditioned(ax_sq, xx, bb) -> np.ndarray:
    """Rank-2 test for the design (x, b): sigma_min > RANK_RTOL * sigma_max.

    Uses det(G) = ||b||^2 ||a x||^2 for the 2x2 Gram matrix G of (x, b).
    """
    det = bb * ax_sq
    tr = xx + bb
    lam_max = 0.5 * (tr + np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0)))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.sqrt(det) / lam_max
    return (lam_max > 0) & (ratio > RANK_RTOL)


def _cf_direction(Xz, Xr, c, sq_z, sq_r):
    """Direction of a(x) x and the rank-2 flag of the design (x, b).

    With u = 1 - c, partialling b = (u x_z, x_r) out of x gives

        a(x) x = c / (u^2 |x_z|^2 + |x_r|^2) * (|x_r|^2 x_z, -u |x_z|^2 x_r),

    which avoids forming the near-cancelling difference x - b when c is small.
    The returned direction v satisfies v' x = c |x_z|^2 |x_r|^2.
    """
    u = 1.0 - c
    V = np.concatenate([sq_r[..., None] * Xz, -(u * sq_z)[..., None] * Xr], axis=-1)
    bb = u * u * sq_z + sq_r
    with np.errstate(invalid="ignore", divide="ignore"):
        ax_sq = c * c * sq_z * sq_r / bb
    ok = (sq_z > 0) & (sq_r > 0) & (c != 0) & _well_conditioned(ax_sq, sq_z + sq_r, bb)
    return V, c * sq_z * sq_r, ok


def shrink_iv_batch(Xz, Xr, Yz, Yr, spec: ShrinkageSpec) -> np.ndarray:
    """Control-function shrinkage estimates for a batch; NaN where undefined."""
    Xz, Xr, Yz, Yr = (np.asarray(a, dtype=float) for a in (Xz, Xr, Yz, Yr))
    ell, s = Xz.shape[-1], Xr.shape[-1]
    sq_z = np.einsum("...i,...i->...", Xz, Xz)
    sq_r = np.einsum("...i,...i->...", Xr, Xr)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = shrinkage_factor_batch(spec.variant, spec.resolve_p(ell, s), sq_z, sq_r)
        V, vx, ok = _cf_direction(Xz, Xr, c, sq_z, sq_r)
        est = np.einsum("...i,...i->...", V, np.concatenate([Yz, Yr], axis=-1)) / vx
    return np.where(ok, est, np.nan)


def tsls_batch(Xz, Yz) -> np.ndarray:
    Xz, Yz = np.asarray(Xz, dtype=float), np.asarray(Yz, dtype=float)
    den = np.einsum("...i,...i->...", Xz, Xz)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, np.einsum("...i,...i->...", Yz, Xz) / den, np.nan)


def ols_batch(X, Y) -> np.ndarray:
    return tsls_batch(X, Y)


def tsls_beta(d: CanonicalData) -> float:
    """2SLS in canonical form: y_z' x_z / x_z' x_z."""
    den = d.x_z @ d.x_z
    if den == 0:
        raise DegenerateFirstStageError("||x_z|| = 0: 2SLS undefined")
    return float(d.y_z @ d.x_z / den)


def ols_beta(d: CanonicalData) -> float:
    """OLS in canonical form: y*' x* / x*' x*."""
    x, y = d.x, d.y
    den = x @ x
    if den == 0:
        raise DegenerateFirstStageError("x* = 0: OLS undefined")
    return float(y @ x / den)


def cf_beta(d: CanonicalData, mu_hat) -> float:
    """Coefficient on x* in the regression of y* on (x*, x* - (mu_hat, 0)).

    Solved by QR of the two-column design.

    Raises
    ------
    EstimatorUndefinedError
        If the design is numerically rank deficient (e.g. ``mu_hat = 0``).
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    if mu_hat.shape != d.x_z.shape:
        raise ConfigurationError("mu_hat must have length ell")
    x = d.x
    control = x - np.concatenate([mu_hat, np.zeros(d.s)])
    design = np.column_stack([x, control])
    q, r = np.linalg.qr(design)
    sv = np.linalg.svd(r, compute_uv=False)
    if not sv[0] > 0 or sv[1] <= RANK_RTOL * sv[0]:
        raise EstimatorUndefinedError("control-function design has rank < 2")
    coef = np.linalg.solve(r, q.T @ d.y)
    return float(coef[0])


def _checked_factor(d: CanonicalData, spec: ShrinkageSpec) -> float:
    c = shrinkage_factor(spec, d.x_z @ d.x_z, d.x_r @ d.x_r, ell=d.ell, s=d.s)
    if c == 0:
        raise DivergenceError("shrinkage factor c = 0: the estimator diverges")
    return c


def shrink_iv_weight(d: CanonicalData, spec: ShrinkageSpec) -> np.ndarray:
    """Weight vector w(x*) = a(x) x / (x' a(x) x), so that shrink_iv_beta = w' y*.

    Only the x-part of ``d`` is used.
    """
    c = _checked_factor(d, spec)
    sq_z, sq_r = np.float64(d.x_z @ d.x_z), np.float64(d.x_r @ d.x_r)
    v, vx, ok = _cf_direction(d.x_z, d.x_r, c, sq_z, sq_r)
    if not ok:
        raise EstimatorUndefinedError("control-function design has rank < 2")
    return v / vx


def shrink_iv_beta(d: CanonicalData, spec: ShrinkageSpec) -> float:
    """Control-function estimate with first stage mu_hat = c(x*) x*_z.

    Computed in closed form as x' a(x) y / x' a(x) x; equals
    ``cf_beta(d, c * d.x_z)``.

    Raises
    ------
    DegenerateFirstStageError
        If ``x_z = 0``.
    DivergenceError
        If the shrinkage factor is exactly zero.
    """
    return float(shrink_iv_weight(d, spec) @ d.y)
