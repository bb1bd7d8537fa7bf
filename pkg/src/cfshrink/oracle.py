"""Exact bias of control-function shrinkage estimators.

Conditionally on x*, a rule beta_hat = w(x*)' y* has mean
w' (x* beta + (x* - (mu, 0)) rho sigma / tau).  For scalar shrinkage
mu_hat = c x*_z this gives the conditional bias

    (1 - x_z' mu / (c ||x_z||^2)) rho sigma / tau.

Integrating over x* for the harmonic factor with lambda = p s yields the
rescaled unconditional bias

    B(lambda) = P - (lambda / 2) (P + Q - 1),

with P = E[(ell - 2) / (ell - 2 + 2K)], Q = E[2 kappa / (ell - 2 + 2K)],
K ~ Poisson(kappa) and kappa = ||mu||^2 / (2 tau^2).  The Poisson
expectations are evaluated as truncated series with a certified tail.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .model import CanonicalData, CanonicalParams

__all__ = [
    "BiasReport",
    "KAPPA_MAX",
    "SERIES_TOL",
    "conditional_bias",
    "conditional_mean",
    "poisson_PQ",
    "pq_excess",
    "bias_B",
    "lambda_star",
    "poisson_inverse_moment",
    "poisson_inverse_moment_bound",
    "bias_report",
]

SERIES_TOL = 1e-13
KAPPA_MAX = 1e6


def conditional_bias(theta: CanonicalParams, x: CanonicalData, c: float) -> float:
    """E[beta_hat | X* = x] - beta for the rule with first stage c x_z."""
    if c == 0:
        raise DomainError("conditional bias requires c != 0")
    sq_z = float(x.x_z @ x.x_z)
    if not sq_z > 0:
        raise DomainError("conditional bias requires ||x_z|| > 0")
    return (1.0 - (x.x_z @ theta.mu) / (c * sq_z)) * theta.endogeneity


def conditional_mean(theta: CanonicalParams, x: CanonicalData, weight) -> float:
    """E[weight' Y* | X* = x] under ``theta``."""
    weight = np.asarray(weight, dtype=float)
    xs = x.x
    mean_x = np.concatenate([theta.mu, np.zeros(x.s)])
    return float(weight @ (xs * theta.beta + (xs - mean_x) * theta.endogeneity))


def _poisson_terms(kappa: float) -> tuple[np.ndarray, np.ndarray]:
    """Support 0..K_max and pmf of Poisson(kappa), with a certified tail bound.

    K_max = ceil(kappa + 12 sqrt(kappa)) + 60.  The neglected mass
    P(K > K_max) is bounded by the Chernoff bound
    exp(-kappa) (e kappa / k)^k at k = K_max + 1.
    """
    if not kappa >= 0 or not math.isfinite(kappa):
        raise DomainError(f"Poisson mean must be finite and >= 0, got {kappa}")
    if kappa > KAPPA_MAX:
        warnings.warn(
            f"kappa={kappa:g} exceeds {KAPPA_MAX:g}; a Normal approximation would be "
            "needed and is not provided",
            RuntimeWarning,
            stacklevel=3,
        )
        raise DomainError(f"kappa={kappa:g} is beyond the supported range")
    k_max = math.ceil(kappa + 12.0 * math.sqrt(kappa)) + 60
    k = np.arange(k_max + 1, dtype=float)
    if kappa == 0:
        pmf = np.zeros_like(k)
        pmf[0] = 1.0
        return k, pmf
    nxt = k_max + 1
    log_tail = -kappa + nxt * (1.0 + math.log(kappa) - math.log(nxt))
    if log_tail >= math.log(SERIES_TOL):
        raise DomainError(f"series tail bound exp({log_tail:.1f}) not below {SERIES_TOL}")
    pmf = np.exp(k * math.log(kappa) - kappa - gammaln(k + 1.0))
    return k, pmf


def _check_ell(ell: int) -> None:
    if int(ell) != ell or ell < 3:
        raise DomainError(f"Poisson representation needs integer ell >= 3, got {ell}")


def poisson_PQ(ell: int, kappa: float) -> tuple[float, float]:
    """P = E[(ell-2)/(ell-2+2K)] and Q = E[2 kappa/(ell-2+2K)], K ~ Poisson(kappa)."""
    _check_ell(ell)
    k, pmf = _poisson_terms(kappa)
    inv = pmf / (ell - 2 + 2.0 * k)
    return float((ell - 2) * inv.sum()), float(2.0 * kappa * inv.sum())


def pq_excess(ell: int, kappa: float) -> float:
    """P + Q - 1, evaluated as the positive series

        E[4K / ((ell - 2 + 2K)(ell - 4 + 2K))]

    so the Jensen gap keeps its sign at every kappa > 0.
    """
    _check_ell(ell)
    k, pmf = _poisson_terms(kappa)
    k, pmf = k[1:], pmf[1:]
    return float(np.sum(pmf * 4.0 * k / ((ell - 2 + 2.0 * k) * (ell - 4 + 2.0 * k))))


def _inverse_moment_gap(a: float, k: np.ndarray, pmf: np.ndarray) -> float:
    """1 - (a + nu - 1) E[1 / (a + K)] >= 0 for a >= 1, as a positive series."""
    if a == 1:
        return float(pmf[0])
    return float((a - 1.0) * np.sum(pmf / ((a - 1.0 + k) * (a + k))))


def bias_B(ell: int, kappa: float, lam: float) -> float:
    """Rescaled unconditional bias B(lambda) of the harmonic CF-shrinkage estimator.

    ``lam = 0`` gives the 2SLS bias P.  Multiply by rho sigma / tau for the
    bias in units of beta.
    """
    if not lam >= 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    P, _ = poisson_PQ(ell, kappa)
    return P - 0.5 * lam * pq_excess(ell, kappa)


def lambda_star(ell: int, kappa: float) -> float:
    """Bias-nulling lambda* = 2P / (P + Q - 1).

    Returns ``inf`` when kappa = 0, where B is identically one and no finite
    lambda removes the bias.  For ell >= 4 it is evaluated as
    (ell - 2) / (1 - G / E[1 / (a + K)]) with a = (ell - 2) / 2 and G the
    nonnegative gap of the Poisson inverse-moment bound, which keeps
    lambda* >= ell - 2 exact in floating point.
    """
    _check_ell(ell)
    if kappa == 0:
        return math.inf
    if ell < 4:
        P, _ = poisson_PQ(ell, kappa)
        return 2.0 * P / pq_excess(ell, kappa)
    a = 0.5 * (ell - 2)
    k, pmf = _poisson_terms(kappa)
    inv_mean = float(np.sum(pmf / (a + k)))
    return (ell - 2) / (1.0 - _inverse_moment_gap(a, k, pmf) / inv_mean)


def poisson_inverse_moment(a: float, nu: float) -> float:
    """E[1 / (a + K)] for K ~ Poisson(nu), a >= 1."""
    if not a >= 1:
        raise DomainError(f"need a >= 1, got {a}")
    if not nu > 0:
        raise DomainError(f"need nu > 0, got {nu}")
    k, pmf = _poisson_terms(nu)
    if a == 1:
        return -math.expm1(-nu) / nu
    gap = _inverse_moment_gap(a, k, pmf)
    if gap <= 0.5:
        # (1 - G) / (a + nu - 1) never rounds above the bound
        return (1.0 - gap) / (a + nu - 1.0)
    return float(np.sum(pmf / (a + k)))


def poisson_inverse_moment_bound(a: float, nu: float) -> float:
    """Upper bound 1 / (a + nu - 1) on E[1 / (a + K)], valid for a >= 1."""
    return 1.0 / (a + nu - 1.0)


@dataclass(frozen=True)
class BiasReport:
    ell: int
    kappa: float
    P: float
    Q: float
    lam: float
    B: float
    lambda_star: float
    bias_unscaled: float


def bias_report(ell: int, kappa: float, lam: float, endogeneity: float = 1.0) -> BiasReport:
    """All oracle quantities at (ell, kappa, lambda); ``endogeneity`` is rho sigma / tau."""
    P, Q = poisson_PQ(ell, kappa)
    B = bias_B(ell, kappa, lam)
    return BiasReport(
        ell=ell,
        kappa=kappa,
        P=P,
        Q=Q,
        lam=lam,
        B=B,
        lambda_star=lambda_star(ell, kappa),
        bias_unscaled=B * endogeneity,
    )
