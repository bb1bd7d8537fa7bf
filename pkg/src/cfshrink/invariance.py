"""The group R x O(ell) x O(s) acting on samples, parameters and estimates.

A group element g = (g_beta, g_z, g_r) rotates the instrument and residual
blocks and shears y* by g_beta x*; the matching parameter action shifts
beta and rotates mu, and estimates are shifted by g_beta.  The checkers here
measure how far a model density or a decision rule is from these
invariances.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericalError
from .estimators import ShrinkageSpec, ols_beta, shrink_iv_beta, tsls_beta
from .model import CanonicalData, CanonicalParams, log_density, make_rng

__all__ = [
    "GroupElement",
    "RuleCheck",
    "InvarianceSummary",
    "act_sample",
    "act_param",
    "act_action",
    "compose",
    "haar_orthogonal",
    "random_group",
    "check_rule_invariance",
    "check_model_invariance",
    "squared_error_loss",
    "default_rules",
    "run_invariance_suite",
]


@dataclass(frozen=True)
class GroupElement:
    g_beta: float
    g_z: np.ndarray
    g_r: np.ndarray

    def __post_init__(self):
        for name in ("g_z", "g_r"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ConfigurationError(f"{name} must be a square matrix")
            if not np.allclose(m.T @ m, np.eye(m.shape[0]), rtol=0, atol=1e-10):
                raise ConfigurationError(f"{name} is not orthogonal")
            object.__setattr__(self, name, m)

    @classmethod
    def identity(cls, ell: int, s: int) -> "GroupElement":
        return cls(0.0, np.eye(ell), np.eye(s))


def compose(g2: GroupElement, g1: GroupElement) -> GroupElement:
    """The element acting as ``g1`` followed by ``g2``."""
    return GroupElement(g1.g_beta + g2.g_beta, g2.g_z @ g1.g_z, g2.g_r @ g1.g_r)


def _check_dims(g: GroupElement, d: CanonicalData) -> None:
    if g.g_z.shape[0] != d.ell or g.g_r.shape[0] != d.s:
        raise ConfigurationError("group element and data dimensions disagree")


def act_sample(g: GroupElement, d: CanonicalData) -> CanonicalData:
    """(x, y) -> (Q x, Q (y + g_beta x)) with Q = diag(g_z, g_r)."""
    _check_dims(g, d)
    return CanonicalData(
        x_z=g.g_z @ d.x_z,
        x_r=g.g_r @ d.x_r,
        y_z=g.g_z @ (d.y_z + g.g_beta * d.x_z),
        y_r=g.g_r @ (d.y_r + g.g_beta * d.x_r),
    )


def _act_sample_shear_only_z(g: GroupElement, d: CanonicalData) -> CanonicalData:
    # deliberately wrong action (shear skipped on the residual block), used to
    # confirm the invariance suite can fail
    _check_dims(g, d)
    return CanonicalData(
        x_z=g.g_z @ d.x_z,
        x_r=g.g_r @ d.x_r,
        y_z=g.g_z @ (d.y_z + g.g_beta * d.x_z),
        y_r=g.g_r @ d.y_r,
    )


def act_param(g: GroupElement, theta: CanonicalParams) -> CanonicalParams:
    if g.g_z.shape[0] != theta.ell:
        raise ConfigurationError("group element and mu dimensions disagree")
    return replace(theta, beta=theta.beta + g.g_beta, mu=g.g_z @ theta.mu)


def act_action(g: GroupElement, a: float) -> float:
    return a + g.g_beta


def squared_error_loss(theta: CanonicalParams, a: float) -> float:
    return (a - theta.beta) ** 2


def haar_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix, with the
    triangular factor's diagonal made positive."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def random_group(rng: np.random.Generator, ell: int, s: int, beta_scale: float = 1.0) -> GroupElement:
    if ell < 1 or s < 1:
        raise ConfigurationError("ell and s must be >= 1")
    g_z = haar_orthogonal(rng, ell)
    g_r = haar_orthogonal(rng, s)
    return GroupElement(float(beta_scale * rng.standard_normal()), g_z, g_r)


@dataclass(frozen=True)
class RuleCheck:
    """Outcome of one invariance check; ``status`` is pass, fail or inconclusive."""

    status: str
    residual: float

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def check_rule_invariance(
    rule: Callable[[CanonicalData], float],
    g: GroupElement,
    d: CanonicalData,
    tol: float = 1e-8,
    act: Callable[[GroupElement, CanonicalData], CanonicalData] = act_sample,
) -> RuleCheck:
    """Residual |rule(g d) - (rule(d) + g_beta)|, divided by max(1, |rule(d) + g_beta|).

    The scaling keeps the tolerance meaningful for near-divergent estimates;
    for estimates of order one it is the plain absolute residual.  A rule that
    is undefined at either point gives an inconclusive verdict.
    """
    try:
        before = rule(d)
        after = rule(act(g, d))
    except NumericalError:
        return RuleCheck("inconclusive", float("nan"))
    target = act_action(g, before)
    residual = abs(after - target) / max(1.0, abs(target))
    return RuleCheck("pass" if residual <= tol else "fail", float(residual))


def check_model_invariance(
    g: GroupElement,
    theta: CanonicalParams,
    d: CanonicalData,
    tol: float = 1e-8,
    act: Callable[[GroupElement, CanonicalData], CanonicalData] = act_sample,
) -> RuleCheck:
    """Pointwise density identity p_{g theta}(g d) = p_theta(d) (unit Jacobian)."""
    residual = abs(log_density(act_param(g, theta), act(g, d)) - log_density(theta, d))
    return RuleCheck("pass" if residual <= tol else "fail", float(residual))


def default_rules(p: float = 0.5) -> dict[str, Callable[[CanonicalData], float]]:
    """The estimators covered by the invariance suite."""
    rules = {"ols": ols_beta, "tsls": tsls_beta}
    for variant in ("harmonic", "james_stein", "james_stein_positive"):
        spec = ShrinkageSpec(variant, p)
        rules[variant] = lambda d, spec=spec: shrink_iv_beta(d, spec)
    return rules


@dataclass
class InvarianceSummary:
    trials: int
    max_residual: dict[str, float]
    n_inconclusive: dict[str, int]
    tol: float

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.max_residual.values())


def _random_instance(rng, ell, s):
    theta = CanonicalParams(
        beta=float(rng.normal()),
        mu=rng.normal(size=ell) * rng.uniform(0.0, 3.0),
        rho=float(rng.uniform(-0.95, 0.95)),
        sigma=float(rng.uniform(0.3, 3.0)),
        tau=float(rng.uniform(0.3, 3.0)),
    )
    n = ell + s
    x = np.concatenate([theta.mu, np.zeros(s)]) + theta.tau * rng.standard_normal(n)
    y = rng.standard_normal(n) * 2.0 + x * theta.beta
    return theta, CanonicalData.from_stacked(x, y, ell)


def run_invariance_suite(
    ell: int,
    s: int,
    trials: int,
    seed: int,
    *,
    tol: float = 1e-8,
    rules: dict[str, Callable[[CanonicalData], float]] | None = None,
    act: Callable[[GroupElement, CanonicalData], CanonicalData] = act_sample,
) -> InvarianceSummary:
    """Check model, loss and rule invariance on ``trials`` random (g, theta, d)."""
    if trials < 1:
        raise ConfigurationError("no trials")
    rules = default_rules() if rules is None else rules
    rng = make_rng(seed)
    names = ["log_density", "loss", *rules]
    max_res = dict.fromkeys(names, 0.0)
    n_inc = dict.fromkeys(names, 0)
    for _ in range(trials):
        theta, d = _random_instance(rng, ell, s)
        g = random_group(rng, ell, s)
        checks = {"log_density": check_model_invariance(g, theta, d, tol, act)}
        a = float(rng.normal())
        loss_res = abs(
            squared_error_loss(act_param(g, theta), act_action(g, a)) - squared_error_loss(theta, a)
        )
        checks["loss"] = RuleCheck("pass" if loss_res <= tol else "fail", loss_res)
        for name, rule in rules.items():
            checks[name] = check_rule_invariance(rule, g, d, tol, act)
        for name, chk in checks.items():
            if chk.status == "inconclusive":
                n_inc[name] += 1
            else:
                max_res[name] = max(max_res[name], chk.residual)
    return InvarianceSummary(trials=trials, max_residual=max_res, n_inconclusive=n_inc, tol=tol)
