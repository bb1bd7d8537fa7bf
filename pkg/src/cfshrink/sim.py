"""Seeded Monte Carlo estimation of unconditional bias.

Replications are grouped into fixed-size blocks; block ``b`` draws from the
counter-based sub-stream ``(seed, b)``, so results do not depend on how
blocks are spread across workers.  Per-block moment accumulators are merged
in block order.

Two modes:

``full``
    draw (X*, Y*) and evaluate every estimator.
``rao_blackwell``
    draw X* only and average the exact conditional bias given X*.  For 2SLS
    and the harmonic rule (X*_r integrated out analytically as well) only
    M = X*_z enters:  1 - M'mu/|M|^2 - lambda tau^2 M'mu/|M|^4.

All estimators in a replication share the same draws, so differences in
absolute bias are estimated from paired samples.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .estimators import ShrinkageSpec, ols_batch, shrink_iv_batch, shrinkage_factor_batch, tsls_batch
from .model import RNG_NAME, CanonicalParams, make_rng, sample_canonical_batch
from .oracle import KAPPA_MAX, bias_B, poisson_PQ

__all__ = [
    "BLOCK_SIZE",
    "MODES",
    "SimConfig",
    "Moments",
    "PairedMoments",
    "EstimatorRow",
    "SimResult",
    "SimulationError",
    "run_bias_mc",
    "compare_estimators",
]

BLOCK_SIZE = 4096
MODES = ("full", "rao_blackwell")
_MODE_ALIASES = {"rb": "rao_blackwell"}


class SimulationError(NumericalError):
    """Every replication of some estimator was undefined."""


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo experiment in canonical form.

    Give either ``kappa`` (mu is then sqrt(2 kappa) tau e_1) or an explicit
    ``mu`` of length ``ell``.
    """

    ell: int
    s: int
    rho: float
    kappa: float | None = None
    mu: np.ndarray | None = None
    beta: float = 0.0
    sigma: float = 1.0
    tau: float = 1.0
    specs: tuple[ShrinkageSpec, ...] = (ShrinkageSpec("harmonic"),)
    reps: int = 10_000
    seed: int = 0
    mode: str = "full"
    workers: int | None = None

    def __post_init__(self):
        mode = _MODE_ALIASES.get(self.mode, self.mode)
        if mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "specs", tuple(self.specs))
        if int(self.reps) != self.reps or self.reps < 1:
            raise ConfigurationError("reps must be a positive integer")
        if self.ell < 1 or self.s < 1:
            raise ConfigurationError("ell and s must be >= 1")
        if (self.kappa is None) == (self.mu is None):
            raise ConfigurationError("give exactly one of kappa and mu")
        if self.kappa is not None and not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ConfigurationError(f"kappa must be finite and >= 0, got {self.kappa}")
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        names = [sp.name for sp in self.specs]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate shrinkage variants in specs")
        self.theta  # validates noise parameters and mu length

    @property
    def theta(self) -> CanonicalParams:
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=float)
            if mu.shape != (self.ell,):
                raise ConfigurationError("mu must have length ell")
        else:
            mu = np.zeros(self.ell)
            mu[0] = math.sqrt(2.0 * self.kappa) * self.tau
        return CanonicalParams(self.beta, mu, self.rho, self.sigma, self.tau)

    @property
    def kappa_value(self) -> float:
        return self.theta.kappa


@dataclass
class Moments:
    """Running count, mean and centred sum of squares (mergeable)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(values.size, mean, float(np.sum((values - mean) ** 2)))

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return Moments(self.n, self.mean, self.m2)
        if self.n == 0:
            return Moments(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2)

    @property
    def var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else math.nan

    @property
    def se(self) -> float:
        return math.sqrt(self.var / self.n) if self.n > 1 else math.nan


@dataclass
class PairedMoments:
    """Mergeable first and second moments of a pair (a, b), incl. co-moment."""

    a: Moments = field(default_factory=Moments)
    b: Moments = field(default_factory=Moments)
    cab: float = 0.0

    @classmethod
    def of(cls, a: np.ndarray, b: np.ndarray) -> "PairedMoments":
        ma, mb = Moments.of(a), Moments.of(b)
        cab = float(np.sum((a - ma.mean) * (b - mb.mean))) if ma.n else 0.0
        return cls(ma, mb, cab)

    def merge(self, other: "PairedMoments") -> "PairedMoments":
        n1, n2 = self.a.n, other.a.n
        cab = self.cab + other.cab
        if n1 and n2:
            da = other.a.mean - self.a.mean
            db = other.b.mean - self.b.mean
            cab += da * db * n1 * n2 / (n1 + n2)
        return PairedMoments(self.a.merge(other.a), self.b.merge(other.b), cab)

    def abs_gap(self) -> tuple[float, float]:
        """|mean(a)| - |mean(b)| and its delta-method standard error."""
        n = self.a.n
        gap = abs(self.a.mean) - abs(self.b.mean)
        if n < 2:
            return gap, math.nan
        sa = 1.0 if self.a.mean >= 0 else -1.0
        sb = 1.0 if self.b.mean >= 0 else -1.0
        var = self.a.var + self.b.var - 2.0 * sa * sb * self.cab / (n - 1)
        return gap, math.sqrt(max(var, 0.0) / n)


@dataclass
class EstimatorRow:
    estimator: str
    p: float | None
    emp_bias: float
    mc_se: float
    n_valid: int
    n_divergent: int
    oracle_bias: float | None
    gap_vs_tsls: float
    se_diff: float
    verdict: str

    @property
    def dominates_tsls(self) -> bool:
        return self.verdict == "dominates"


@dataclass
class SimResult:
    config: SimConfig
    rows: list[EstimatorRow]
    rng: str
    wall_time: float

    def row(self, name: str) -> EstimatorRow:
        for r in self.rows:
            if r.estimator == name:
                return r
        raise KeyError(name)


def _block_sizes(reps: int) -> list[int]:
    full, rest = divmod(reps, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def _estimator_names(cfg: SimConfig) -> list[str]:
    return ["ols", "tsls", *(sp.name for sp in cfg.specs if sp.variant != "none")]


def _block_full(cfg: SimConfig, theta: CanonicalParams, rng, size: int) -> dict[str, np.ndarray]:
    X, Y = sample_canonical_batch(theta, cfg.s, size, rng)
    ell = cfg.ell
    Xz, Xr, Yz, Yr = X[:, :ell], X[:, ell:], Y[:, :ell], Y[:, ell:]
    out = {"ols": ols_batch(X, Y), "tsls": tsls_batch(Xz, Yz)}
    for sp in cfg.specs:
        if sp.variant != "none":
            out[sp.name] = shrink_iv_batch(Xz, Xr, Yz, Yr, sp)
    return {k: v - theta.beta for k, v in out.items()}


def _block_rb(cfg: SimConfig, theta: CanonicalParams, rng, size: int) -> dict[str, np.ndarray]:
    ell, s, tau = cfg.ell, cfg.s, theta.tau
    M = theta.mu + tau * rng.standard_normal((size, ell))
    Xr = tau * rng.standard_normal((size, s))
    sq_z = np.einsum("ij,ij->i", M, M)
    sq_r = np.einsum("ij,ij->i", Xr, Xr)
    proj = M @ theta.mu
    e = theta.endogeneity
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sq_z > 0, proj / sq_z, np.nan)
        out = {
            "ols": (1.0 - proj / (sq_z + sq_r)) * e,
            "tsls": (1.0 - ratio) * e,
        }
        for sp in cfg.specs:
            p = sp.resolve_p(ell, s)
            if sp.variant == "none":
                continue
            if sp.variant == "harmonic":
                lam = p * s
                out[sp.name] = (1.0 - ratio - lam * tau**2 * ratio / sq_z) * e
            else:
                c = shrinkage_factor_batch(sp.variant, p, sq_z, sq_r)
                out[sp.name] = np.where(c != 0, (1.0 - ratio / c) * e, np.nan)
    return out


def _run_block(cfg: SimConfig, theta: CanonicalParams, index: int, size: int):
    rng = make_rng(cfg.seed, index)
    fn = _block_full if cfg.mode == "full" else _block_rb
    values = fn(cfg, theta, rng, size)
    ref = values["tsls"]
    stats = {}
    for name, v in values.items():
        ok = np.isfinite(v)
        both = ok & np.isfinite(ref)
        stats[name] = (Moments.of(v[ok]), PairedMoments.of(ref[both], v[both]))
    return stats


def _oracle_bias(cfg: SimConfig, name: str, p: float | None) -> float | None:
    kappa = cfg.kappa_value
    if kappa > KAPPA_MAX:
        return None
    e = cfg.theta.endogeneity
    if name == "tsls" and cfg.ell >= 3:
        return poisson_PQ(cfg.ell, kappa)[0] * e
    if name == "harmonic" and cfg.ell >= 4:
        return bias_B(cfg.ell, kappa, p * cfg.s) * e
    return None


def _verdict(gap: float, se: float) -> str:
    if not math.isfinite(se):
        return "undetermined"
    if gap > 3.0 * se:
        return "dominates"
    if gap < -3.0 * se:
        return "dominated"
    return "tie"


def run_bias_mc(cfg: SimConfig) -> SimResult:
    """Estimate E[beta_hat] - beta for OLS, 2SLS and every spec in ``cfg``.

    Undefined replications (c = 0, rank failure) are excluded from the means
    and counted in ``n_divergent``.

    Raises
    ------
    SimulationError
        If some estimator is undefined in every replication.
    """
    start = time.perf_counter()
    theta = cfg.theta
    sizes = _block_sizes(cfg.reps)
    names = _estimator_names(cfg)
    if cfg.workers == 1 or len(sizes) == 1:
        blocks = [_run_block(cfg, theta, i, n) for i, n in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            blocks = list(pool.map(lambda a: _run_block(cfg, theta, *a), enumerate(sizes)))
    pvals = {sp.name: sp.resolve_p(cfg.ell, cfg.s) for sp in cfg.specs}
    rows = []
    for name in names:
        mom, pair = Moments(), PairedMoments()
        for blk in blocks:
            mom = mom.merge(blk[name][0])
            pair = pair.merge(blk[name][1])
        if mom.n == 0:
            raise SimulationError(f"estimator {name!r} undefined in all {cfg.reps} replications")
        p = pvals.get(name)
        gap, se_diff = pair.abs_gap()
        rows.append(
            EstimatorRow(
                estimator=name,
                p=p,
                emp_bias=mom.mean,
                mc_se=mom.se,
                n_valid=mom.n,
                n_divergent=cfg.reps - mom.n,
                oracle_bias=_oracle_bias(cfg, name, p),
                gap_vs_tsls=gap,
                se_diff=se_diff,
                verdict="reference" if name == "tsls" else _verdict(gap, se_diff),
            )
        )
    return SimResult(cfg, rows, RNG_NAME, time.perf_counter() - start)


def compare_estimators(cfg: SimConfig) -> list[EstimatorRow]:
    """Bias table (OLS, 2SLS, each spec) from common random numbers, with a
    dominance verdict against 2SLS for every other row."""
    return run_bias_mc(cfg).rows
