"""Command-line front end.

Subcommands: ``simulate`` (bias table over a parameter grid, as CSV),
``oracle`` (analytic P, Q, B(lambda), lambda*), ``invariance`` (random
checks of the group invariances) and ``sample`` (dump one dataset as CSV).

Exit codes: 0 success, 1 a check failed, 2 configuration error,
3 numerical/domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import sys
from dataclasses import dataclass

import numpy as np

from .canonical import build_basis, canonical_mu
from .errors import ConfigurationError, NumericalError
from .estimators import VARIANTS, ShrinkageSpec
from .invariance import _act_sample_shear_only_z, act_sample, run_invariance_suite
from .model import CanonicalParams, StructuralParams, make_rng, sample_canonical, sample_raw
from .oracle import bias_B, lambda_star, poisson_PQ
from .sim import SimConfig, compare_estimators

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

CSV_HEADER = (
    "estimator,ell,s,kappa,rho,sigma,tau,lambda,reps,mode,seed,"
    "emp_bias,mc_se,oracle_bias,n_divergent,dominates_2sls"
).split(",")

_DEFAULTS = {
    "ell": "8",
    "s": "20",
    "kappa": "2",
    "rho": "0.5",
    "beta": "0",
    "sigma": "1",
    "tau": "1",
    "variants": "harmonic",
    "reps": "10000",
    "seed": "0",
    "mode": "full",
}


def fmt(x) -> str:
    """CSV cell: floats with 17 significant digits, None as empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{num}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _split(value: str, cast, key: str) -> list:
    items = [t.strip() for t in value.split(",") if t.strip()]
    try:
        return [cast(t) for t in items]
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {value!r}") from exc


@dataclass
class ExperimentGrid:
    ell: list[int]
    s: list[int]
    kappa: list[float]
    rho: list[float]
    lam: list[float] | None
    p: list[float] | None
    variants: list[str]
    beta: float
    sigma: float
    tau: float
    reps: int
    seed: int
    mode: str
    workers: int | None = None

    @classmethod
    def from_settings(cls, st: dict[str, str]) -> "ExperimentGrid":
        def scalar(key, cast):
            try:
                return cast(st[key])
            except ValueError as exc:
                raise ConfigurationError(f"bad value for {key}: {st[key]!r}") from exc

        lam = _split(st["lambda"], float, "lambda") if st.get("lambda") is not None else None
        p = _split(st["p"], float, "p") if st.get("p") is not None else None
        if lam is not None and p is not None:
            raise ConfigurationError("give lambda or p, not both")
        grid = cls(
            ell=_split(st["ell"], int, "ell"),
            s=_split(st["s"], int, "s"),
            kappa=_split(st["kappa"], float, "kappa"),
            rho=_split(st["rho"], float, "rho"),
            lam=lam,
            p=p,
            variants=_split(st["variants"], str, "variants"),
            beta=scalar("beta", float),
            sigma=scalar("sigma", float),
            tau=scalar("tau", float),
            reps=scalar("reps", int),
            seed=scalar("seed", int),
            mode=st["mode"],
            workers=scalar("workers", int) if st.get("workers") is not None else None,
        )
        for v in grid.variants:
            if v not in VARIANTS or v == "none":
                raise ConfigurationError(f"unknown shrinkage variant {v!r}")
        lists = [grid.ell, grid.s, grid.kappa, grid.rho, grid.variants]
        lists += [x for x in (grid.lam, grid.p) if x is not None]
        if any(len(x) == 0 for x in lists):
            raise ConfigurationError("empty grid")
        return grid

    def cells(self):
        """Yield (lambda, SimConfig) for every cell of the cross product."""
        strengths = self.lam if self.lam is not None else self.p if self.p is not None else [None]
        for ell, s, kappa, rho, t in itertools.product(self.ell, self.s, self.kappa, self.rho, strengths):
            if t is None:
                lam = float(max(ell - 2, 0))
            elif self.lam is not None:
                lam = t
            else:
                lam = t * s
            specs = tuple(ShrinkageSpec(v, lam / s) for v in self.variants)
            yield lam, SimConfig(
                ell=ell,
                s=s,
                rho=rho,
                kappa=kappa,
                beta=self.beta,
                sigma=self.sigma,
                tau=self.tau,
                specs=specs,
                reps=self.reps,
                seed=self.seed,
                mode=self.mode,
                workers=self.workers,
            )


def simulate_rows(grid: ExperimentGrid, errors: list[str] | None = None) -> list[list[str]]:
    """CSV rows (without header) for every cell; failing cells are reported in ``errors``."""
    out = []
    for lam, cfg in grid.cells():
        try:
            rows = compare_estimators(cfg)
        except (ConfigurationError, NumericalError) as exc:
            if errors is None:
                raise
            errors.append(f"cell ell={cfg.ell} s={cfg.s} kappa={cfg.kappa} rho={cfg.rho}: {exc}")
            continue
        for r in rows:
            out.append(
                [
                    r.estimator,
                    fmt(cfg.ell),
                    fmt(cfg.s),
                    fmt(cfg.kappa),
                    fmt(cfg.rho),
                    fmt(cfg.sigma),
                    fmt(cfg.tau),
                    fmt(lam),
                    fmt(cfg.reps),
                    cfg.mode,
                    fmt(cfg.seed),
                    fmt(r.emp_bias),
                    fmt(r.mc_se),
                    fmt(r.oracle_bias),
                    fmt(r.n_divergent),
                    fmt(r.dominates_tsls),
                ]
            )
    return out


def _settings(args, keys) -> dict[str, str]:
    st = dict(_DEFAULTS)
    if getattr(args, "config", None):
        st.update(read_config(args.config))
    for key in keys:
        value = getattr(args, key.replace("lambda", "lam"), None)
        if value is not None:
            st[key] = str(value)
    return st


def cmd_simulate(args) -> int:
    grid = ExperimentGrid.from_settings(
        _settings(args, ["ell", "s", "kappa", "rho", "lambda", "p", "variants", "beta",
                         "sigma", "tau", "reps", "seed", "mode", "workers"])
    )
    errors: list[str] = []
    rows = simulate_rows(grid, errors)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    _write_output(args.out, buf.getvalue())
    for msg in errors:
        print(f"error: {msg}", file=sys.stderr)
    if not args.out:
        return EXIT_NUMERIC if errors else EXIT_OK
    for r in rows:
        print(f"{r[0]:>22s} ell={r[1]} kappa={r[3]} lambda={r[7]}  emp_bias={r[11]} "
              f"mc_se={r[12]}  dominates_2sls={r[15]}")
    return EXIT_NUMERIC if errors else EXIT_OK


def _write_output(path: str | None, text: str) -> None:
    if not path:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path}: {exc}") from exc


def cmd_oracle(args) -> int:
    ell = args.ell
    kappa = args.kappa
    lams = _split(args.lam, float, "lambda") if args.lam else [0.0, float(max(ell - 2, 0))]
    P, Q = poisson_PQ(ell, kappa)
    ls = lambda_star(ell, kappa)
    print(f"ell = {ell}  kappa = {fmt(kappa)}")
    print(f"P = {fmt(P)}")
    print(f"Q = {fmt(Q)}")
    print(f"lambda_star = {'inf' if math.isinf(ls) else fmt(ls)}")
    print("lambda,B")
    for lam in lams:
        print(f"{fmt(lam)},{fmt(bias_B(ell, kappa, lam))}")
    return EXIT_OK


def cmd_invariance(args) -> int:
    act = _act_sample_shear_only_z if args.shear_only_z else act_sample
    summary = run_invariance_suite(args.ell, args.s, args.trials, args.seed, act=act)
    for name, res in summary.max_residual.items():
        inc = summary.n_inconclusive[name]
        extra = f"  ({inc} inconclusive)" if inc else ""
        print(f"{name:>22s}  max residual {res:.3e}{extra}")
    print("PASS" if summary.passed else "FAIL", f"(tol {summary.tol:g}, {summary.trials} trials)")
    return EXIT_OK if summary.passed else EXIT_FAIL


def cmd_sample(args) -> int:
    rows: list[list[str]]
    if args.kind == "canonical":
        mu = np.zeros(args.ell)
        mu[0] = math.sqrt(2.0 * args.kappa) * args.tau
        theta = CanonicalParams(args.beta, mu, args.rho, args.sigma, args.tau)
        d = sample_canonical(theta, args.ell, args.s, make_rng(args.seed))
        rows = [["block", "index", "x", "y"]]
        rows += [["z", str(i), fmt(a), fmt(b)] for i, (a, b) in enumerate(zip(d.x_z, d.y_z))]
        rows += [["r", str(i), fmt(a), fmt(b)] for i, (a, b) in enumerate(zip(d.x_r, d.y_r))]
    else:
        n = args.n if args.n is not None else 1 + args.k + args.ell + args.s
        design_rng = make_rng(args.seed, 0)
        z = design_rng.standard_normal((n, args.ell))
        w = design_rng.standard_normal((n, args.k))
        pi = np.full(args.ell, args.pi_scale / math.sqrt(args.ell))
        p = StructuralParams(args.beta, pi, args.rho, args.sigma, args.tau,
                             gamma=np.zeros(args.k), gamma_x=np.zeros(args.k))
        d = sample_raw(p, z, w, make_rng(args.seed, 1))
        rows = [["y", "x", *(f"z{j + 1}" for j in range(args.ell)), *(f"w{j + 1}" for j in range(args.k))]]
        for i in range(n):
            rows.append([fmt(d.y[i]), fmt(d.x[i]), *map(fmt, d.z[i]), *map(fmt, d.w[i])])
        if args.canonical_mu:
            mu = canonical_mu(pi, z, build_basis(z, w))
            print("# mu = " + ",".join(map(fmt, mu)), file=sys.stderr)
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    _write_output(args.out, buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfshrink", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo bias table over a grid, as CSV")
    sim.add_argument("--config", help="flat 'key = value' file; flags override it")
    for key in ("ell", "s", "kappa", "rho", "variants"):
        sim.add_argument(f"--{key}", help="comma-separated list")
    sim.add_argument("--lambda", dest="lam", help="comma-separated shrinkage strengths lambda = p s")
    sim.add_argument("--p", help="comma-separated tuning constants (alternative to --lambda)")
    for key in ("beta", "sigma", "tau"):
        sim.add_argument(f"--{key}")
    sim.add_argument("--reps")
    sim.add_argument("--seed")
    sim.add_argument("--workers")
    sim.add_argument("--mode", choices=["full", "rb", "rao_blackwell"])
    sim.add_argument("--out", help="CSV path (default: standard output)")
    sim.set_defaults(func=cmd_simulate)

    orc = sub.add_parser("oracle", help="analytic P, Q, B(lambda) and lambda*")
    orc.add_argument("--ell", type=int, required=True)
    orc.add_argument("--kappa", type=float, required=True)
    orc.add_argument("--lambda", dest="lam", help="comma-separated lambda values")
    orc.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    orc.set_defaults(func=cmd_oracle)

    inv = sub.add_parser("invariance", help="random checks of model and rule invariance")
    inv.add_argument("--ell", type=int, default=4)
    inv.add_argument("--s", type=int, default=8)
    inv.add_argument("--trials", type=int, default=1000)
    inv.add_argument("--seed", type=int, default=0)
    inv.add_argument("--shear-only-z", action="store_true",
                     help="test hook: corrupt the sample action to confirm failures are detected")
    inv.set_defaults(func=cmd_invariance)

    smp = sub.add_parser("sample", help="dump a raw or canonical dataset as CSV")
    smp.add_argument("--kind", choices=["raw", "canonical"], default="canonical")
    smp.add_argument("--n", type=int)
    smp.add_argument("--k", type=int, default=0)
    smp.add_argument("--ell", type=int, default=4)
    smp.add_argument("--s", type=int, default=20)
    smp.add_argument("--kappa", type=float, default=2.0)
    smp.add_argument("--pi-scale", type=float, default=0.5)
    smp.add_argument("--beta", type=float, default=0.0)
    smp.add_argument("--rho", type=float, default=0.5)
    smp.add_argument("--sigma", type=float, default=1.0)
    smp.add_argument("--tau", type=float, default=1.0)
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--canonical-mu", action="store_true", help="also print the canonical mu (raw only)")
    smp.add_argument("--out")
    smp.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
