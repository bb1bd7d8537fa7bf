"""Control-function shrinkage IV estimation with exact bias oracles.

The estimator shrinks the first-stage fit of a rotated ("canonical")
two-stage linear model toward zero and uses the first-stage residual as a
control in the second stage.  The package provides the model and its
canonical transform, the estimators, the Poisson-series bias formulas, the
group invariances, and a seeded Monte Carlo engine to check them.
"""

from .canonical import OrthoBasis, build_basis, canonical_mu, to_canonical
from .errors import (
    CFShrinkError,
    ConfigurationError,
    DegenerateFirstStageError,
    DivergenceError,
    DomainError,
    EstimatorUndefinedError,
    NumericalError,
)
from .estimators import (
    ShrinkageSpec,
    cf_beta,
    ols_beta,
    shrink_iv_beta,
    shrink_iv_weight,
    shrinkage_factor,
    tsls_beta,
)
from .model import (
    CanonicalData,
    CanonicalParams,
    Dataset,
    ReducedFormParams,
    StructuralParams,
    log_density,
    make_rng,
    reduced_form,
    sample_canonical,
    sample_raw,
)
from .oracle import (
    BiasReport,
    bias_B,
    bias_report,
    conditional_bias,
    conditional_mean,
    lambda_star,
    poisson_inverse_moment,
    poisson_inverse_moment_bound,
    poisson_PQ,
)
from .sim import SimConfig, SimResult, compare_estimators, run_bias_mc

__version__ = "0.1.0"
