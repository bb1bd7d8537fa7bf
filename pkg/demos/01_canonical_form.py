"""
From raw IV data to the canonical form
======================================

Simulate one dataset from the structural model, rotate it into the
canonical coordinates and compare the estimators there with textbook
2SLS computed on the raw data.
"""

import numpy as np

from cfshrink import (
    ShrinkageSpec,
    StructuralParams,
    build_basis,
    canonical_mu,
    make_rng,
    ols_beta,
    sample_raw,
    shrink_iv_beta,
    to_canonical,
    tsls_beta,
)

# a fixed design: 60 observations, 5 instruments, 2 exogenous controls
rng = make_rng(42)
n, ell, k = 60, 5, 2
z = rng.standard_normal((n, ell))
w = rng.standard_normal((n, k))

# strong endogeneity (rho = 0.8) and a modest first stage
params = StructuralParams(beta=1.0, pi=np.full(ell, 0.25), rho=0.8,
                          gamma=[0.5, -0.5], gamma_x=[1.0, 0.0])
data = sample_raw(params, z, w, rng)

# the orthonormal basis (1 | w | z | rest) and the canonical coordinates
basis = build_basis(z, w)
d = to_canonical(data, basis)
mu = canonical_mu(params.pi, z, basis)
print(f"ell = {d.ell}, s = {d.s}, kappa = {mu @ mu / 2:.3f}")

# 2SLS in canonical form is just x_z'y_z / x_z'x_z
inst = np.c_[np.ones(n), w, z]
x_hat = inst @ np.linalg.lstsq(inst, data.x, rcond=None)[0]
design = np.c_[x_hat, np.ones(n), w]
textbook = np.linalg.lstsq(design, data.y, rcond=None)[0][0]
print(f"2SLS canonical {tsls_beta(d):.10f}  textbook {textbook:.10f}")

# OLS is pulled toward rho sigma / tau; shrinking the first stage moves
# the control-function estimate further from 2SLS in the same direction as
# the bias correction
print(f"OLS            {ols_beta(d):.4f}")
for lam in (0.0, 1.5, 3.0):
    spec = ShrinkageSpec.from_lambda("harmonic", lam, d.s)
    print(f"harmonic lambda={lam:<4} {shrink_iv_beta(d, spec):.4f}")
