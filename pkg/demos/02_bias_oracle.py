"""
The exact bias curve B(lambda)
==============================

The unconditional bias of the harmonic control-function estimator, in
units of rho sigma / tau, is a straight line in lambda whose intercept is
the 2SLS bias P and whose slope is -(P + Q - 1) / 2.  This script tabulates
it and the bias-nulling lambda*.
"""

import numpy as np

from cfshrink import bias_B, lambda_star, poisson_PQ

# P and Q at ell = 4, kappa = 1 both equal 1 - 1/e
P, Q = poisson_PQ(4, 1.0)
print(f"P = {P:.12f}  Q = {Q:.12f}  1 - 1/e = {1 - np.exp(-1):.12f}")

# the line B(lambda) at a few instrument counts
kappa = 2.0
print(f"\nB(lambda) at kappa = {kappa}")
print("ell   B(0)     B((ell-2)/2)  B(ell-2)   lambda*")
for ell in (4, 6, 10, 20):
    row = [bias_B(ell, kappa, lam) for lam in (0, (ell - 2) / 2, ell - 2)]
    print(f"{ell:<4}" + "".join(f"{b:<13.6f}" for b in row) + f"{lambda_star(ell, kappa):.4f}")

# lambda* >= ell - 2 needs ell >= 4; at ell = 3 it dips below one
print("\nlambda* - (ell - 2) along kappa")
for kappa in (0.1, 1.0, 4.0, 25.0, 100.0):
    gaps = [lambda_star(ell, kappa) - (ell - 2) for ell in (3, 4, 8)]
    print(f"kappa={kappa:<6}" + "".join(f"{g:+12.5f}" for g in gaps))

# as kappa grows lambda* approaches ell - 2 from above
print(f"\nlambda*(6, 1e4) = {lambda_star(6, 1e4):.6f}")
