import numpy as np

from cfshrink.model import CanonicalData

#: single master seed for every stochastic test; streams are split by key
SEED = 20261016

ACCEPTANCE_LINES = []


def random_canonical(rng, ell, s, scale=1.0):
    n = ell + s
    return CanonicalData.from_stacked(
        rng.normal(size=n) * scale, rng.normal(size=n) * scale, ell
    )


def within_se(estimate, target, se, k=3.0):
    return abs(estimate - target) <= k * se


def mean_se(values):
    values = np.asarray(values, dtype=float)
    return values.mean(), values.std(ddof=1) / np.sqrt(values.size)
