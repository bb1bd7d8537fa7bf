import numpy as np
import pytest

from cfshrink.errors import ConfigurationError, DivergenceError
from cfshrink.estimators import ShrinkageSpec, ols_beta, shrink_iv_beta, tsls_beta
from cfshrink.invariance import (
    GroupElement,
    _act_sample_shear_only_z,
    act_action,
    act_param,
    act_sample,
    check_model_invariance,
    check_rule_invariance,
    compose,
    default_rules,
    haar_orthogonal,
    random_group,
    run_invariance_suite,
    squared_error_loss,
)
from cfshrink.model import CanonicalData, CanonicalParams, log_density, sample_canonical_batch

from .helpers import mean_se, random_canonical


def _assert_data_close(a, b, atol=1e-10):
    for f in ("x_z", "x_r", "y_z", "y_r"):
        np.testing.assert_allclose(getattr(a, f), getattr(b, f), atol=atol, rtol=0)


class TestGroupElement:
    def test_rejects_non_orthogonal(self):
        with pytest.raises(ConfigurationError):
            GroupElement(0.0, np.array([[1.0, 0.1], [0.0, 1.0]]), np.eye(1))

    def test_rejects_non_square(self):
        with pytest.raises(ConfigurationError):
            GroupElement(0.0, np.ones((2, 1)), np.eye(1))

    def test_identity(self):
        g = GroupElement.identity(3, 4)
        np.testing.assert_array_equal(g.g_z, np.eye(3))
        assert g.g_beta == 0.0


class TestActSample:
    def test_identity(self, rng):
        d = random_canonical(rng, 3, 4)
        _assert_data_close(act_sample(GroupElement.identity(3, 4), d), d, atol=0)

    def test_shear(self, rng):
        d = random_canonical(rng, 2, 3)
        out = act_sample(GroupElement(1.0, np.eye(2), np.eye(3)), d)
        np.testing.assert_array_equal(out.y_z, d.y_z + d.x_z)
        np.testing.assert_array_equal(out.y_r, d.y_r + d.x_r)
        np.testing.assert_array_equal(out.x_z, d.x_z)

    def test_composition(self, rng):
        for _ in range(50):
            ell, s = int(rng.integers(1, 7)), int(rng.integers(1, 9))
            d = random_canonical(rng, ell, s)
            g1, g2 = random_group(rng, ell, s), random_group(rng, ell, s)
            _assert_data_close(act_sample(g2, act_sample(g1, d)), act_sample(compose(g2, g1), d))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ConfigurationError):
            act_sample(GroupElement.identity(2, 2), random_canonical(rng, 3, 2))


class TestActParam:
    def test_identity(self):
        theta = CanonicalParams(0.4, [1.0, 2.0], 0.3, 1.2, 0.8)
        out = act_param(GroupElement.identity(2, 5), theta)
        assert out.beta == theta.beta
        np.testing.assert_array_equal(out.mu, theta.mu)

    def test_kappa_invariant(self, rng):
        theta = CanonicalParams(0.4, rng.normal(size=5), 0.3, 1.2, 0.8)
        g = random_group(rng, 5, 2)
        out = act_param(g, theta)
        assert np.linalg.norm(out.mu) == pytest.approx(np.linalg.norm(theta.mu), abs=1e-10)
        assert (out.rho, out.sigma, out.tau) == (theta.rho, theta.sigma, theta.tau)
        assert out.beta == theta.beta + g.g_beta

    def test_model_invariance(self, rng):
        for _ in range(200):
            ell, s = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            theta = CanonicalParams(
                float(rng.normal()), rng.normal(size=ell), float(rng.uniform(-0.9, 0.9)),
                float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 2)),
            )
            d = random_canonical(rng, ell, s)
            g = random_group(rng, ell, s)
            lhs = log_density(act_param(g, theta), act_sample(g, d))
            assert lhs == pytest.approx(log_density(theta, d), abs=1e-8)
            assert check_model_invariance(g, theta, d).passed


class TestActAction:
    def test_zero_shift(self):
        assert act_action(GroupElement(0.0, np.eye(1), np.eye(1)), 1.7) == 1.7

    def test_example(self):
        assert act_action(GroupElement(-2.0, np.eye(1), np.eye(1)), 2.0) == 0.0

    def test_loss_invariance(self, rng):
        theta = CanonicalParams(0.4, [1.0, 2.0], 0.3)
        for _ in range(20):
            g = random_group(rng, 2, 3, beta_scale=5)
            a = float(rng.normal())
            assert squared_error_loss(act_param(g, theta), act_action(g, a)) == pytest.approx(
                squared_error_loss(theta, a), rel=1e-12
            )


class TestRandomGroup:
    @pytest.mark.parametrize("dim", [1, 2, 5, 12])
    def test_orthogonal(self, rng, dim):
        q = haar_orthogonal(rng, dim)
        np.testing.assert_allclose(q.T @ q, np.eye(dim), atol=1e-10)
        assert abs(abs(np.linalg.det(q)) - 1) <= 1e-8

    def test_haar_mean(self, rng):
        cols = np.array([haar_orthogonal(rng, 3)[:, 0] for _ in range(10**5)])
        m = cols.mean(axis=0)
        se = cols.std(axis=0, ddof=1) / np.sqrt(cols.shape[0])
        assert np.all(np.abs(m) <= 3 * se)

    def test_haar_second_moment(self, rng):
        # a uniform unit vector in R^3 has E[u u'] = I / 3
        cols = np.array([haar_orthogonal(rng, 3)[:, 0] for _ in range(20_000)])
        m, se = mean_se(cols[:, 0] ** 2)
        assert abs(m - 1 / 3) <= 3 * se

    def test_both_determinants_occur(self, rng):
        dets = {round(np.linalg.det(haar_orthogonal(rng, 4))) for _ in range(100)}
        assert dets == {-1, 1}

    def test_beta_scale(self, rng):
        g_beta = np.array([random_group(rng, 1, 1, beta_scale=3.0).g_beta for _ in range(20_000)])
        m, se = mean_se(g_beta**2)
        assert abs(m - 9.0) <= 3 * se

    def test_bad_dims(self, rng):
        with pytest.raises(ConfigurationError):
            random_group(rng, 0, 3)


class TestRuleInvariance:
    @pytest.mark.parametrize("name", ["ols", "tsls", "harmonic", "james_stein", "james_stein_positive"])
    def test_default_rules(self, rng, name):
        rule = default_rules()[name]
        for _ in range(200):
            ell, s = int(rng.integers(1, 8)), int(rng.integers(1, 10))
            d = random_canonical(rng, ell, s)
            chk = check_rule_invariance(rule, random_group(rng, ell, s), d)
            assert chk.status in ("pass", "inconclusive")

    @pytest.mark.parametrize("p", [0.01, 1.0, 50.0])
    def test_harmonic_any_p_absolute(self, rng, p):
        spec = ShrinkageSpec("harmonic", p)
        for _ in range(100):
            d = random_canonical(rng, 4, 6)
            g = random_group(rng, 4, 6)
            before = shrink_iv_beta(d, spec)
            after = shrink_iv_beta(act_sample(g, d), spec)
            assert abs(after - (before + g.g_beta)) <= 1e-8 * max(1.0, abs(before))

    def test_inconclusive(self):
        d = CanonicalData([1.0], [1.0], [0.5], [0.5])
        g = GroupElement(0.3, np.eye(1), np.eye(1))
        spec = ShrinkageSpec("james_stein", 1.0)
        with pytest.raises(DivergenceError):
            shrink_iv_beta(d, spec)
        chk = check_rule_invariance(lambda x: shrink_iv_beta(x, spec), g, d)
        assert chk.status == "inconclusive"
        assert not chk.passed

    def test_non_invariant_rule_fails(self, rng):
        d = random_canonical(rng, 3, 3)
        g = random_group(rng, 3, 3)
        chk = check_rule_invariance(lambda x: float(x.y_z[0] / x.x_z[0]), g, d)
        assert chk.status == "fail"

    def test_mutated_action_fails(self, rng):
        d = random_canonical(rng, 3, 5)
        g = GroupElement(1.5, np.eye(3), np.eye(5))
        assert check_rule_invariance(tsls_beta, g, d, act=_act_sample_shear_only_z).passed
        assert check_rule_invariance(ols_beta, g, d, act=_act_sample_shear_only_z).status == "fail"

    def test_reports_residual(self, rng):
        d = random_canonical(rng, 3, 3)
        chk = check_rule_invariance(tsls_beta, random_group(rng, 3, 3), d)
        assert 0 <= chk.residual <= 1e-8


class TestSuite:
    def test_passes(self):
        summary = run_invariance_suite(4, 6, 200, seed=11)
        assert summary.passed
        assert set(summary.max_residual) >= {"log_density", "loss", "ols", "tsls", "harmonic"}
        assert summary.n_inconclusive["tsls"] == 0

    def test_mutation_detected(self):
        assert not run_invariance_suite(4, 6, 50, seed=11, act=_act_sample_shear_only_z).passed

    def test_no_trials(self):
        with pytest.raises(ConfigurationError, match="no trials"):
            run_invariance_suite(3, 3, 0, seed=1)

    def test_deterministic(self):
        a = run_invariance_suite(3, 4, 30, seed=5)
        b = run_invariance_suite(3, 4, 30, seed=5)
        assert a.max_residual == b.max_residual


class TestEquivarianceInDistribution:
    def test_sampling_commutes_with_action(self, rng):
        ell, s, reps = 3, 2, 100_000
        theta = CanonicalParams(0.5, [1.0, -1.0, 0.5], 0.6, 1.3, 0.8)
        g = random_group(rng, ell, s)
        X, Y = sample_canonical_batch(theta, s, reps, rng)
        Q = np.zeros((ell + s, ell + s))
        Q[:ell, :ell], Q[ell:, ell:] = g.g_z, g.g_r
        Xa, Ya = X @ Q.T, (Y + g.g_beta * X) @ Q.T
        Xb, Yb = sample_canonical_batch(act_param(g, theta), s, reps, rng)
        A, B = np.c_[Xa, Ya], np.c_[Xb, Yb]
        for j in range(A.shape[1]):
            ma, sa = mean_se(A[:, j])
            mb, sb = mean_se(B[:, j])
            assert abs(ma - mb) <= 3 * np.hypot(sa, sb), ("mean", j)
        for i, j in [(0, 0), (0, ell + s), (1, ell + s + 1), (ell, 2 * ell + s), (2, 1)]:
            pa, pb = A[:, i] * A[:, j], B[:, i] * B[:, j]
            ma, sa = mean_se(pa)
            mb, sb = mean_se(pb)
            assert abs(ma - mb) <= 3 * np.hypot(sa, sb), ("cross", i, j)
