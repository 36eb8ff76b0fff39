"""Spike-and-slab evidence, priors, prediction, and the Monte Carlo oracle."""

from itertools import combinations

import numpy as np
import pytest

from dppselect.dpp import LEnsemble, SimilarityFactor, Subset, build_lensemble
from dppselect.regression import (
    BernoulliPrior,
    DppPrior,
    SpikeSlabModel,
    bernoulli_log_prior,
    credible_interval,
    dpp_log_prior,
    joint_log,
    mc_evidence_oracle,
    posterior_beta,
    predict,
    restricted_marginal_loglik,
)


def random_model(seed, n=15, m=6, **kwargs):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, m))
    y = rng.standard_normal(n)
    return SpikeSlabModel(design=x, response=y, **kwargs)


class TestModelValidation:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            SpikeSlabModel(design=np.ones((3, 2)), response=np.ones(4))

    def test_bad_hyperparameters(self):
        with pytest.raises(ValueError):
            random_model(0, ridge_scale=0.0)
        with pytest.raises(ValueError):
            random_model(0, alpha=1.0)


class TestEvidence:
    def test_null_model_hand_value(self):
        model = SpikeSlabModel(
            design=np.ones((2, 1)), response=np.zeros(2), a0=1.0, b0=1.0
        )
        assert restricted_marginal_loglik(model, []) == pytest.approx(
            -np.log(2 * np.pi), abs=1e-12
        )

    def test_zero_column_is_inert(self):
        model = random_model(1, n=12, m=4)
        base = restricted_marginal_loglik(model, [0, 2])
        padded = SpikeSlabModel(
            design=np.hstack([model.design, np.zeros((12, 1))]),
            response=model.response,
        )
        assert restricted_marginal_loglik(padded, [0, 2]) == pytest.approx(
            base, abs=1e-12
        )

    def test_column_permutation_invariance(self):
        model = random_model(2, n=14, m=5)
        value = restricted_marginal_loglik(model, [1, 3])
        perm = [3, 1, 0, 2, 4]
        permuted = SpikeSlabModel(design=model.design[:, perm], response=model.response)
        # columns 1,3 land at positions 1,0 after the permutation
        assert restricted_marginal_loglik(permuted, [0, 1]) == pytest.approx(
            value, abs=1e-10
        )

    def test_against_mc_oracle(self):
        model = random_model(3, n=12, m=5, a0=2.0, b0=2.0)
        rng = np.random.default_rng(0)
        for gamma in ([], [1], [0, 3]):
            closed = restricted_marginal_loglik(model, gamma)
            est, se = mc_evidence_oracle(model, gamma, 200_000, rng)
            assert abs(closed - est) <= 3 * se

    def test_response_scaling_against_oracle(self):
        model = random_model(4, n=10, m=4, a0=2.0, b0=2.0)
        scaled = SpikeSlabModel(
            design=model.design, response=3.0 * model.response, a0=2.0, b0=2.0
        )
        rng = np.random.default_rng(1)
        closed = restricted_marginal_loglik(scaled, [0, 1])
        est, se = mc_evidence_oracle(scaled, [0, 1], 200_000, rng)
        assert abs(closed - est) <= 3 * se


class TestMcOracle:
    def test_rejects_tiny_sample(self):
        model = random_model(5)
        with pytest.raises(ValueError):
            mc_evidence_oracle(model, [], 100, np.random.default_rng(0))

    def test_error_shrinks_with_sample_size(self):
        model = random_model(6, n=8, m=3, a0=2.0, b0=2.0)
        _, se_small = mc_evidence_oracle(
            model, [0], 20_000, np.random.default_rng(2)
        )
        _, se_big = mc_evidence_oracle(
            model, [0], 80_000, np.random.default_rng(3)
        )
        assert se_big < se_small * 0.75


class TestPriors:
    def test_bernoulli_uniform(self):
        assert bernoulli_log_prior([0, 3], 0.5, 10) == pytest.approx(10 * np.log(0.5))

    def test_bernoulli_empty(self):
        assert bernoulli_log_prior([], 0.1, 3) == pytest.approx(3 * np.log(0.9))

    def test_bernoulli_normalizes(self):
        m, alpha = 10, 0.3
        total = sum(
            np.exp(bernoulli_log_prior(idx, alpha, m))
            for size in range(m + 1)
            for idx in combinations(range(m), size)
        )
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_dpp_prior_values(self):
        kernel = build_lensemble(np.eye(2), np.zeros(2))
        assert dpp_log_prior([0], kernel) == pytest.approx(np.log(0.25))
        rank1 = build_lensemble([[1.0], [1.0]], np.zeros(2))
        assert dpp_log_prior([0, 1], rank1) == -np.inf

    def test_dpp_prior_normalizes(self):
        rng = np.random.default_rng(7)
        kernel = build_lensemble(rng.standard_normal((8, 3)), rng.standard_normal(8))
        total = sum(
            np.exp(dpp_log_prior(idx, kernel))
            for size in range(9)
            for idx in combinations(range(8), size)
        )
        assert total == pytest.approx(1.0, abs=1e-8)


class TestJointLog:
    def test_composition(self):
        model = random_model(8)
        prior = BernoulliPrior(0.3, model.m)
        gamma = Subset((0, 2))
        assert joint_log(model, gamma, prior) == pytest.approx(
            restricted_marginal_loglik(model, gamma) + prior.log_prob(gamma)
        )

    def test_uniform_prior_preserves_argmax(self):
        model = random_model(9, n=20, m=6)
        prior = BernoulliPrior(0.5, 6)
        subsets = [
            idx for size in range(7) for idx in combinations(range(6), size)
        ]
        by_joint = max(subsets, key=lambda s: joint_log(model, Subset(s), prior))
        by_evidence = max(
            subsets, key=lambda s: restricted_marginal_loglik(model, Subset(s))
        )
        assert by_joint == by_evidence


class TestPosteriorBeta:
    def test_small_ridge_recovers_least_squares(self):
        rng = np.random.default_rng(10)
        y = rng.standard_normal(4)
        model = SpikeSlabModel(design=np.eye(4), response=y, ridge_scale=1e-10)
        post = posterior_beta(model, [0, 1, 2, 3])
        np.testing.assert_allclose(post.mu_n, y, atol=1e-8)

    def test_huge_ridge_shrinks_to_zero(self):
        model = random_model(11, n=10, m=3, ridge_scale=1e8)
        post = posterior_beta(model, [0, 1])
        np.testing.assert_allclose(post.mu_n, 0.0, atol=1e-5)

    def test_normal_equation_identity(self):
        model = random_model(12, n=18, m=6)
        idx = [0, 2, 5]
        post = posterior_beta(model, idx)
        lhs = post.lambda_n @ post.mu_n
        rhs = model.design[:, idx].T @ model.response
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_b_n_exceeds_b0_for_generic_data(self):
        model = random_model(13, n=16, m=5, b0=0.5)
        post = posterior_beta(model, [0, 1])
        assert post.b_n > 0.5


class TestPredict:
    def test_empty_subset(self):
        model = random_model(14, n=10, m=4)
        mean, var = predict(model, [], model.design[:3])
        post = posterior_beta(model, [])
        np.testing.assert_allclose(mean, 0.0)
        np.testing.assert_allclose(var, post.b_n / post.a_n)

    def test_interpolates_noiseless_data(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((30, 4))
        beta = np.array([1.5, -2.0, 0.0, 0.0])
        model = SpikeSlabModel(
            design=x, response=x @ beta, ridge_scale=1e-8, a0=0.01, b0=0.01
        )
        mean, _ = predict(model, [0, 1], x[:5])
        np.testing.assert_allclose(mean, (x @ beta)[:5], atol=1e-5)

    def test_variance_grows_away_from_training_support(self):
        rng = np.random.default_rng(16)
        x = rng.standard_normal((25, 2))
        y = x[:, 0] + 0.1 * rng.standard_normal(25)
        model = SpikeSlabModel(design=x, response=y)
        near = np.array([[0.1, 0.0]])
        far = np.array([[8.0, 0.0]])
        _, var_near = predict(model, [0], near)
        _, var_far = predict(model, [0], far)
        assert var_far[0] > var_near[0]

    def test_dimension_check(self):
        model = random_model(17, m=4)
        with pytest.raises(ValueError):
            predict(model, [0], np.ones((2, 3)))


class TestCredibleInterval:
    def _concentrated_posterior(self, m):
        theta = np.full(m, -20.0)
        theta[0] = 20.0
        return build_lensemble(np.eye(m), theta)

    def test_point_mass_width_from_within_term(self):
        rng = np.random.default_rng(18)
        x = rng.standard_normal((30, 3))
        y = 2.0 * x[:, 0] + 0.1 * rng.standard_normal(30)
        model = SpikeSlabModel(design=x, response=y)
        q = self._concentrated_posterior(3)
        summary = credible_interval(
            q, model, x[:4], n_draws=200, level=0.95, rng=np.random.default_rng(0)
        )
        np.testing.assert_allclose(summary.between_variance, 0.0, atol=1e-12)
        assert np.all(summary.within_variance > 0)

    def test_nested_quantiles(self):
        rng = np.random.default_rng(19)
        x = rng.standard_normal((20, 4))
        y = x[:, 1] - x[:, 2] + 0.5 * rng.standard_normal(20)
        model = SpikeSlabModel(design=x, response=y)
        q = build_lensemble(np.eye(4), np.zeros(4))
        wide = credible_interval(
            q, model, x[:6], n_draws=300, level=0.95, rng=np.random.default_rng(1)
        )
        narrow = credible_interval(
            q, model, x[:6], n_draws=300, level=0.5, rng=np.random.default_rng(1)
        )
        assert np.all(wide.lower <= narrow.lower + 1e-12)
        assert np.all(narrow.upper <= wide.upper + 1e-12)

    def test_coverage_on_synthetic(self):
        rng = np.random.default_rng(20)
        n, m = 60, 5
        x = rng.standard_normal((n, m))
        beta = np.array([2.0, 0.0, -1.5, 0.0, 0.0])
        noise_sd = 0.4
        y = x @ beta + noise_sd * rng.standard_normal(n)
        model = SpikeSlabModel(design=x, response=y)
        theta = np.where(beta != 0.0, 20.0, -20.0)
        q = build_lensemble(np.eye(m), theta)
        x_new = rng.standard_normal((100, m))
        y_new = x_new @ beta + noise_sd * rng.standard_normal(100)
        summary = credible_interval(
            q, model, x_new, n_draws=300, level=0.95, rng=np.random.default_rng(2)
        )
        total_sd = np.sqrt(summary.between_variance + summary.within_variance)
        covered = np.abs(y_new - summary.mean) <= 1.96 * total_sd
        assert covered.mean() >= 0.85

    def test_rejects_few_draws(self):
        model = random_model(21)
        q = build_lensemble(np.eye(model.m), np.zeros(model.m))
        with pytest.raises(ValueError):
            credible_interval(q, model, model.design[:2], n_draws=50)
