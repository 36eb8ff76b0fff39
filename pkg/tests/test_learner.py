"""Variational learner: state mechanics, linear solver, and fit quality."""

from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest
from scipy.special import expit

from dppselect.dpp import (
    LEnsemble,
    SimilarityFactor,
    Subset,
    calibrate_theta0,
    inclusion_probabilities,
)
from dppselect.errors import NumericalError
from dppselect.learner import (
    BernoulliPosteriorFamily,
    DppPosteriorFamily,
    LearnerConfig,
    build_selection,
    init_state,
    model_artifact,
    load_artifact_posterior,
    map_subset,
    run,
    select,
    solve_linear,
    step,
)
from dppselect.regression import (
    BernoulliPrior,
    DppPrior,
    SpikeSlabModel,
    joint_log,
    restricted_marginal_loglik,
)
from dppselect.similarity import SimilaritySpec, build_similarity


def synthetic_model(seed=42, n=40, m=8, support=(1, 4), coefs=(2.2, -1.8), noise=1.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, m))
    beta = np.zeros(m)
    for i, c in zip(support, coefs):
        beta[i] = c
    y = x @ beta + noise * rng.standard_normal(n)
    return SpikeSlabModel(design=x, response=y)


def exact_marginals(model, prior):
    m = model.m
    subsets = [c for size in range(m + 1) for c in combinations(range(m), size)]
    logs = np.array([joint_log(model, Subset(c), prior) for c in subsets])
    probs = np.exp(logs - logs.max())
    probs /= probs.sum()
    marg = np.zeros(m)
    for p, c in zip(probs, subsets):
        for i in c:
            marg[i] += p
    return marg


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            LearnerConfig(mode="nope")
        with pytest.raises(ValueError):
            LearnerConfig(n_iters=1)
        with pytest.raises(ValueError):
            LearnerConfig(step_size=1.5)
        with pytest.raises(ValueError):
            LearnerConfig(c_estimator="other")

    def test_default_step_size(self):
        assert LearnerConfig(n_iters=400).resolved_step_size() == pytest.approx(0.05)


class TestSolveLinear:
    def test_identity(self):
        g = np.array([1.0, -2.0, 3.0])
        x, _ = solve_linear(np.eye(3), g)
        np.testing.assert_allclose(x, g, atol=1e-12)

    def test_scaled_diagonal(self):
        g = np.array([2.0, 4.0])
        x, _ = solve_linear(2.0 * np.eye(2), g)
        np.testing.assert_allclose(x, g / 2.0, atol=1e-12)

    def test_matches_dense_solver(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((12, 12))
        c = a @ a.T + 0.5 * np.eye(12)
        g = rng.standard_normal(12)
        x, _ = solve_linear(c, g, cg_tolerance=1e-12, cg_max_iters=500)
        np.testing.assert_allclose(x, np.linalg.solve(c, g), rtol=1e-8, atol=1e-8)

    def test_zero_rhs(self):
        x, iters = solve_linear(np.eye(3), np.zeros(3))
        np.testing.assert_allclose(x, 0.0)
        assert iters == 0

    def test_singular_system_uses_ridge(self):
        c = np.diag([1.0, 0.0])
        g = np.array([1.0, 0.0])
        x, _ = solve_linear(c, g)
        assert np.all(np.isfinite(x))
        assert x[0] == pytest.approx(1.0, abs=1e-6)

    def test_warm_start_short_circuits(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((6, 6))
        c = a @ a.T + np.eye(6)
        g = rng.standard_normal(6)
        x0 = np.linalg.solve(c, g)
        _, iters = solve_linear(c, g, warm_start=x0)
        assert iters == 0


class TestInitState:
    def test_identity_half_cardinality(self):
        phi = SimilarityFactor.identity(4)
        state = init_state(phi, LearnerConfig(kappa=2.0))
        assert state.theta0 == pytest.approx(0.0, abs=1e-10)
        np.testing.assert_allclose(
            np.diag(state.c_mat), [0.5, 0.5, 0.5, 0.5, 1.0], atol=1e-10
        )
        np.testing.assert_allclose(state.g_vec, 0.0, atol=1e-10)

    def test_identity_third_cardinality(self):
        phi = SimilarityFactor.identity(6)
        state = init_state(phi, LearnerConfig(kappa=2.0))
        np.testing.assert_allclose(np.diag(state.c_mat)[:6], 1 / 3, atol=1e-10)

    def test_random_phi_matches_marginal_kernel(self):
        rng = np.random.default_rng(2)
        phi = SimilarityFactor(rng.standard_normal((7, 3)))
        config = LearnerConfig(kappa=2.0)
        state = init_state(phi, config)
        ens = LEnsemble(phi, np.full(7, state.theta0))
        np.testing.assert_allclose(
            np.diag(state.c_mat)[:7], inclusion_probabilities(ens), atol=1e-12
        )


class _FixedFamily:
    """Stub posterior family returning a predetermined subset sequence."""

    kind = "stub"

    def __init__(self, m, subsets):
        self.m = m
        self._subsets = list(subsets)
        self._i = 0

    def sample(self, theta, rng):
        gamma = self._subsets[self._i % len(self._subsets)]
        self._i += 1
        return gamma

    def second_moment(self, theta):
        return np.diag(np.full(self.m, 0.5))

    def expected_cardinality(self, theta):
        return float(np.sum(expit(theta)))


class TestStep:
    def test_zero_step_size_freezes_system(self):
        phi = SimilarityFactor.identity(3)
        config = LearnerConfig(kappa=1.5, n_iters=10, step_size=1e-12)
        state = init_state(phi, config)
        theta_before = state.theta_tilde.copy()
        c_before = state.c_mat.copy()
        g_before = state.g_vec.copy()
        family = _FixedFamily(3, [Subset((0,))])
        step(state, lambda g: -5.0, family, config, np.random.default_rng(0))
        np.testing.assert_allclose(state.c_mat, c_before, atol=1e-10)
        np.testing.assert_allclose(state.g_vec, g_before, atol=1e-10)
        np.testing.assert_allclose(state.theta_tilde, theta_before, atol=1e-6)
        assert state.iter == 1

    def test_update_identity(self):
        phi = SimilarityFactor.identity(3)
        config = LearnerConfig(kappa=1.5, n_iters=10, step_size=0.25)
        state = init_state(phi, config)
        c_prev = state.c_mat.copy()
        family = _FixedFamily(3, [Subset((0, 2))])
        step(state, lambda g: -3.0, family, config, np.random.default_rng(0))
        gt = np.array([1.0, 0.0, 1.0, 1.0])
        c_hat = np.outer(gt, gt)
        np.testing.assert_allclose(
            state.c_mat, 0.75 * c_prev + 0.25 * c_hat, atol=1e-12
        )

    def test_second_half_accumulation(self):
        phi = SimilarityFactor.identity(2)
        config = LearnerConfig(kappa=1.0, n_iters=4, step_size=0.1)
        state = init_state(phi, config)
        family = _FixedFamily(2, [Subset((0,)), Subset((1,))])
        rng = np.random.default_rng(0)
        for _ in range(4):
            step(state, lambda g: -1.0, family, config, rng)
        assert state.n_avg == 2
        assert state.avg_c[2, 2] == pytest.approx(2.0)

    def test_constant_joint_drives_theta_to_zero(self):
        # Enumerable oracle: with log p constant the posterior is uniform and
        # the 2x2 augmented system has the exact solution theta = 0.
        phi = SimilarityFactor.identity(1)
        config = LearnerConfig(kappa=0.5, n_iters=400, seed=3)
        state = init_state(phi, config)
        family = BernoulliPosteriorFamily(1)
        rng = np.random.default_rng(config.seed)
        for _ in range(config.n_iters):
            step(state, lambda g: -7.25, family, config, rng)
        solution, _ = solve_linear(state.avg_c, state.avg_g)
        assert solution[0] == pytest.approx(0.0, abs=1e-12)

    def test_additive_constant_invariance(self):
        phi = SimilarityFactor.identity(3)
        model = synthetic_model(5, n=20, m=3, support=(0,), coefs=(2.0,))
        prior = BernoulliPrior(0.4, 3)

        def fit(offset):
            config = LearnerConfig(kappa=1.5, n_iters=200, seed=11)
            state = init_state(phi, config)
            family = BernoulliPosteriorFamily(3)
            rng = np.random.default_rng(config.seed)
            for _ in range(config.n_iters):
                step(
                    state,
                    lambda g: joint_log(model, g, prior) + offset,
                    family,
                    config,
                    rng,
                )
            solution, _ = solve_linear(state.avg_c, state.avg_g)
            return solution

        base = fit(0.0)
        shifted = fit(1000.0)
        # the running-mean baseline absorbs the constant before it reaches
        # the linear system, so the whole solution is unchanged
        np.testing.assert_allclose(shifted, base, atol=1e-6)

    def test_augmented_diagonal_stays_one(self):
        model = synthetic_model(7, n=25, m=4, support=(0,), coefs=(1.5,))
        phi = build_similarity(SimilaritySpec("gram_of_design"), model.design)
        config = LearnerConfig(kappa=2.0, n_iters=100, seed=0)
        prior = BernoulliPrior(0.3, 4)
        state = init_state(phi, config)
        family = DppPosteriorFamily(phi)
        rng = np.random.default_rng(0)
        for _ in range(config.n_iters):
            step(state, lambda g: joint_log(model, g, prior), family, config, rng)
        assert state.c_mat[4, 4] == pytest.approx(1.0, abs=1e-12)
        diag = np.diag(state.c_mat)[:4]
        assert np.all(diag >= -1e-12) and np.all(diag <= 1.0 + 1e-12)


class TestRun:
    def test_seed_determinism(self):
        model = synthetic_model()
        phi = build_similarity(SimilaritySpec("gram_of_design"), model.design)
        config = LearnerConfig(kappa=2.0, n_iters=60, seed=5)
        theta_a, _ = run(model, phi, config)
        theta_b, _ = run(model, phi, config)
        np.testing.assert_array_equal(theta_a, theta_b)

    def test_fidelity_small_problem(self):
        model = synthetic_model(31, n=35, m=5, support=(0, 3), coefs=(2.0, -1.6))
        phi = build_similarity(SimilaritySpec("gram_of_design"), model.design)
        config = LearnerConfig(kappa=2.0, n_iters=1500, seed=1)
        theta, report = run(model, phi, config)
        fitted = inclusion_probabilities(LEnsemble(phi, theta))
        exact = exact_marginals(model, BernoulliPrior(2.0 / 5, 5))
        assert np.max(np.abs(fitted - exact)) < 0.07
        assert report.n_avg == 750

    def test_cross_mode_consistency_identity_features(self):
        model = synthetic_model(32, n=30, m=5, support=(1,), coefs=(2.0,))
        phi = SimilarityFactor.identity(5)
        config = LearnerConfig(kappa=2.0, n_iters=1500, seed=2)
        theta_b, _ = run(model, phi, config)
        theta_d, _ = run(model, phi, replace(config, mode="dpp_bernoulli"))
        np.testing.assert_allclose(expit(theta_b), expit(theta_d), atol=0.05)

    def test_c_estimator_equivalence(self):
        model = synthetic_model(33, n=30, m=5, support=(2,), coefs=(2.5,))
        phi = build_similarity(SimilaritySpec("gram_of_design"), model.design)
        config = LearnerConfig(kappa=2.0, n_iters=1500, seed=3)
        theta_e, _ = run(model, phi, config)
        theta_k, _ = run(
            model, phi, replace(config, c_estimator="marginal_kernel_K")
        )
        marg_e = inclusion_probabilities(LEnsemble(phi, theta_e))
        marg_k = inclusion_probabilities(LEnsemble(phi, theta_k))
        np.testing.assert_allclose(marg_e, marg_k, atol=0.05)

    def test_dimension_check(self):
        model = synthetic_model(34, m=4, support=(0, 3))
        with pytest.raises(ValueError):
            run(model, SimilarityFactor.identity(5), LearnerConfig(kappa=2.0))

    def test_fixed_point_residual_exact_expectations(self):
        # At the returned solution, exact expectations under the fitted q
        # should nearly satisfy the stationarity system C theta = g.
        model = synthetic_model(35, n=30, m=6, support=(0, 4), coefs=(2.0, -1.7))
        phi = build_similarity(SimilaritySpec("gram_of_design"), model.design)
        config = LearnerConfig(kappa=2.0, n_iters=3000, seed=4)
        theta, report = run(model, phi, config)
        prior = BernoulliPrior(2.0 / 6, 6)
        ens = LEnsemble(phi, theta)
        from dppselect.dpp import subset_log_prob

        subsets = [
            Subset(c) for size in range(7) for c in combinations(range(6), size)
        ]
        weights = np.array(
            [np.exp(subset_log_prob(ens, s, normalized=True)) for s in subsets]
        )
        weights = np.where(np.isfinite(weights), weights, 0.0)
        weights /= weights.sum()
        theta_tilde = np.append(theta, report.theta_aug)
        c_mat = np.zeros((7, 7))
        g_vec = np.zeros(7)
        for s, w in zip(subsets, weights):
            if w == 0.0:
                continue
            gt = np.append(s.indicator(6), 1.0)
            c_mat += w * np.outer(gt, gt)
            g_vec += w * gt * joint_log(model, s, prior)
        residual = np.linalg.norm(c_mat @ theta_tilde - g_vec) / np.linalg.norm(g_vec)
        assert residual <= 0.1


class TestSelect:
    def test_single_relevant_orthogonal_feature(self):
        rng = np.random.default_rng(36)
        x, _ = np.linalg.qr(rng.standard_normal((30, 5)))
        x *= np.sqrt(30)
        y = 2.5 * x[:, 2]
        model = SpikeSlabModel(design=x, response=y)
        phi = build_similarity(SimilaritySpec("gram_of_design"), x)
        config = LearnerConfig(kappa=1.5, n_iters=800, seed=0)
        report = select(model, phi, config)
        assert report.selected == (2,)

    def test_duplicated_features_never_coselected(self):
        rng = np.random.default_rng(37)
        base = rng.standard_normal(40)
        noise = rng.standard_normal((40, 2))
        x = np.column_stack([base, base, noise])
        y = 2.0 * base + 0.2 * rng.standard_normal(40)
        model = SpikeSlabModel(design=x, response=y)
        phi = build_similarity(SimilaritySpec("gram_of_design"), x)
        config = LearnerConfig(kappa=1.5, n_iters=800, seed=1)
        report = select(model, phi, config)
        assert len(set(report.selected) & {0, 1}) == 1

    def test_marginals_sum_matches_expected_cardinality(self):
        model = synthetic_model(38, n=30, m=5, support=(1,), coefs=(2.0,))
        phi = build_similarity(SimilaritySpec("gram_of_design"), model.design)
        config = LearnerConfig(kappa=2.0, n_iters=400, seed=2)
        report = select(model, phi, config)
        assert sum(report.inclusion_marginals) == pytest.approx(
            report.diagnostics["expected_cardinality_final"], abs=1e-9
        )

    def test_alternatives_are_distinct_and_scored(self):
        model = synthetic_model(39, n=30, m=6)
        phi = build_similarity(SimilaritySpec("gram_of_design"), model.design)
        config = LearnerConfig(kappa=2.0, n_iters=300, seed=3)
        report = select(model, phi, config)
        keys = [tuple(alt["indices"]) for alt in report.alternatives]
        assert len(keys) == len(set(keys))
        assert tuple(report.selected) not in keys
        scores = [alt["log_prob"] for alt in report.alternatives]
        assert scores == sorted(scores, reverse=True)


class TestArtifact:
    def test_roundtrip(self):
        model = synthetic_model(40, n=25, m=4, support=(0,), coefs=(2.0,))
        phi = build_similarity(SimilaritySpec("gram_of_design"), model.design)
        config = LearnerConfig(kappa=1.5, n_iters=200, seed=4)
        theta, report = run(model, phi, config)
        artifact = model_artifact(theta, phi, config, report, phi_source="gram_of_design")
        phi2, theta2, mode = load_artifact_posterior(artifact)
        np.testing.assert_allclose(theta2, theta)
        np.testing.assert_allclose(phi2.phi, phi.phi)
        assert mode == "bernoulli_dpp"
        assert artifact["phi_source"]["source"] == "gram_of_design"

    def test_map_subset_threshold_mode(self):
        theta = np.array([1.2, -0.5, 0.3])
        sel = map_subset(SimilarityFactor.identity(3), theta, "dpp_bernoulli")
        assert sel.indices == (0, 2)
