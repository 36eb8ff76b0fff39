"""Stochastic fixed-form variational fitting of the subset posterior.

Two prior/posterior pairings share one update loop: ``bernoulli_dpp`` uses
an exchangeable Bernoulli prior with a DPP variational posterior, and
``dpp_bernoulli`` uses a DPP prior with a fully factorized (independent
Bernoulli) variational posterior. Each iteration draws a subset from the
current posterior approximation, forms Monte Carlo estimates of the
second-moment matrix C and moment vector g of the augmented indicator, blends
them with step size w, and re-solves the linear system C theta = g by warm
started conjugate gradient. The second half of the run is averaged and the
averaged system solved once more for the returned parameters.

All subset indicators carry an extra constant coordinate; the slot for that
coordinate absorbs additive constants in the joint log-density, so a running
mean of observed joint values is subtracted before the update (and added
back to the reported augmented coordinate) purely to shrink the dynamic
range fed to the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .dpp import (
    LEnsemble,
    SimilarityFactor,
    Subset,
    calibrate_theta0,
    expected_cardinality,
    greedy_map,
    inclusion_probabilities,
    marginal_kernel,
    sample as dpp_sample,
    subset_log_prob,
)
from .errors import NumericalError
from .regression import BernoulliPrior, DppPrior, SpikeSlabModel, restricted_marginal_loglik

MODES = ("bernoulli_dpp", "dpp_bernoulli")
C_ESTIMATORS = ("empirical_outer_product", "marginal_kernel_K")


@dataclass(frozen=True)
class LearnerConfig:
    """Knobs for one variational run; defaults suit desk-scale problems."""

    mode: str = "bernoulli_dpp"
    n_iters: int = 2000
    kappa: float = 4.0
    step_size: float | None = None  # None -> 1 / sqrt(n_iters)
    c_estimator: str = "empirical_outer_product"
    alpha: float | None = None  # None -> kappa / M
    seed: int = 0
    cg_tolerance: float = 1e-10
    cg_max_iters: int = 500
    ridge_eps: float = 1e-10
    theta_clamp: float = 30.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.c_estimator not in C_ESTIMATORS:
            raise ValueError(
                f"c_estimator must be one of {C_ESTIMATORS}, got {self.c_estimator!r}"
            )
        if self.n_iters < 2:
            raise ValueError("n_iters must be at least 2 (averaging needs a second half)")
        if self.step_size is not None and not 0.0 < self.step_size <= 1.0:
            raise ValueError("step_size must lie in (0, 1]")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")

    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 1.0 / math.sqrt(self.n_iters)


@dataclass
class LearnerState:
    """Mutable running state of one fit."""

    theta_tilde: np.ndarray  # length M+1, last slot is the constant coordinate
    c_mat: np.ndarray
    g_vec: np.ndarray
    iter: int
    avg_c: np.ndarray
    avg_g: np.ndarray
    n_avg: int
    theta0: float
    baseline: float = 0.0
    baseline_n: int = 0
    clamp_events: int = 0
    empty_draws: int = 0
    cg_iters: list[int] = field(default_factory=list)
    theta_norms: list[float] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.theta_tilde.shape[0] - 1


@dataclass(frozen=True)
class LearnerReport:
    """Diagnostics from a finished run."""

    mode: str
    theta0: float
    theta_aug: float
    expected_cardinality_final: float
    final_residual: float
    clamp_events: int
    empty_draws: int
    n_avg: int
    cache_size: int
    baseline: float
    cg_iters_total: int
    cg_iters_max: int
    theta_norms: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "theta0": self.theta0,
            "theta_aug": self.theta_aug,
            "expected_cardinality_final": self.expected_cardinality_final,
            "final_residual": self.final_residual,
            "clamp_events": self.clamp_events,
            "empty_draws": self.empty_draws,
            "n_avg": self.n_avg,
            "cache_size": self.cache_size,
            "baseline": self.baseline,
            "cg_iters_total": self.cg_iters_total,
            "cg_iters_max": self.cg_iters_max,
        }


class DppPosteriorFamily:
    """Variational family: DPP with fixed similarity features."""

    kind = "dpp"

    def __init__(self, phi: SimilarityFactor):
        self.phi = phi
        self._cache_key: bytes | None = None
        self._cache_ens: LEnsemble | None = None

    def ensemble(self, theta: np.ndarray) -> LEnsemble:
        key = theta.tobytes()
        if key != self._cache_key:
            self._cache_ens = LEnsemble(self.phi, theta)
            self._cache_key = key
        return self._cache_ens

    def sample(self, theta: np.ndarray, rng: np.random.Generator) -> Subset:
        return dpp_sample(self.ensemble(theta), rng)

    def marginals(self, theta: np.ndarray) -> np.ndarray:
        return inclusion_probabilities(self.ensemble(theta))

    def second_moment(self, theta: np.ndarray) -> np.ndarray:
        k = marginal_kernel(self.ensemble(theta)).k
        return _pair_inclusion(k)

    def expected_cardinality(self, theta: np.ndarray) -> float:
        # summing the marginals keeps the trace identity exact against
        # reported inclusion probabilities
        return float(np.sum(self.marginals(theta)))


class BernoulliPosteriorFamily:
    """Variational family: independent Bernoulli inclusions (identity features)."""

    kind = "bernoulli"

    def __init__(self, m: int):
        self.m = m

    def sample(self, theta: np.ndarray, rng: np.random.Generator) -> Subset:
        draws = rng.random(self.m) < expit(theta)
        return Subset.from_indicator(draws)

    def marginals(self, theta: np.ndarray) -> np.ndarray:
        return expit(theta)

    def second_moment(self, theta: np.ndarray) -> np.ndarray:
        return _pair_inclusion(np.diag(expit(theta)))

    def expected_cardinality(self, theta: np.ndarray) -> float:
        return float(np.sum(expit(theta)))


def _pair_inclusion(k: np.ndarray) -> np.ndarray:
    """Exact E[gamma gamma^T] implied by a marginal kernel: co-inclusion
    probabilities K_ii K_jj - K_ij^2 off the diagonal, inclusions on it.
    Always positive semidefinite, unlike K itself in the augmented system."""
    diag = np.diag(k)
    moment = np.outer(diag, diag) - k**2
    np.fill_diagonal(moment, diag)
    return moment


def solve_linear(
    c_mat: np.ndarray,
    g_vec: np.ndarray,
    warm_start: np.ndarray | None = None,
    cg_tolerance: float = 1e-10,
    cg_max_iters: int = 500,
    ridge_eps: float = 1e-10,
) -> tuple[np.ndarray, int]:
    """Solve C theta = g by conjugate gradient with a warm start.

    If CG stagnates (numerically singular C), retries on C + ridge*I with
    ridge = ridge_eps * tr(C) / n, escalating the ridge tenfold at most three
    times before raising. Returns (solution, total CG iterations).
    """
    g_vec = np.asarray(g_vec, dtype=float)
    n = g_vec.shape[0]
    g_norm = float(np.linalg.norm(g_vec))
    if g_norm == 0.0:
        return np.zeros(n), 0
    x0 = np.zeros(n) if warm_start is None else np.asarray(warm_start, dtype=float)
    base_ridge = ridge_eps * float(np.trace(c_mat)) / n
    ridge = 0.0
    total_iters = 0
    for attempt in range(4):
        a_mat = c_mat if ridge == 0.0 else c_mat + ridge * np.eye(n)
        x, iters, ok = _cg(a_mat, g_vec, x0, cg_tolerance * g_norm, cg_max_iters)
        total_iters += iters
        if ok:
            return x, total_iters
        x0 = x
        ridge = base_ridge if ridge == 0.0 else ridge * 10.0
    raise NumericalError(
        "conjugate gradient failed to converge after ridge escalation"
    )


def _cg(a_mat, b_vec, x0, abs_tol, max_iters):
    x = x0.copy()
    r = b_vec - a_mat @ x
    if np.linalg.norm(r) <= abs_tol:
        return x, 0, True
    p = r.copy()
    rs = float(r @ r)
    for it in range(1, max_iters + 1):
        ap = a_mat @ p
        denom = float(p @ ap)
        if not np.isfinite(denom) or denom <= 0.0:
            return x, it - 1, False
        step = rs / denom
        x = x + step * p
        r = r - step * ap
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= abs_tol:
            resid = float(np.linalg.norm(b_vec - a_mat @ x))
            return x, it, resid <= abs_tol * 1.001 or resid <= abs_tol + 1e-300
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, max_iters, False


def init_state(phi: SimilarityFactor, config: LearnerConfig) -> LearnerState:
    """Calibrated starting point: uniform log-quality theta0 with the target
    expected cardinality; C starts diagonal at the initial inclusion
    probabilities (constant coordinate 1) and g = C theta."""
    theta0 = calibrate_theta0(phi, config.kappa)
    m = phi.m
    theta_tilde = np.full(m + 1, theta0)
    ens = LEnsemble(phi, np.full(m, theta0))
    diag = np.append(inclusion_probabilities(ens), 1.0)
    c_mat = np.diag(diag)
    g_vec = c_mat @ theta_tilde
    return LearnerState(
        theta_tilde=theta_tilde,
        c_mat=c_mat,
        g_vec=g_vec,
        iter=0,
        avg_c=np.zeros((m + 1, m + 1)),
        avg_g=np.zeros(m + 1),
        n_avg=0,
        theta0=theta0,
    )


def step(
    state: LearnerState,
    joint_log_fn,
    q_family,
    config: LearnerConfig,
    rng: np.random.Generator,
) -> LearnerState:
    """One stochastic update; mutates and returns ``state``."""
    m = state.m
    w = config.resolved_step_size()
    theta = state.theta_tilde[:m]
    gamma = q_family.sample(theta, rng)
    if len(gamma) == 0:
        state.empty_draws += 1
    value = float(joint_log_fn(gamma))

    # Running-mean baseline: constant shifts of joint_log cancel exactly.
    if state.baseline_n == 0:
        state.baseline = value
    centered = value - state.baseline
    state.baseline += (value - state.baseline) / (state.baseline_n + 1)
    state.baseline_n += 1

    gt = np.append(gamma.indicator(m), 1.0)
    g_hat = gt * centered
    c_emp = np.outer(gt, gt)
    if config.c_estimator == "empirical_outer_product":
        c_run = c_emp
    else:
        # Analytic expectation of the outer product under the current
        # posterior; it smooths the running system only, while the
        # second-half averages keep the empirical pairing with g_hat.
        c_run = np.empty((m + 1, m + 1))
        second = q_family.second_moment(theta)
        c_run[:m, :m] = second
        diag = np.diag(second)
        c_run[:m, m] = diag
        c_run[m, :m] = diag
        c_run[m, m] = 1.0

    state.g_vec = (1.0 - w) * state.g_vec + w * g_hat
    state.c_mat = (1.0 - w) * state.c_mat + w * c_run
    solution, iters = solve_linear(
        state.c_mat,
        state.g_vec,
        warm_start=state.theta_tilde,
        cg_tolerance=config.cg_tolerance,
        cg_max_iters=config.cg_max_iters,
        ridge_eps=config.ridge_eps,
    )
    clipped = np.clip(solution[:m], -config.theta_clamp, config.theta_clamp)
    if np.any(clipped != solution[:m]):
        state.clamp_events += 1
    solution[:m] = clipped
    state.theta_tilde = solution
    state.cg_iters.append(iters)
    state.theta_norms.append(float(np.linalg.norm(solution)))
    state.iter += 1
    if state.iter > config.n_iters / 2.0:
        state.avg_c += c_emp
        state.avg_g += g_hat
        state.n_avg += 1
    return state


def _build_prior_and_family(model: SpikeSlabModel, phi: SimilarityFactor, config: LearnerConfig):
    if config.mode == "bernoulli_dpp":
        alpha = config.alpha if config.alpha is not None else config.kappa / model.m
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"implied alpha={alpha} outside (0, 1); set alpha explicitly")
        prior = BernoulliPrior(alpha, model.m)
        posterior_phi = phi
    else:
        prior_theta0 = calibrate_theta0(phi, config.kappa)
        prior = DppPrior(LEnsemble(phi, np.full(model.m, prior_theta0)))
        posterior_phi = SimilarityFactor.identity(model.m)
    if posterior_phi.is_identity():
        family = BernoulliPosteriorFamily(model.m)
    else:
        family = DppPosteriorFamily(posterior_phi)
    return prior, posterior_phi, family


def run(
    model: SpikeSlabModel,
    phi: SimilarityFactor,
    config: LearnerConfig,
) -> tuple[np.ndarray, LearnerReport]:
    """Fit the variational posterior; returns (theta, diagnostics).

    theta parameterizes a DPP over the similarity features in
    ``bernoulli_dpp`` mode and per-feature Bernoulli logits in
    ``dpp_bernoulli`` mode. Deterministic for a fixed config seed.
    """
    if not isinstance(phi, SimilarityFactor):
        phi = SimilarityFactor(phi)
    if phi.m != model.m:
        raise ValueError(
            f"similarity factor covers {phi.m} items but model has {model.m} features"
        )
    prior, posterior_phi, family = _build_prior_and_family(model, phi, config)
    rng = np.random.default_rng(config.seed)
    cache: dict[tuple[int, ...], float] = {}

    def joint(gamma: Subset) -> float:
        key = gamma.indices
        if key not in cache:
            cache[key] = restricted_marginal_loglik(model, gamma) + prior.log_prob(gamma)
        return cache[key]

    state = init_state(posterior_phi, config)
    for _ in range(config.n_iters):
        step(state, joint, family, config, rng)

    solution, _ = solve_linear(
        state.avg_c,
        state.avg_g,
        warm_start=state.theta_tilde,
        cg_tolerance=config.cg_tolerance,
        cg_max_iters=config.cg_max_iters,
        ridge_eps=config.ridge_eps,
    )
    theta = np.clip(solution[:model.m], -config.theta_clamp, config.theta_clamp)
    clamped_final = int(np.any(theta != solution[:model.m]))
    residual = float(
        np.linalg.norm(state.avg_c @ solution - state.avg_g)
        / max(np.linalg.norm(state.avg_g), 1e-300)
    )
    report = LearnerReport(
        mode=config.mode,
        theta0=state.theta0,
        theta_aug=float(solution[model.m] + state.baseline),
        expected_cardinality_final=family.expected_cardinality(theta),
        final_residual=residual,
        clamp_events=state.clamp_events + clamped_final,
        empty_draws=state.empty_draws,
        n_avg=state.n_avg,
        cache_size=len(cache),
        baseline=state.baseline,
        cg_iters_total=int(np.sum(state.cg_iters)),
        cg_iters_max=int(np.max(state.cg_iters)) if state.cg_iters else 0,
        theta_norms=tuple(state.theta_norms),
    )
    return theta, report


def fitted_family(phi: SimilarityFactor, mode: str):
    """Posterior family object matching a fitted theta vector."""
    if mode == "bernoulli_dpp":
        if phi.is_identity():
            return BernoulliPosteriorFamily(phi.m)
        return DppPosteriorFamily(phi)
    return BernoulliPosteriorFamily(phi.m)


def map_subset(phi: SimilarityFactor, theta: np.ndarray, mode: str) -> Subset:
    """MAP extraction: greedy log-determinant gains for a DPP posterior,
    threshold at probability 1/2 for a Bernoulli posterior."""
    if mode == "bernoulli_dpp" and not phi.is_identity():
        return greedy_map(LEnsemble(phi, theta))
    return Subset(tuple(int(i) for i in np.flatnonzero(theta > 0.0)))


def alternative_subsets(
    phi: SimilarityFactor,
    theta: np.ndarray,
    mode: str,
    rng: np.random.Generator,
    n_draws: int = 200,
    keep: int = 5,
    exclude: Subset | None = None,
) -> list[tuple[Subset, float]]:
    """Distinct high-probability subsets found by sampling the fitted
    posterior, ranked by their normalized log-probability."""
    family = fitted_family(phi, mode)
    if family.kind == "dpp":
        ens = family.ensemble(theta)

        def score(gamma: Subset) -> float:
            return subset_log_prob(ens, gamma, normalized=True)

    else:
        probs = expit(theta)
        log_p = np.log(probs)
        log_q = np.log1p(-probs)

        def score(gamma: Subset) -> float:
            ind = gamma.indicator(phi.m)
            return float(ind @ log_p + (1.0 - ind) @ log_q)

    seen: dict[tuple[int, ...], float] = {}
    for _ in range(n_draws):
        gamma = family.sample(theta, rng)
        if gamma.indices not in seen:
            seen[gamma.indices] = score(gamma)
    if exclude is not None:
        seen.pop(exclude.indices, None)
    ranked = sorted(seen.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(Subset(idx), val) for idx, val in ranked[:keep]]


def build_selection(
    model: SpikeSlabModel,
    phi: SimilarityFactor,
    config: LearnerConfig,
    theta: np.ndarray,
    report: LearnerReport,
):
    """Assemble a SelectionReport from a fitted theta (no refitting)."""
    from dataclasses import asdict

    from .metrics import metrics_diversity
    from .report import SelectionReport

    family = fitted_family(phi, config.mode)
    selected = map_subset(phi, theta, config.mode)
    marginals = family.marginals(theta)
    rng = np.random.default_rng([config.seed, 1])
    alternatives = alternative_subsets(
        phi, theta, config.mode, rng, exclude=selected
    )
    diversity, _ = metrics_diversity(phi.gram(), selected)
    return SelectionReport(
        method=config.mode,
        selected=selected.indices,
        n_items=model.m,
        seed=config.seed,
        config=asdict(config),
        inclusion_marginals=[float(v) for v in marginals],
        diversity_logdet=diversity,
        alternatives=[
            {"indices": list(sub.indices), "log_prob": float(val)}
            for sub, val in alternatives
        ],
        column_names=list(model.feature_names) if model.feature_names else None,
        diagnostics=report.to_dict(),
    )


def select(
    model: SpikeSlabModel,
    phi: SimilarityFactor,
    config: LearnerConfig,
):
    """Fit the posterior, extract the MAP subset, and report marginals,
    diversity, and alternative high-probability subsets."""
    theta, report = run(model, phi, config)
    return build_selection(model, phi, config, theta, report)


def model_artifact(
    theta: np.ndarray,
    phi: SimilarityFactor,
    config: LearnerConfig,
    report: LearnerReport,
    phi_source: str = "inline",
) -> dict:
    """Serializable description of a fitted posterior, sufficient to rebuild
    it (similarity features inline) without refitting."""
    return {
        "schema_version": "1",
        "mode": config.mode,
        "theta": [float(v) for v in theta],
        "theta0": report.theta0,
        "kappa": config.kappa,
        "seed": config.seed,
        "n_iters": config.n_iters,
        "phi_source": {
            "source": phi_source,
            "m": phi.m,
            "d": phi.d,
            "phi": [float(v) for v in phi.phi.ravel()],
        },
        "diagnostics": report.to_dict(),
    }


def load_artifact_posterior(artifact: dict) -> tuple[SimilarityFactor, np.ndarray, str]:
    source = artifact["phi_source"]
    phi = SimilarityFactor(
        np.array(source["phi"], dtype=float).reshape(source["m"], source["d"])
    )
    theta = np.array(artifact["theta"], dtype=float)
    return phi, theta, artifact["mode"]
