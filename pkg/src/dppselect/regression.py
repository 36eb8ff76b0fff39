"""Spike-and-slab linear regression with conjugate priors.

Coefficients restricted to a subset gamma get a Gaussian prior with
precision ``c * I`` scaled by the noise variance, the noise variance gets an
inverse-gamma(a0, b0) prior, and inclusion gets either an exchangeable
Bernoulli prior or a DPP prior. With beta and sigma^2 integrated out the
evidence p(y | gamma) is available in closed form, so subset scores never
require sampling the coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import gammaln

from .dpp import LEnsemble, Subset, as_subset, subset_log_prob
from .errors import NumericalError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class SpikeSlabModel:
    """Design matrix, response, and conjugate hyperparameters.

    ``ridge_scale`` is the coefficient-prior precision scale c (prior
    covariance sigma^2 / c per included coefficient), ``a0``/``b0`` the
    inverse-gamma noise parameters, ``alpha`` the Bernoulli inclusion
    probability.
    """

    design: np.ndarray
    response: np.ndarray
    ridge_scale: float = 1.0
    a0: float = 0.01
    b0: float = 0.01
    alpha: float = 0.5
    feature_names: tuple[str, ...] | None = None
    response_name: str | None = None

    def __post_init__(self):
        x = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float).reshape(-1)
        if x.ndim != 2:
            raise ValueError("design must be a 2-D array")
        if x.shape[0] != y.shape[0]:
            raise ValueError(
                f"design has {x.shape[0]} rows but response has {y.shape[0]}"
            )
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("design must have at least one row and column")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("design/response contain non-finite entries")
        if self.ridge_scale <= 0 or self.a0 <= 0 or self.b0 <= 0:
            raise ValueError("ridge_scale, a0, b0 must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if self.feature_names is not None and len(self.feature_names) != x.shape[1]:
            raise ValueError("feature_names length must match design columns")
        x = x.copy()
        y = y.copy()
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "design", x)
        object.__setattr__(self, "response", y)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def m(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class RestrictedPosterior:
    """Posterior over coefficients restricted to the selected columns."""

    mu_n: np.ndarray
    lambda_n: np.ndarray
    a_n: float
    b_n: float
    gamma: Subset


def _chol_with_jitter(mat: np.ndarray):
    """Cholesky with a single jittered retry; c > 0 makes failure pathological."""
    try:
        return cho_factor(mat, lower=True)
    except LinAlgError:
        jitter = 1e-10 * np.trace(mat) / mat.shape[0]
        try:
            return cho_factor(mat + jitter * np.eye(mat.shape[0]), lower=True)
        except LinAlgError as exc:
            raise NumericalError(
                "restricted Gram matrix is not positive definite even after jitter"
            ) from exc


def _restricted_stats(model: SpikeSlabModel, idx: list[int]):
    """Shared posterior quantities for the selected columns.

    Returns (cho, mu, logdet_lambda_n, a_n, b_n, lambda_n); cho, mu and
    lambda_n are None/empty for the empty subset.
    """
    y = model.response
    a_n = model.a0 + model.n / 2.0
    if not idx:
        b_n = model.b0 + 0.5 * float(y @ y)
        return None, None, 0.0, a_n, b_n, np.zeros((0, 0))
    xg = model.design[:, idx]
    lam_n = xg.T @ xg + model.ridge_scale * np.eye(len(idx))
    cho = _chol_with_jitter(lam_n)
    xty = xg.T @ y
    mu = cho_solve(cho, xty)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    b_n = model.b0 + 0.5 * float(y @ y - mu @ xty)
    if not np.isfinite(b_n) or b_n <= 0.0:
        raise NumericalError("ill-conditioned restricted regression (b_n <= 0)")
    return cho, mu, logdet, a_n, b_n, lam_n


def restricted_marginal_loglik(model: SpikeSlabModel, gamma) -> float:
    """Closed-form log p(y | gamma) for the restricted regression."""
    gamma = as_subset(gamma)
    idx = list(gamma.indices)
    if idx and idx[-1] >= model.m:
        raise IndexError(f"subset index {idx[-1]} out of range for m={model.m}")
    _, _, logdet, a_n, b_n, _ = _restricted_stats(model, idx)
    k = len(idx)
    value = (
        -0.5 * model.n * LOG_2PI
        + 0.5 * (k * np.log(model.ridge_scale) - logdet)
        + model.a0 * np.log(model.b0)
        - a_n * np.log(b_n)
        + gammaln(a_n)
        - gammaln(model.a0)
    )
    if not np.isfinite(value):
        raise NumericalError("non-finite restricted marginal log-likelihood")
    return float(value)


def bernoulli_log_prior(gamma, alpha: float, m: int) -> float:
    """Exchangeable Bernoulli prior: |gamma| log a + (M - |gamma|) log(1 - a)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    size = len(as_subset(gamma))
    return size * float(np.log(alpha)) + (m - size) * float(np.log1p(-alpha))


def dpp_log_prior(gamma, prior_kernel: LEnsemble) -> float:
    """Normalized subset log-probability under a DPP prior kernel."""
    return subset_log_prob(prior_kernel, gamma, normalized=True)


@dataclass(frozen=True)
class BernoulliPrior:
    alpha: float
    m: int

    def log_prob(self, gamma) -> float:
        return bernoulli_log_prior(gamma, self.alpha, self.m)


@dataclass(frozen=True)
class DppPrior:
    kernel: LEnsemble

    def log_prob(self, gamma) -> float:
        return dpp_log_prior(gamma, self.kernel)


def joint_log(model: SpikeSlabModel, gamma, prior) -> float:
    """log p(y, gamma) = log p(y | gamma) + log p(gamma)."""
    return restricted_marginal_loglik(model, gamma) + prior.log_prob(gamma)


def posterior_beta(model: SpikeSlabModel, gamma) -> RestrictedPosterior:
    """Posterior mean/precision for the selected coefficients."""
    gamma = as_subset(gamma)
    idx = list(gamma.indices)
    if idx and idx[-1] >= model.m:
        raise IndexError(f"subset index {idx[-1]} out of range for m={model.m}")
    _, mu, _, a_n, b_n, lam_n = _restricted_stats(model, idx)
    if mu is None:
        mu = np.zeros(0)
    return RestrictedPosterior(mu, lam_n, a_n, b_n, gamma)


def predict(model: SpikeSlabModel, gamma, x_new) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-predictive mean and variance at new design rows.

    Variance is the Student-t predictive scale
    (b_n / a_n) * (1 + diag(x Lambda_n^{-1} x^T)).
    """
    gamma = as_subset(gamma)
    x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
    if x_new.shape[1] != model.m:
        raise ValueError(
            f"x_new has {x_new.shape[1]} columns, expected {model.m}"
        )
    idx = list(gamma.indices)
    cho, mu, _, a_n, b_n, _ = _restricted_stats(model, idx)
    scale = b_n / a_n
    if not idx:
        return np.zeros(x_new.shape[0]), np.full(x_new.shape[0], scale)
    xn = x_new[:, idx]
    mean = xn @ mu
    solved = cho_solve(cho, xn.T)
    quad = np.einsum("ij,ji->i", xn, solved)
    return mean, scale * (1.0 + quad)


@dataclass(frozen=True)
class CredibleSummary:
    """Per-point predictive summary across posterior subset draws."""

    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    between_variance: np.ndarray
    within_variance: np.ndarray
    level: float
    draws: int = field(default=0)


def credible_interval(
    q_posterior: LEnsemble,
    model: SpikeSlabModel,
    x_new,
    n_draws: int = 400,
    level: float = 0.95,
    rng: np.random.Generator | None = None,
) -> CredibleSummary:
    """Sample subsets from the fitted posterior and summarize predictions.

    The interval is the symmetric quantile interval of per-draw predictive
    means; spread across subset draws and average within-subset predictive
    variance are reported separately.
    """
    from .dpp import sample as dpp_sample

    if n_draws < 100:
        raise ValueError("n_draws must be at least 100")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    if rng is None:
        rng = np.random.default_rng()
    x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
    cache: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}
    means = np.empty((n_draws, x_new.shape[0]))
    within = np.zeros(x_new.shape[0])
    for t in range(n_draws):
        gamma = dpp_sample(q_posterior, rng)
        key = gamma.indices
        if key not in cache:
            cache[key] = predict(model, gamma, x_new)
        mean_t, var_t = cache[key]
        means[t] = mean_t
        within += var_t
    within /= n_draws
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(means, [tail, 1.0 - tail], axis=0)
    return CredibleSummary(
        mean=means.mean(axis=0),
        lower=lower,
        upper=upper,
        between_variance=means.var(axis=0),
        within_variance=within,
        level=level,
        draws=n_draws,
    )


def mc_evidence_oracle(
    model: SpikeSlabModel,
    gamma,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 100_000,
) -> tuple[float, float]:
    """Brute-force evidence estimate by averaging the likelihood over prior
    draws of (sigma^2, beta); returns (log estimate, std error of the log).

    Deliberately ignorant of the closed form so it can serve as an
    independent check on it.
    """
    gamma = as_subset(gamma)
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10000")
    idx = list(gamma.indices)
    y = model.response
    n = model.n
    xg = model.design[:, idx] if idx else None
    log_weights = np.empty(n_samples)
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        sigma2 = model.b0 / rng.gamma(model.a0, 1.0, size=size)
        if idx:
            beta = np.sqrt(sigma2 / model.ridge_scale)[:, None] * rng.standard_normal(
                (size, len(idx))
            )
            resid = y[None, :] - beta @ xg.T
        else:
            resid = np.broadcast_to(y, (size, n))
        rss = np.einsum("ij,ij->i", resid, resid)
        log_weights[done : done + size] = (
            -0.5 * n * (LOG_2PI + np.log(sigma2)) - 0.5 * rss / sigma2
        )
        done += size
    shift = log_weights.max()
    weights = np.exp(log_weights - shift)
    mean_w = float(weights.mean())
    if not np.isfinite(mean_w) or mean_w <= 0.0:
        raise NumericalError("degenerate Monte Carlo evidence estimate")
    estimate = shift + float(np.log(mean_w))
    std_err = float(weights.std(ddof=1)) / (np.sqrt(n_samples) * mean_w)
    return estimate, std_err
