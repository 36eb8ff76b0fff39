"""Classical selection baselines for comparison against the DPP posterior."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .dpp import SimilarityFactor, Subset
from .learner import LearnerConfig, run
from .regression import SpikeSlabModel, restricted_marginal_loglik


@dataclass(frozen=True)
class BaselineResult:
    selected: Subset
    path: tuple[tuple[int, float], ...]  # (feature index, score at selection)
    method: str


def omp(x, y, k: int) -> BaselineResult:
    """Orthogonal matching pursuit on unit-norm columns.

    Each round picks the column most correlated with the current residual,
    refits least squares on the selected set, and updates the residual. Stops
    early with a warning if the selected set goes rank deficient.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, m = x.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"k must lie in [1, {min(m, n)}], got {k}")
    norms = np.linalg.norm(x, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("design has a zero column")
    xs = x / norms
    resid = y.copy()
    chosen: list[int] = []
    path: list[tuple[int, float]] = []
    for _ in range(k):
        scores = np.abs(xs.T @ resid)
        if chosen:
            scores[chosen] = -np.inf
        j = int(np.argmax(scores))
        trial = chosen + [j]
        coef, _, rank, _ = np.linalg.lstsq(x[:, trial], y, rcond=None)
        if rank < len(trial):
            warnings.warn(
                f"OMP stopped early at {len(chosen)} features: adding column {j} "
                "makes the selected set rank deficient",
                stacklevel=2,
            )
            break
        chosen = trial
        path.append((j, float(scores[j])))
        resid = y - x[:, chosen] @ coef
    return BaselineResult(Subset.from_iterable(chosen), tuple(path), "omp")


def forward_select(model: SpikeSlabModel, k: int) -> BaselineResult:
    """Greedy forward selection maximizing the restricted marginal likelihood.

    Shares the Bayesian criterion with the DPP method so subset scores are
    commensurable; stops at k features or when no addition improves the
    evidence.
    """
    if not 1 <= k <= min(model.m, model.n):
        raise ValueError(f"k must lie in [1, {min(model.m, model.n)}], got {k}")
    current: list[int] = []
    current_val = restricted_marginal_loglik(model, Subset(()))
    path: list[tuple[int, float]] = []
    for _ in range(k):
        best_j, best_val = -1, -np.inf
        for j in range(model.m):
            if j in current:
                continue
            val = restricted_marginal_loglik(model, Subset.from_iterable(current + [j]))
            if val > best_val:
                best_j, best_val = j, val
        if best_val <= current_val:
            break
        current.append(best_j)
        current_val = best_val
        path.append((best_j, best_val))
    return BaselineResult(Subset.from_iterable(current), tuple(path), "forward_selection")


def meanfield_select(
    model: SpikeSlabModel,
    config: LearnerConfig,
    k: int | None = None,
) -> BaselineResult:
    """Mean-field spike-and-slab: Bernoulli prior with a fully factorized
    variational posterior (identity similarity features).

    Selection thresholds the fitted marginals at 1/2; when a target
    cardinality k is requested the top-k features by marginal are taken
    instead.
    """
    phi = SimilarityFactor.identity(model.m)
    cfg = replace(config, mode="bernoulli_dpp")
    theta, _ = run(model, phi, cfg)
    marginals = expit(theta)
    if k is None:
        chosen = np.flatnonzero(marginals > 0.5)
    else:
        k = min(k, model.m)
        order = np.lexsort((np.arange(model.m), -marginals))
        chosen = order[:k]
    ranked = sorted(chosen, key=lambda j: (-marginals[j], j))
    path = tuple((int(j), float(marginals[j])) for j in ranked)
    return BaselineResult(Subset.from_iterable(chosen), path, "meanfield")
