"""Builders for the similarity feature matrix used by the DPP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .dpp import SimilarityFactor
from .errors import DataError

SOURCES = ("gram_of_design", "rbf_side_info", "identity")


@dataclass(frozen=True)
class SimilaritySpec:
    """How to derive similarity features for the M candidate items.

    gram_of_design: items are design columns, features are the unit-norm
    columns themselves (transposed), so the similarity kernel is the
    normalized Gram matrix and collinearity is penalized.
    rbf_side_info: a squared-exponential kernel over per-item side-info
    vectors, factored at the smallest rank meeting the reconstruction
    tolerance.
    identity: indicator features; the DPP factorizes and diversity is off.
    """

    source: str = "gram_of_design"
    side_info_path: str | None = None
    sigma: float | None = None
    rank_d: int | None = None
    reconstruction_tol: float = 0.01


def build_similarity(
    spec: SimilaritySpec,
    design: np.ndarray | None = None,
    side_info: np.ndarray | None = None,
) -> SimilarityFactor:
    if spec.source not in SOURCES:
        raise ValueError(f"similarity source must be one of {SOURCES}")
    if spec.source == "identity":
        if design is None:
            raise ValueError("identity similarity needs the design for its size")
        return SimilarityFactor.identity(np.asarray(design).shape[1])
    if spec.source == "gram_of_design":
        if design is None:
            raise ValueError("gram_of_design similarity requires the design matrix")
        x = np.asarray(design, dtype=float)
        norms = np.linalg.norm(x, axis=0)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DataError(f"design column {int(zero[0])} has zero norm")
        return SimilarityFactor((x / norms).T)
    # rbf_side_info
    if side_info is None:
        raise ValueError("rbf_side_info similarity requires side-info vectors")
    profiles = np.asarray(side_info, dtype=float)
    if profiles.ndim != 2:
        raise ValueError("side info must be a 2-D array (one row per item)")
    if design is not None and profiles.shape[0] != np.asarray(design).shape[1]:
        raise DataError(
            f"side info has {profiles.shape[0]} rows but the design has "
            f"{np.asarray(design).shape[1]} feature columns"
        )
    dist = pdist(profiles)
    sigma = spec.sigma if spec.sigma is not None else float(np.mean(dist))
    if sigma <= 0.0:
        raise DataError("RBF bandwidth must be positive (side info may be degenerate)")
    kernel = np.exp(-squareform(dist) ** 2 / sigma**2)
    return _factor_kernel(kernel, spec.rank_d, spec.reconstruction_tol)


def _factor_kernel(kernel: np.ndarray, rank_d: int | None, tol: float) -> SimilarityFactor:
    """Symmetric-eigendecompose and keep the smallest leading rank whose
    Frobenius reconstruction error is within tol (escalating if needed)."""
    m = kernel.shape[0]
    lam, vec = np.linalg.eigh((kernel + kernel.T) / 2.0)
    lam = lam[::-1]
    vec = vec[:, ::-1]
    total = float(np.sum(lam**2))
    tail = total - np.cumsum(lam**2)
    errors = np.sqrt(np.clip(tail, 0.0, None) / total)
    rank = rank_d if rank_d is not None else 1
    rank = max(1, min(rank, m))
    while rank < m and errors[rank - 1] > tol:
        rank += 1
    kept = np.clip(lam[:rank], 0.0, None)
    return SimilarityFactor(vec[:, :rank] * np.sqrt(kept))
