"""Selection-quality metrics shared by the learner, baselines, and drivers."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import pdist

from .dpp import LEnsemble, as_subset


def metrics_diversity(
    similarity,
    subset,
    coordinates=None,
) -> tuple[float, float | None]:
    """Log-determinant of the similarity submatrix for a selected subset.

    ``similarity`` may be an LEnsemble or a dense symmetric kernel. Singular
    submatrices report -inf rather than raising. When ``coordinates`` are
    provided (one row per item) the mean pairwise distance among selected
    items is returned as the second element, else None.
    """
    if isinstance(similarity, LEnsemble):
        kernel = similarity.dense_kernel()
    else:
        kernel = np.asarray(similarity, dtype=float)
    subset = as_subset(subset)
    idx = list(subset.indices)
    if idx and idx[-1] >= kernel.shape[0]:
        raise IndexError(f"subset index {idx[-1]} out of range")
    if not idx:
        logdet = 0.0
    else:
        sign, value = np.linalg.slogdet(kernel[np.ix_(idx, idx)])
        logdet = float(value) if sign > 0 else -np.inf
    distance = None
    if coordinates is not None:
        coords = np.asarray(coordinates, dtype=float)
        if len(idx) >= 2:
            distance = float(np.mean(pdist(coords[idx])))
        else:
            distance = 0.0
    return logdet, distance


def mean_squared_error(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    return float(np.mean((y_true - y_pred) ** 2))
