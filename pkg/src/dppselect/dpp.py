"""Low-rank determinantal point processes over finite item sets.

The kernel is factored as ``L = diag(e^{theta/2}) phi phi^T diag(e^{theta/2})``
where the rows of ``phi`` (M x d) are per-item similarity features and
``theta`` holds per-item log-quality weights. All spectral work happens on
the d x d dual Gram matrix ``phi^T diag(e^theta) phi``, so costs scale with
the feature dimension d rather than the number of items M.

Subset probabilities are ``P(gamma) = det(L[gamma, gamma]) / det(L + I)``;
collinear similarity rows make joint selection unlikely, which is what
produces diverse subsets.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import expit

from .errors import NumericalError

# Dual eigenvalues below EIG_REL_TOL * lambda_max are treated as exact zeros.
# Symmetric eigensolvers are accurate to ~1e-16 * lambda_max, so this clamp
# removes numerical negatives without truncating real mid-scale eigenvalues
# even when the quality weights span a wide dynamic range.
EIG_REL_TOL = 1e-14


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


class SimilarityFactor:
    """Similarity feature matrix; row m is the feature vector of item m."""

    __slots__ = ("phi",)

    def __init__(self, phi):
        arr = _as_matrix(phi, "phi").copy()
        arr.setflags(write=False)
        self.phi = arr

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    @classmethod
    def identity(cls, m: int) -> "SimilarityFactor":
        return cls(np.eye(m))

    def is_identity(self) -> bool:
        return self.m == self.d and np.array_equal(self.phi, np.eye(self.m))

    def gram(self) -> np.ndarray:
        """Dense M x M similarity kernel phi @ phi.T."""
        g = self.phi @ self.phi.T
        return (g + g.T) / 2.0

    def __repr__(self) -> str:
        return f"SimilarityFactor(m={self.m}, d={self.d})"


@dataclass(frozen=True)
class Subset:
    """A selected set of item indices, kept sorted and duplicate-free."""

    indices: tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValueError("subset indices must be nonnegative")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("subset indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_iterable(cls, items) -> "Subset":
        return cls(tuple(sorted({int(i) for i in items})))

    @classmethod
    def from_indicator(cls, indicator) -> "Subset":
        vec = np.asarray(indicator)
        return cls(tuple(int(i) for i in np.flatnonzero(vec)))

    def indicator(self, m: int) -> np.ndarray:
        vec = np.zeros(m)
        if self.indices:
            vec[list(self.indices)] = 1.0
        return vec

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, item) -> bool:
        return int(item) in self.indices


def as_subset(gamma) -> Subset:
    if isinstance(gamma, Subset):
        return gamma
    return Subset.from_iterable(gamma)


@dataclass(frozen=True)
class MarginalKernel:
    """Symmetric M x M matrix whose diagonal holds inclusion probabilities."""

    k: np.ndarray

    @property
    def inclusion(self) -> np.ndarray:
        return np.diag(self.k).copy()


class LEnsemble:
    """Kernel ``diag(e^{theta/2}) phi phi^T diag(e^{theta/2})`` in factored form.

    Immutable after construction; the dual spectrum is computed once on first
    use (guarded by a lock) and shared by concurrent readers.
    """

    __slots__ = ("factor", "log_quality", "_b", "_spectrum", "_lock")

    def __init__(self, factor: SimilarityFactor, log_quality):
        if not isinstance(factor, SimilarityFactor):
            factor = SimilarityFactor(factor)
        theta = np.asarray(log_quality, dtype=float).reshape(-1).copy()
        if theta.shape[0] != factor.m:
            raise ValueError(
                f"log_quality has length {theta.shape[0]}, expected {factor.m}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("log_quality contains non-finite entries")
        b = factor.phi * np.exp(theta / 2.0)[:, None]
        if not np.all(np.isfinite(b)):
            raise ValueError("quality weights overflow the kernel factor")
        theta.setflags(write=False)
        b.setflags(write=False)
        self.factor = factor
        self.log_quality = theta
        self._b = b
        self._spectrum = None
        self._lock = threading.Lock()

    @property
    def m(self) -> int:
        return self.factor.m

    @property
    def d(self) -> int:
        return self.factor.d

    @property
    def b(self) -> np.ndarray:
        """Factor B with L = B @ B.T."""
        return self._b

    def dual_spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending, clamped) and eigenvectors of B.T @ B."""
        if self._spectrum is None:
            with self._lock:
                if self._spectrum is None:
                    dual = self._b.T @ self._b
                    dual = (dual + dual.T) / 2.0
                    lam, vec = np.linalg.eigh(dual)
                    lmax = lam[-1] if lam.size else 0.0
                    if lmax <= 0.0:
                        lam = np.zeros_like(lam)
                    else:
                        lam = np.where(lam < EIG_REL_TOL * lmax, 0.0, lam)
                    lam.setflags(write=False)
                    vec.setflags(write=False)
                    self._spectrum = (lam, vec)
        return self._spectrum

    def rank(self) -> int:
        lam, _ = self.dual_spectrum()
        return int(np.count_nonzero(lam > 0.0))

    def dense_kernel(self) -> np.ndarray:
        """Materialize the full M x M kernel (small-M paths only)."""
        l_mat = self._b @ self._b.T
        return (l_mat + l_mat.T) / 2.0

    def to_json(self) -> str:
        payload = {
            "m": self.m,
            "d": self.d,
            "phi": [float(v) for v in self.factor.phi.ravel()],
            "theta": [float(v) for v in self.log_quality],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LEnsemble":
        payload = json.loads(text)
        phi = np.array(payload["phi"], dtype=float).reshape(
            payload["m"], payload["d"]
        )
        return cls(SimilarityFactor(phi), np.array(payload["theta"], dtype=float))

    def __repr__(self) -> str:
        return f"LEnsemble(m={self.m}, d={self.d})"


def build_lensemble(phi, theta) -> LEnsemble:
    """Construct an ensemble from similarity features and log-qualities."""
    if not isinstance(phi, SimilarityFactor):
        phi = SimilarityFactor(phi)
    return LEnsemble(phi, theta)


def log_normalizer(ens: LEnsemble) -> float:
    """log det(L + I), evaluated in the dual space."""
    lam, _ = ens.dual_spectrum()
    return float(np.sum(np.log1p(lam)))


def subset_log_prob(ens: LEnsemble, gamma, normalized: bool = False) -> float:
    """log det(L[gamma, gamma]); -inf when the submatrix is singular.

    The empty subset has unnormalized log-probability 0 (empty determinant
    is 1). With ``normalized=True`` the log-normalizer is subtracted.
    """
    gamma = as_subset(gamma)
    idx = list(gamma.indices)
    if idx and idx[-1] >= ens.m:
        raise IndexError(f"subset index {idx[-1]} out of range for m={ens.m}")
    if not idx:
        value = 0.0
    elif len(idx) > ens.d:
        value = -np.inf
    else:
        rows = ens.b[idx]
        sub = rows @ rows.T
        sign, logdet = np.linalg.slogdet(sub)
        value = float(logdet) if sign > 0 else -np.inf
    if normalized:
        value -= log_normalizer(ens)
    return value


def marginal_kernel(ens: LEnsemble) -> MarginalKernel:
    """K = L (L + I)^{-1} via the dual spectrum."""
    lam, vec = ens.dual_spectrum()
    t = ens.b @ (vec / np.sqrt(1.0 + lam))
    k = t @ t.T
    return MarginalKernel((k + k.T) / 2.0)


def inclusion_probabilities(ens: LEnsemble) -> np.ndarray:
    """Diagonal of the marginal kernel without forming the full matrix."""
    lam, vec = ens.dual_spectrum()
    t = ens.b @ (vec / np.sqrt(1.0 + lam))
    return np.einsum("ij,ij->i", t, t)


def expected_cardinality(ens: LEnsemble) -> float:
    """trace K = sum_i lambda_i / (1 + lambda_i)."""
    lam, _ = ens.dual_spectrum()
    return float(np.sum(lam / (1.0 + lam)))


def calibrate_theta0(phi: SimilarityFactor, kappa: float) -> float:
    """Solve for the uniform log-quality giving expected cardinality kappa.

    With L = e^{theta0} phi phi^T the expected subset size is
    sum_i sigmoid(theta0 + log lambda_i) over the positive eigenvalues of
    phi phi^T, a strictly increasing function of theta0; the root is found
    by bisection after geometric bracket expansion.
    """
    if not isinstance(phi, SimilarityFactor):
        phi = SimilarityFactor(phi)
    mat = phi.phi
    gram = mat.T @ mat if mat.shape[1] <= mat.shape[0] else mat @ mat.T
    lam = np.linalg.eigvalsh((gram + gram.T) / 2.0)
    lmax = lam[-1] if lam.size else 0.0
    lam = lam[lam > max(lmax, 0.0) * EIG_REL_TOL]
    rank = lam.size
    if not 0.0 < kappa < rank:
        raise ValueError(
            f"target cardinality must lie strictly between 0 and rank={rank}, "
            f"got {kappa}"
        )
    log_lam = np.log(lam)

    def total(t: float) -> float:
        return float(np.sum(expit(t + log_lam)))

    lo, hi = -1.0, 1.0
    while total(lo) >= kappa:
        lo *= 2.0
    while total(hi) <= kappa:
        hi *= 2.0
    mid = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        value = total(mid)
        if abs(value - kappa) <= 1e-12:
            break
        if value < kappa:
            lo = mid
        else:
            hi = mid
    return mid


def _project_sample(eigvecs: np.ndarray, rng: np.random.Generator) -> list[int]:
    """Draw one item per selected eigenvector, orthogonalizing after each pick.

    ``eigvecs`` is M x k with orthonormal columns; returns exactly k distinct
    item indices.
    """
    m, k = eigvecs.shape
    v = eigvecs.copy()
    chosen: list[int] = []
    for remaining in range(k, 0, -1):
        weights = np.einsum("ij,ij->i", v, v)
        if chosen:
            weights[chosen] = 0.0
        weights = np.clip(weights, 0.0, None)
        total = weights.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise NumericalError("degenerate projection weights while sampling")
        item = int(rng.choice(m, p=weights / total))
        chosen.append(item)
        if remaining > 1:
            pivot_col = int(np.argmax(np.abs(v[item])))
            pivot = v[:, pivot_col].copy()
            if v[item, pivot_col] == 0.0:
                raise NumericalError("no usable pivot while orthogonalizing")
            coeff = v[item, :] / v[item, pivot_col]
            v = v - np.outer(pivot, coeff)
            v = np.delete(v, pivot_col, axis=1)
            v, _ = np.linalg.qr(v)
    return chosen


def sample(ens: LEnsemble, rng: np.random.Generator) -> Subset:
    """Draw an exact sample: pick dual eigenvectors independently with
    probability lambda / (1 + lambda), then run the projection phase."""
    lam, vec = ens.dual_spectrum()
    positive = np.flatnonzero(lam > 0.0)
    if positive.size == 0:
        return Subset(())
    probs = lam[positive] / (1.0 + lam[positive])
    picked = positive[rng.random(positive.size) < probs]
    if picked.size == 0:
        return Subset(())
    u = ens.b @ (vec[:, picked] / np.sqrt(lam[picked]))
    return Subset(tuple(sorted(_project_sample(u, rng))))


def _esp_table(lam: np.ndarray, k_max: int) -> np.ndarray:
    """Triangular table e[j, n] of elementary symmetric polynomials of the
    first n entries of lam, for j = 0..k_max."""
    n = lam.size
    table = np.zeros((k_max + 1, n + 1))
    table[0, :] = 1.0
    for col in range(1, n + 1):
        value = lam[col - 1]
        for j in range(1, k_max + 1):
            table[j, col] = table[j, col - 1] + value * table[j - 1, col - 1]
    return table


def elementary_symmetric(lambdas, k_max: int) -> np.ndarray:
    """e_j(lambda) for j = 0..k_max via the stable triangular recurrence."""
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if not np.all(np.isfinite(lam)) or np.any(lam < 0.0):
        raise ValueError("eigenvalues must be finite and nonnegative")
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    return _esp_table(lam, k_max)[:, -1].copy()


def sample_k(ens: LEnsemble, k: int, rng: np.random.Generator) -> Subset:
    """Draw a sample conditioned on cardinality exactly k.

    Exactly k dual eigenvectors are selected using elementary symmetric
    polynomial ratios, then the usual projection phase runs.
    """
    lam, vec = ens.dual_spectrum()
    rank = int(np.count_nonzero(lam > 0.0))
    if not 1 <= k <= rank:
        raise ValueError(f"k must lie in [1, rank={rank}], got {k}")
    order = np.argsort(lam)[::-1]
    lam_sorted = lam[order]
    scale = lam_sorted[0]
    lam_scaled = lam_sorted / scale  # esp ratios are scale-invariant
    table = _esp_table(lam_scaled, k)
    picked_sorted: list[int] = []
    remaining = k
    col = lam_sorted.size
    while remaining > 0:
        if col == remaining:
            marg = 1.0
        else:
            denom = table[remaining, col]
            if denom <= 0.0:
                col -= 1
                continue
            marg = lam_scaled[col - 1] * table[remaining - 1, col - 1] / denom
        if rng.random() < marg:
            picked_sorted.append(col - 1)
            remaining -= 1
        col -= 1
    picked = order[picked_sorted]
    u = ens.b @ (vec[:, picked] / np.sqrt(lam[picked]))
    return Subset(tuple(sorted(_project_sample(u, rng))))


def greedy_map(ens: LEnsemble) -> Subset:
    """Greedy MAP: repeatedly add the item with the largest log-determinant
    gain, stopping at the first strictly negative best gain.

    Zero-gain additions are accepted (they leave the subset probability
    unchanged); ties break to the lowest index. Uses an incremental Cholesky
    row update, O(M) per candidate scan.
    """
    l_mat = ens.dense_kernel()
    m = ens.m
    cond_var = np.diag(l_mat).astype(float).copy()
    rows = np.zeros((m, m))
    active = np.ones(m, dtype=bool)
    selected: list[int] = []
    while active.any():
        masked = np.where(active, cond_var, -np.inf)
        item = int(np.argmax(masked))
        best = masked[item]
        if not best >= 1.0:  # gain log(best) < 0, or NaN
            break
        depth = len(selected)
        new_row = l_mat[item, :] - rows[:depth, :].T @ rows[:depth, item]
        new_row /= math.sqrt(best)
        rows[depth, :] = new_row
        cond_var = cond_var - new_row**2
        selected.append(item)
        active[item] = False
    return Subset(tuple(sorted(selected)))


def greedy_map_k(ens: LEnsemble, k: int) -> Subset:
    """Greedy MAP at a fixed target cardinality.

    Like ``greedy_map`` but runs for exactly k picks regardless of gain sign
    (stopping early only when every remaining item has zero conditional
    volume). Used when methods are compared at a matched subset size.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    l_mat = ens.dense_kernel()
    m = ens.m
    cond_var = np.diag(l_mat).astype(float).copy()
    rows = np.zeros((m, m))
    active = np.ones(m, dtype=bool)
    selected: list[int] = []
    for _ in range(min(k, m)):
        masked = np.where(active, cond_var, -np.inf)
        item = int(np.argmax(masked))
        best = masked[item]
        if not best > 0.0:
            break
        depth = len(selected)
        new_row = l_mat[item, :] - rows[:depth, :].T @ rows[:depth, item]
        new_row /= math.sqrt(best)
        rows[depth, :] = new_row
        cond_var = cond_var - new_row**2
        selected.append(item)
        active[item] = False
    return Subset(tuple(sorted(selected)))


def exact_map_enumerate(ens: LEnsemble, m_limit: int = 20) -> Subset:
    """Exhaustive MAP over all 2^M subsets; lowest-lexicographic tie-break."""
    if ens.m > m_limit:
        raise ValueError(f"m={ens.m} exceeds enumeration limit {m_limit}")
    l_mat = ens.dense_kernel()
    best_val = 0.0  # empty subset
    best_idx: tuple[int, ...] = ()
    for size in range(1, ens.m + 1):
        for combo in combinations(range(ens.m), size):
            sub = l_mat[np.ix_(combo, combo)]
            sign, logdet = np.linalg.slogdet(sub)
            value = float(logdet) if sign > 0 else -np.inf
            if value > best_val or (value == best_val and combo < best_idx):
                best_val = value
                best_idx = combo
    return Subset(best_idx)
