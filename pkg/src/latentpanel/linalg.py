"""Dense linear-algebra kernels shared by the estimation stages.

Provides annihilator (residual-maker) projections, covariance-based principal
component extraction with the F'F/T = I normalization, and the eigenvalue-ratio
rule for choosing the number of factors.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySpectrum,
    KTooLarge,
    NotSymmetric,
    RankDeficient,
)

# Relative rank tolerance for basis matrices.
RANK_RTOL = 1e-10
# Eigenvalues below this fraction of the largest are treated as exact zeros.
EIG_ZERO_RTOL = 1e-12


@dataclass(frozen=True)
class Projector:
    """Annihilator M = I - A(A'A)^{-1}A' for a full-column-rank basis A.

    ``annihilator`` is symmetric, idempotent and satisfies M @ source = 0.
    """

    source: np.ndarray
    annihilator: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Project x (T,) or (T, K) onto the orthogonal complement of source."""
        return self.annihilator @ x


@dataclass(frozen=True)
class FactorEstimate:
    """Leading principal components of a T x T covariance matrix.

    ``factors`` is T x K with the normalization factors' @ factors / T = I_K.
    ``eigenvalues`` are the K leading eigenvalues (descending, clipped at 0);
    ``explained_share[j]`` is eigenvalue j divided by the full trace.
    """

    factors: np.ndarray
    eigenvalues: np.ndarray
    explained_share: np.ndarray

    @property
    def n_factors(self) -> int:
        return self.factors.shape[1]

    @property
    def n_periods(self) -> int:
        return self.factors.shape[0]

    def annihilator(self) -> "Projector":
        """Annihilator of the factor space."""
        return annihilator(self.factors)


def annihilator(basis: np.ndarray) -> Projector:
    """Build the projection onto the orthogonal complement of ``basis``.

    Parameters
    ----------
    basis : (T, K) array with T > K and full column rank.

    Returns
    -------
    Projector with annihilator I_T - A(A'A)^{-1}A', computed via QR.
    """
    a = np.atleast_2d(np.asarray(basis, dtype=float))
    if a.ndim != 2:
        raise DimensionMismatch("basis must be a 2-D array")
    t, k = a.shape
    if k == 0:
        return Projector(source=a, annihilator=np.eye(t))
    if k >= t:
        raise DimensionMismatch(f"basis must be tall: T={t} <= K={k}")
    if not np.all(np.isfinite(a)):
        raise DimensionMismatch("basis contains non-finite entries")
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficient(
            f"basis is rank deficient (smallest/largest singular value "
            f"{s[-1]:.3e}/{s[0]:.3e})"
        )
    q, _ = np.linalg.qr(a)
    m = np.eye(t) - q @ q.T
    m = 0.5 * (m + m.T)
    return Projector(source=a, annihilator=m)


def extract_factors(covariance: np.ndarray, k: int) -> FactorEstimate:
    """Extract the k leading principal components of a covariance matrix.

    Eigenvector columns are scaled by sqrt(T) so that F'F/T = I_k, and each
    column is sign-flipped so its entry of largest magnitude is positive
    (factors are only identified up to rotation, so tests need a fixed
    convention).
    """
    c = np.asarray(covariance, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionMismatch("covariance must be square")
    t = c.shape[0]
    scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    if np.max(np.abs(c - c.T)) > 1e-8 * scale:
        raise NotSymmetric("covariance is not symmetric within 1e-8")
    k = int(k)
    if k < 1 or k >= t:
        raise KTooLarge(f"k={k} must satisfy 1 <= k < T={t}")
    # Symmetrize to guard against accumulation error in pooled sums.
    c = 0.5 * (c + c.T)
    eigvals, eigvecs = np.linalg.eigh(c)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    lam_max = eigvals[0] if eigvals[0] > 0 else 0.0
    eigvals = np.where(eigvals < EIG_ZERO_RTOL * lam_max, 0.0, eigvals)
    eigvals = np.clip(eigvals, 0.0, None)
    total = float(eigvals.sum())
    factors = eigvecs[:, :k] * np.sqrt(t)
    # Deterministic sign: largest-|entry| coordinate made positive.
    for j in range(k):
        col = factors[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            factors[:, j] = -col
    share = eigvals[:k] / total if total > 0 else np.zeros(k)
    return FactorEstimate(
        factors=factors,
        eigenvalues=eigvals[:k].copy(),
        explained_share=share,
    )


def eigenvalue_ratio_count(eigenvalues: np.ndarray, k_max: int) -> int:
    """Choose the factor count as argmax_{1<=k<=k_max} eigenvalue ratio k/(k+1).

    Ties break toward the smallest k; eigenvalues below 1e-12 of the largest
    are treated as zero, and a ratio with a zero denominator counts as +inf
    (a spectral gap down to numerical zero).
    """
    lam = np.asarray(eigenvalues, dtype=float)
    k_max = int(k_max)
    if lam.ndim != 1 or lam.size == 0:
        raise EmptySpectrum("eigenvalues must be a non-empty 1-D array")
    if k_max < 1 or lam.size <= k_max:
        raise EmptySpectrum(f"need more than k_max={k_max} eigenvalues, got {lam.size}")
    if np.any(lam < -EIG_ZERO_RTOL * max(lam[0], 0.0)) or np.any(np.diff(lam) > 1e-12 * max(lam[0], 1.0)):
        raise EmptySpectrum("eigenvalues must be non-negative and descending")
    if lam[0] <= 0:
        raise EmptySpectrum("all eigenvalues are zero")
    lam = np.where(lam < EIG_ZERO_RTOL * lam[0], 0.0, lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = lam[:k_max] / lam[1 : k_max + 1]
    # lam_k = 0 implies lam_{k+1} = 0 (descending): such k can never win.
    ratios = np.where(lam[:k_max] == 0.0, 0.0, ratios)
    return int(np.argmax(ratios)) + 1


def pooled_covariance(blocks: np.ndarray) -> np.ndarray:
    """Average outer product (1/(N*T)) sum_i x_i x_i' over unit blocks.

    ``blocks`` is (N, T, K) (or (N, T) for vectors); the result is T x T.
    """
    b = np.asarray(blocks, dtype=float)
    if b.ndim == 2:
        b = b[:, :, None]
    n, t, _ = b.shape
    acc = np.zeros((t, t))
    for i in range(n):
        acc += b[i] @ b[i].T
    acc /= n * t
    return 0.5 * (acc + acc.T)
