"""Dense symmetric eigendecomposition, PSD splits, and cached sparse solves."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# Eigenvalues below this (scaled) magnitude are treated as zero when
# splitting, so the split does not flap on numerically zero spectra.
SPLIT_EIG_TOL = 1e-12


class NotSymmetricPositiveDefiniteError(ValueError):
    """Raised when a factorization encounters a non-positive pivot."""


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def eig_sym(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    m = np.asarray(m, dtype=np.float64)
    if not np.isfinite(m).all():
        raise ValueError("matrix contains non-finite entries")
    res = np.linalg.eigh(m)
    return res.eigenvalues, res.eigenvectors


def split_from_decomp(
    lam: np.ndarray, vecs: np.ndarray, norm_hint: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """PSD/NSD parts from a precomputed eigendecomposition.

    Eigenvalues within SPLIT_EIG_TOL * max(1, ||m||_F) of zero count as zero
    and contribute to neither part.
    """
    if norm_hint is None:
        norm_hint = float(np.sqrt(np.square(lam).sum()))
    tol = SPLIT_EIG_TOL * max(1.0, norm_hint)
    lam_pos = np.where(lam > tol, lam, 0.0)
    lam_neg = np.where(lam < -tol, lam, 0.0)
    plus = symmetrize((vecs * lam_pos) @ vecs.T)
    minus = symmetrize((vecs * lam_neg) @ vecs.T)
    return plus, minus


def psd_split(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a symmetric matrix into its PSD and NSD parts (m_plus + m_minus = m)."""
    lam, vecs = eig_sym(m)
    return split_from_decomp(lam, vecs, norm_hint=float(np.linalg.norm(m)))


class SparseFactorization:
    """Cached factorization of a sparse SPD matrix for repeated solves.

    Backed by a SuperLU decomposition run in symmetric mode; construction
    fails with NotSymmetricPositiveDefiniteError if any pivot is not
    positive, which for our use signals a broken cut-pool Gram matrix.
    """

    def __init__(self, a: sp.spmatrix):
        a = sp.csc_matrix(a)
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix is not square: {a.shape}")
        self.n = a.shape[0]
        if self.n == 0:
            self._lu = None
            return
        if not np.isfinite(a.data).all():
            raise ValueError("matrix contains non-finite entries")
        self._lu = spla.splu(
            a, diag_pivot_thresh=0.0, options={"SymmetricMode": True}
        )
        pivots = self._lu.U.diagonal()
        if pivots.size and pivots.min() <= SPLIT_EIG_TOL * max(1.0, pivots.max()):
            raise NotSymmetricPositiveDefiniteError(
                f"non-positive pivot {pivots.min():.3e} in factorization"
            )

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self.n,):
            raise ValueError(f"rhs has length {b.shape}, expected ({self.n},)")
        if self.n == 0:
            return np.empty(0)
        return self._lu.solve(b)


def factorize_spd(a: sp.spmatrix) -> SparseFactorization:
    return SparseFactorization(a)


def solve(f: SparseFactorization, b: np.ndarray) -> np.ndarray:
    return f.solve(b)
