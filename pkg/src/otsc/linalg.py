"""Dense double-precision factorizations with pinned conventions.

Everything downstream (polar orthogonalization, the classical spectral
baseline, the QR comparison) relies on the guarantees fixed here: descending
spectra, orthonormal factors, a deterministic sign convention for QR, and
validated finite inputs. LAPACK (through numpy) does the heavy lifting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankError

__all__ = ["EigResult", "SvdResult", "sym_eig", "thin_svd", "qr_decompose", "as_matrix"]


def as_matrix(a, name: str = "a") -> np.ndarray:
    """Coerce to a 2-D float64 array and reject non-finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class EigResult:
    """Full spectrum of a symmetric matrix, eigenvalues nonincreasing.

    ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``; columns are
    orthonormal.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(s) @ v.T`` with nonincreasing ``s >= 0``."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.T


def sym_eig(a, tol: float = 1e-10) -> EigResult:
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric matrix; asymmetry beyond ``tol`` (scaled by the largest
        entry magnitude) is rejected.
    tol : float
        Symmetry tolerance.

    Returns
    -------
    EigResult
        Eigenvalues sorted nonincreasing with matching orthonormal columns.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m != n:
        raise ValueError(f"sym_eig requires a square matrix, got {m}x{n}")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > tol * scale:
        raise ValueError("sym_eig input is not symmetric within tolerance")
    evals, evecs = np.linalg.eigh(a)
    order = np.argsort(evals)[::-1]
    return EigResult(eigenvalues=evals[order], eigenvectors=evecs[:, order])


def thin_svd(a) -> SvdResult:
    """Thin SVD of a tall (or square) matrix.

    Requires ``m >= n``; callers with wide inputs transpose first. Returns
    exactly ``n`` factors.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        raise ValueError(f"thin_svd requires m >= n, got {m}x{n}; transpose at call site")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return SvdResult(u=u, singular_values=s, v=vt.T)


def qr_decompose(a) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with a nonnegative-diagonal sign convention on ``r``.

    Returns ``(q, r)`` with ``q`` of shape (m, n), ``q.T @ q = I`` and
    ``r`` upper-triangular with ``diag(r) >= 0`` (deterministic output).
    Raises :class:`RankError` when a diagonal entry of ``r`` falls at or
    below ``1e-12 * max|a|``.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        raise ValueError(f"qr_decompose requires m >= n, got {m}x{n}")
    q, r = np.linalg.qr(a, mode="reduced")
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    q = q * signs
    r = r * signs[:, None]
    if np.abs(np.diag(r)).min() <= 1e-12 * np.abs(a).max():
        raise RankError("qr_decompose input is numerically rank-deficient")
    return q, r
