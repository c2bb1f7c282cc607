"""Small dense linear-algebra primitives used by the inverse solvers."""

from __future__ import annotations

import numpy as np


class NumericalError(RuntimeError):
    """Non-finite intermediate or failed decomposition."""


def centering_matrix(m: int) -> np.ndarray:
    """Average-reference operator I - (1/m) J; symmetric and idempotent."""
    if m < 2:
        raise ValueError(f"centering matrix needs m >= 2, got {m}")
    return np.eye(m) - np.full((m, m), 1.0 / m)


def pinv(a: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``rel_tol`` times the largest are treated as zero.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NumericalError("pinv input has non-finite entries")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    inv = np.where(s > rel_tol * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def sym_sqrt(a: np.ndarray, sym_tol: float = 1e-9) -> np.ndarray:
    """Symmetric PSD square root of a symmetric PSD 3x3 (or n x n) matrix.

    Eigenvalues in [-sym_tol, 0) are clamped to zero; a genuinely asymmetric
    or indefinite input raises.
    """
    a = np.asarray(a, dtype=float)
    scale = max(float(np.abs(a).max()), 1.0)
    if np.abs(a - a.T).max() > sym_tol * scale:
        raise ValueError("sym_sqrt requires a symmetric matrix")
    lam, v = np.linalg.eigh(a)
    if lam.min() < -sym_tol * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {lam.min():g})")
    lam = np.clip(lam, 0.0, None)
    return (v * np.sqrt(lam)) @ v.T
