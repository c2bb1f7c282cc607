"""Pure-numpy implementation of the per-voxel weight-update kernel.

Fallback for :mod:`reloreta._block_cy`; both expose ``block_sqrt_gram`` with
identical semantics.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def block_sqrt_gram(htb: np.ndarray, p: np.ndarray, rel_tol: float = 1e-12):
    """Per-voxel symmetric square roots of H_i^T P H_i and their inverses.

    Parameters
    ----------
    htb : (K, 3, M) array, H_i^T stacked per voxel.
    p : (M, M) symmetric matrix.
    rel_tol : eigenvalues below rel_tol * (largest eigenvalue of the block)
        are treated as zero (pseudoinverted to zero).

    Returns
    -------
    w : (K, 3, 3) block square roots B_i^(1/2).
    winv : (K, 3, 3) their pseudoinverses B_i^(-1/2).
    """
    a = htb @ p  # (K, 3, M)
    b = a @ htb.transpose(0, 2, 1)  # (K, 3, 3)
    b = 0.5 * (b + b.transpose(0, 2, 1))
    lam, v = np.linalg.eigh(b)
    lam = np.clip(lam, 0.0, None)
    thresh = rel_tol * lam[:, -1:]
    s = np.sqrt(lam)
    sinv = np.where(lam > thresh, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    w = (v * s[:, None, :]) @ v.transpose(0, 2, 1)
    winv = (v * sinv[:, None, :]) @ v.transpose(0, 2, 1)
    return w, winv
