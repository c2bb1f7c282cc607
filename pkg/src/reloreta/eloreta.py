"""eLORETA inverse solution: block-weight fixed point and inverse operator.

The per-voxel weight update (the hot kernel) has two interchangeable
backends: a compiled Cython extension and a pure-numpy fallback. The
compiled one is used when importable; set RLRT_PURE_PYTHON=1 to force the
fallback. ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _block_np
from .forward import EegEpoch, LeadField
from .geometry import SourceGrid
from .linalg import NumericalError, centering_matrix, pinv

if os.environ.get("RLRT_PURE_PYTHON"):
    _kernel = _block_np
else:
    try:
        from . import _block_cy as _kernel  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - build-dependent
        _kernel = _block_np


def kernel_backend() -> str:
    """Name of the active block-update backend ('cython' or 'numpy')."""
    return _kernel.BACKEND


DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class EloretaState:
    """Converged weights and the resulting linear inverse operator."""

    weights: np.ndarray          # (K, 3, 3) blocks W_i
    inverse_operator: np.ndarray  # (3K, M)
    alpha: float
    centering: np.ndarray        # (M, M)
    iterations_used: int
    converged: bool


@dataclass(frozen=True)
class SourceEstimate:
    """(3K) x N current densities; rows come in per-voxel triplets."""

    amplitudes: np.ndarray
    grid_ref: str = ""

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.amplitudes, dtype=float))
        if a.ndim != 2 or a.shape[0] % 3 != 0:
            raise ValueError(f"amplitudes must be 3K x N, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("amplitudes contain non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def n_voxels(self) -> int:
        return self.amplitudes.shape[0] // 3


def eloreta_weights(
    lf: LeadField,
    alpha: float = DEFAULT_ALPHA,
    max_iter: int = 100,
    w_tol: float = 1e-6,
) -> EloretaState:
    """Fixed-point iteration for the block weights, starting from identity.

    Stops when the largest per-block relative Frobenius change drops below
    ``w_tol`` or after ``max_iter`` updates, then forms the inverse operator
    T = W^-1 H^T (H W^-1 H^T + alpha L)^+ with the final weights.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    h = lf.gain
    m, k3 = h.shape
    k = k3 // 3
    centering = centering_matrix(m)
    reg = alpha * centering

    # (K, 3, M) stack of H_i^T, contiguous for the kernel
    htb = np.ascontiguousarray(h.reshape(m, k, 3).transpose(1, 2, 0))
    hkb = htb.transpose(0, 2, 1)  # (K, M, 3) views of H_i

    w = np.broadcast_to(np.eye(3), (k, 3, 3)).copy()
    winv = w.copy()
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        whtb = np.matmul(winv, htb)  # (K, 3, M) = W_i^-1 H_i^T
        gram = np.tensordot(hkb, whtb, axes=([0, 2], [0, 1])) + reg
        p = pinv(gram)
        w_new, winv_new = _kernel.block_sqrt_gram(htb, p)
        if not np.all(np.isfinite(w_new)):
            raise NumericalError(f"weight update diverged at iteration {it}")
        num = np.linalg.norm(w_new - w, axis=(1, 2))
        den = np.maximum(np.linalg.norm(w, axis=(1, 2)), 1e-300)
        delta = float((num / den).max())
        w, winv = w_new, winv_new
        if delta < w_tol:
            converged = True
            break

    whtb = np.matmul(winv, htb)
    gram = np.tensordot(hkb, whtb, axes=([0, 2], [0, 1])) + reg
    p = pinv(gram)
    t = whtb.reshape(k3, m) @ p  # (3K, M) = W^-1 H^T (H W^-1 H^T + alpha L)^+
    return EloretaState(
        weights=w,
        inverse_operator=t,
        alpha=alpha,
        centering=centering,
        iterations_used=iterations if max_iter > 0 else 0,
        converged=converged,
    )


def eloreta_apply(state: EloretaState, lf: LeadField, epoch: EegEpoch) -> SourceEstimate:
    """Y = T L X (measurements are average-referenced before projection)."""
    if epoch.data.shape[0] != lf.n_electrodes:
        raise ValueError(
            f"epoch has {epoch.data.shape[0]} channels, lead field has {lf.n_electrodes}"
        )
    if state.inverse_operator.shape != (3 * lf.n_voxels, lf.n_electrodes):
        raise ValueError("state and lead field shapes do not match")
    x = state.centering @ epoch.data
    return SourceEstimate(amplitudes=state.inverse_operator @ x, grid_ref=lf.grid_ref)


def reconstruction_error(lf: LeadField, y: SourceEstimate, epoch: EegEpoch) -> float:
    """Squared Frobenius norm of the reconstruction residual X - H Y."""
    if y.amplitudes.shape[0] != lf.gain.shape[1]:
        raise ValueError("estimate and lead field shapes do not match")
    resid = epoch.data - lf.gain @ y.amplitudes
    return float(np.sum(resid * resid))


def localize(y: SourceEstimate, grid: SourceGrid) -> tuple[int, np.ndarray]:
    """Voxel with the largest time-aggregated moment magnitude.

    Ties break to the lowest index (np.argmax semantics).
    """
    if y.n_voxels != grid.n_voxels:
        raise ValueError(
            f"estimate has {y.n_voxels} voxels, grid has {grid.n_voxels}"
        )
    per_voxel = y.amplitudes.reshape(grid.n_voxels, 3, -1)
    scores = np.sqrt(np.sum(per_voxel**2, axis=(1, 2)))
    if not scores.any():
        raise ValueError("no active source: estimate is identically zero")
    idx = int(np.argmax(scores))
    return idx, grid.positions_mm[idx].copy()
