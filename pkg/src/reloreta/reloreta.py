"""ReLORETA: sensor-space lead-field correction by damped least squares.

The measured epoch is modeled as coming from a transformed lead field
R @ H. Each outer iteration re-solves eLORETA with the current corrected
lead field, then takes one accepted damped gradient step on R against the
reconstruction error. The gradient is always taken with respect to the
original lead field, with R accumulating the full correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eloreta import SourceEstimate, eloreta_weights, localize
from .forward import EegEpoch, LeadField
from .geometry import SourceGrid
from .linalg import NumericalError, centering_matrix


@dataclass(frozen=True)
class ReloretaConfig:
    alpha: float = 0.05
    epsilon: float = 0.005
    max_outer_iter: int = 60
    lambda_init: float = 1e-2
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    min_outer_iter: int = 2
    max_retries: int = 8
    weight_max_iter: int = 100
    weight_tol: float = 1e-6

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not self.max_outer_iter >= self.min_outer_iter >= 2:
            raise ValueError("need max_outer_iter >= min_outer_iter >= 2")
        if self.lambda_init <= 0:
            raise ValueError("lambda_init must be positive")
        if self.lambda_up <= 1:
            raise ValueError("lambda_up must exceed 1")
        if not 0 < self.lambda_down < 1:
            raise ValueError("lambda_down must be in (0, 1)")


@dataclass(frozen=True)
class IterationRecord:
    j: int
    e_reloreta: float
    e_eloreta: float
    dre: float
    ndre: float | None  # undefined at j = 1
    lambda_used: float
    step_accepted: bool


@dataclass(frozen=True)
class ReloretaTrace:
    iterations: tuple[IterationRecord, ...]
    transform: np.ndarray        # final accumulated R (M x M)
    updated_leadfield: LeadField  # R @ H
    estimate: SourceEstimate      # Y from the last eLORETA solve
    converged: bool

    @property
    def outer_iterations(self) -> int:
        return len(self.iterations)

    def to_json(self, grid: SourceGrid | None = None) -> dict:
        doc = {
            "iterations": [
                {
                    "j": r.j,
                    "e_reloreta": r.e_reloreta,
                    "e_eloreta": r.e_eloreta,
                    "dre": r.dre,
                    "ndre": r.ndre,
                    "lambda": r.lambda_used,
                    "accepted": r.step_accepted,
                }
                for r in self.iterations
            ],
            "converged": self.converged,
            "R": [float(v) for v in self.transform.ravel()],
        }
        if grid is not None:
            voxel, pos = localize(self.estimate, grid)
            doc["argmax_voxel"] = voxel
            doc["position_mm"] = [float(c) for c in pos]
        return doc


def reloreta_gradient(
    r: np.ndarray, lf: LeadField, y: SourceEstimate, epoch: EegEpoch
) -> np.ndarray:
    """Derivative of the squared reconstruction residual with respect to R."""
    m = lf.n_electrodes
    if r.shape != (m, m):
        raise ValueError(f"transform must be {m} x {m}, got {r.shape}")
    if y.amplitudes.shape[0] != lf.gain.shape[1]:
        raise ValueError("estimate and lead field shapes do not match")
    if epoch.data.shape != (m, y.amplitudes.shape[1]):
        raise ValueError("epoch shape does not match lead field / estimate")
    g = lf.gain @ y.amplitudes
    return 2.0 * (r @ g - epoch.data) @ g.T


def lm_step(r: np.ndarray, d: np.ndarray, lam: float) -> np.ndarray:
    """Damped update R - D / (1 + lambda); the Hessian is the identity."""
    if lam <= -1:
        raise ValueError("lambda must exceed -1")
    return r - d / (1.0 + lam)


def ndre(dre_history) -> float:
    """Normalized change of the differential reconstruction error.

    |last - previous| over the full history's range; a flat history has no
    measurable progress and maps to 0 (converged).
    """
    h = [float(v) for v in dre_history]
    if len(h) < 2:
        raise ValueError("NDRE needs at least two DRE samples")
    span = max(h) - min(h)
    if span == 0.0:
        return 0.0
    return abs(h[-1] - h[-2]) / span


def updated_leadfield(r: np.ndarray, lf: LeadField) -> LeadField:
    """Corrected lead field R @ H with the grid reference preserved."""
    if r.shape != (lf.n_electrodes, lf.n_electrodes):
        raise ValueError(
            f"transform must be {lf.n_electrodes} x {lf.n_electrodes}, got {r.shape}"
        )
    return LeadField(gain=r @ lf.gain, grid_ref=lf.grid_ref)


def run_reloreta(lf: LeadField, epoch: EegEpoch, cfg: ReloretaConfig | None = None) -> ReloretaTrace:
    """Outer loop: eLORETA solve, damped R step, DRE/NDRE stopping rule.

    Each proposed transform is scored by re-solving eLORETA under it, and a
    proposal is accepted only if that re-solved reconstruction error drops
    below the current one, so accepted-step errors are non-increasing by
    construction. When all retries fail the iteration keeps R unchanged
    (zero step).
    """
    cfg = cfg or ReloretaConfig()
    m = lf.n_electrodes
    if epoch.data.shape[0] != m:
        raise ValueError(f"epoch has {epoch.data.shape[0]} channels, lead field has {m}")

    h0 = lf.gain
    lc = centering_matrix(m)
    x = lc @ epoch.data

    def solve(transform):
        # R @ H loses the average reference, so the corrected model is
        # re-referenced before the solve; errors compare like with like.
        lf_t = LeadField(gain=lc @ (transform @ h0), grid_ref=lf.grid_ref)
        state = eloreta_weights(
            lf_t, alpha=cfg.alpha, max_iter=cfg.weight_max_iter, w_tol=cfg.weight_tol
        )
        y_t = state.inverse_operator @ x  # x is already average-referenced
        g_t = h0 @ y_t  # original lead field; R carries the whole correction
        e_t = float(np.sum((x - lc @ (transform @ g_t)) ** 2))
        return y_t, g_t, e_t

    r = np.eye(m)
    y, g, e_current = solve(r)
    lam = cfg.lambda_init
    records: list[IterationRecord] = []
    dre_history: list[float] = []
    converged = False

    for j in range(1, cfg.max_outer_iter + 1):
        e_eloreta = float(np.sum((x - g) ** 2))
        if not (np.isfinite(e_eloreta) and np.isfinite(e_current)):
            raise NumericalError(f"non-finite reconstruction error at outer iteration {j}")

        # E is evaluated at each proposal with that proposal's own eLORETA
        # solve, so accepted errors descend the true (re-solved) objective
        # and never chase a stale source estimate.
        d = 2.0 * (lc @ (r @ g) - x) @ g.T
        accepted = False
        lam_used = lam
        e_reloreta = e_current
        for _ in range(cfg.max_retries + 1):
            r_prop = lm_step(r, d, lam)
            try:
                y_prop, g_prop, e_prop = solve(r_prop)
            except NumericalError:
                lam = lam * cfg.lambda_up
                continue
            if np.isfinite(e_prop) and e_prop < e_current:
                lam_used = lam
                r = r_prop
                y, g, e_current = y_prop, g_prop, e_prop
                e_reloreta = e_prop
                lam = lam * cfg.lambda_down
                accepted = True
                break
            lam = lam * cfg.lambda_up
        if not accepted:
            lam_used = lam

        dre = abs(e_reloreta - e_eloreta)
        dre_history.append(dre)
        ndre_j = ndre(dre_history) if j >= 2 else None
        records.append(
            IterationRecord(
                j=j,
                e_reloreta=e_reloreta,
                e_eloreta=e_eloreta,
                dre=dre,
                ndre=ndre_j,
                lambda_used=lam_used,
                step_accepted=accepted,
            )
        )
        if j >= cfg.min_outer_iter and ndre_j is not None and ndre_j <= cfg.epsilon:
            converged = True
            break

    return ReloretaTrace(
        iterations=tuple(records),
        transform=r,
        updated_leadfield=LeadField(gain=r @ h0, grid_ref=lf.grid_ref),
        estimate=SourceEstimate(amplitudes=y, grid_ref=lf.grid_ref),
        converged=converged,
    )
