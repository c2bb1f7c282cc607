"""Analytic lead fields and synthetic noisy ERP epochs.

The conductor is an infinite homogeneous medium, so each lead-field column
has the closed form r / (4 pi sigma |r|^3) with r the electrode-dipole
offset in meters. Gain matrices are always average-referenced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import seed_sequence
from .geometry import ElectrodeArray, HeadModel, SourceGrid

FWHM_TO_SIGMA = 2.355  # Gaussian full width at half maximum -> std dev


class ForwardModelError(ValueError):
    """Singular or otherwise invalid forward-model construction."""


class SimulationError(ValueError):
    """Unattainable simulation request (e.g. SNR with zero signal)."""


@dataclass(frozen=True)
class LeadField:
    """M x 3K gain matrix; column triplet i maps voxel i's moment to potentials."""

    gain: np.ndarray
    grid_ref: str = ""

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.gain, dtype=float))
        if g.ndim != 2 or g.shape[1] % 3 != 0 or g.shape[1] == 0:
            raise ForwardModelError(f"gain must be M x 3K, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ForwardModelError("gain has non-finite entries")
        g.setflags(write=False)
        object.__setattr__(self, "gain", g)

    @property
    def n_electrodes(self) -> int:
        return self.gain.shape[0]

    @property
    def n_voxels(self) -> int:
        return self.gain.shape[1] // 3

    def column_block(self, voxel: int) -> np.ndarray:
        return self.gain[:, 3 * voxel : 3 * voxel + 3]


@dataclass(frozen=True)
class EegEpoch:
    """M x N scalp potentials with sampling metadata."""

    data: np.ndarray
    fs_hz: float
    baseline_cols: tuple[int, int] | None = None

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.data, dtype=float))
        if d.ndim != 2 or d.shape[1] < 2:
            raise SimulationError(f"data must be M x N with N >= 2, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise SimulationError("epoch has non-finite entries")
        if self.fs_hz <= 0:
            raise SimulationError("fs_hz must be positive")
        if self.baseline_cols is not None:
            lo, hi = self.baseline_cols
            if not (0 <= lo < hi <= d.shape[1]):
                raise SimulationError(f"invalid baseline_cols {self.baseline_cols}")
            peak = int(np.argmax(np.abs(d).sum(axis=0)))
            if lo <= peak < hi:
                raise SimulationError("baseline window overlaps the ERP peak sample")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ErpSpec:
    """Gaussian ERP bump: latency and width in ms, width read as FWHM."""

    latency_ms: float
    width_ms: float
    amplitude: float

    def __post_init__(self):
        if self.width_ms <= 0:
            raise SimulationError("width_ms must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    target_snr_db: float
    n_trials: int = 10
    brown_fraction: float = 0.5  # share of noise power entering at source level
    seed: int = 0

    def __post_init__(self):
        if self.n_trials < 1:
            raise SimulationError("n_trials must be >= 1")
        if not 0 <= self.brown_fraction <= 1:
            raise SimulationError("brown_fraction must be in [0, 1]")


def leadfield_column(
    model: HeadModel, electrode_pos_mm, dipole_pos_mm
) -> np.ndarray:
    """Gain 3-vector g: a dipole with moment p yields potential g . p."""
    r = (np.asarray(electrode_pos_mm, float) - np.asarray(dipole_pos_mm, float)) / 1000.0
    d = np.linalg.norm(r)
    if d <= 1e-9:  # 1e-6 mm
        raise ForwardModelError(
            f"electrode and dipole coincide (separation {d * 1000:g} mm)"
        )
    return r / (4.0 * np.pi * model.conductivity_s_per_m * d**3)


def _raw_gain(model: HeadModel, positions_el_mm: np.ndarray, positions_dip_mm: np.ndarray) -> np.ndarray:
    r = (positions_el_mm[:, None, :] - positions_dip_mm[None, :, :]) / 1000.0  # (M, K, 3)
    d = np.linalg.norm(r, axis=2)
    if d.min() <= 1e-9:
        m, k = np.unravel_index(int(np.argmin(d)), d.shape)
        raise ForwardModelError(
            f"electrode {m} coincides with voxel {k} (separation {d[m, k] * 1000:g} mm)"
        )
    g = r / (4.0 * np.pi * model.conductivity_s_per_m * d[:, :, None] ** 3)
    return g.reshape(positions_el_mm.shape[0], -1)


def assemble_leadfield(
    model: HeadModel, electrodes: ElectrodeArray, grid: SourceGrid
) -> LeadField:
    """Average-referenced gain matrix over all grid voxels."""
    gain = _raw_gain(model, electrodes.positions_mm, grid.positions_mm)
    gain = gain - gain.mean(axis=0, keepdims=True)  # left-multiply by centering matrix
    if np.any(~gain.any(axis=0)):
        raise ForwardModelError("lead field has an all-zero column")
    return LeadField(gain=gain, grid_ref=grid.key)


def leadfield_subset(
    model: HeadModel, electrodes: ElectrodeArray, grid: SourceGrid, voxels
) -> LeadField:
    """Average-referenced lead field restricted to the given grid voxels.

    Column triplet j corresponds to voxels[j]; used to simulate epochs
    without assembling the full forward gain.
    """
    voxels = np.asarray(voxels, dtype=int)
    gain = _raw_gain(model, electrodes.positions_mm, grid.positions_mm[voxels])
    gain = gain - gain.mean(axis=0, keepdims=True)
    return LeadField(gain=gain, grid_ref=f"{grid.key}:subset")


def erp_waveform(spec: ErpSpec, fs_hz: float, n_samples: int) -> np.ndarray:
    """Gaussian bump sampled on the epoch time grid (ms)."""
    if n_samples < 2:
        raise SimulationError("n_samples must be >= 2")
    t_ms = np.arange(n_samples) * 1000.0 / fs_hz
    sigma = spec.width_ms / FWHM_TO_SIGMA
    return spec.amplitude * np.exp(-0.5 * ((t_ms - spec.latency_ms) / sigma) ** 2)


def brown_noise(n_samples: int, seed) -> np.ndarray:
    """Brownian (integrated white) noise, zero mean and unit sample variance."""
    if n_samples < 2:
        raise SimulationError("n_samples must be >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = np.cumsum(rng.standard_normal(n_samples))
    w -= w.mean()
    return w / w.std()


def snr_db(epoch: EegEpoch, noise_epoch: EegEpoch) -> float:
    """Trace-ratio SNR of a (signal-bearing) epoch versus a source-silent one."""
    if epoch.n_channels != noise_epoch.n_channels:
        raise SimulationError(
            f"channel mismatch: {epoch.n_channels} vs {noise_epoch.n_channels}"
        )
    tr_s = float(np.trace(np.cov(epoch.data)))
    tr_n = float(np.trace(np.cov(noise_epoch.data)))
    if tr_n <= 0:
        raise SimulationError("noise epoch has zero covariance trace")
    return 10.0 * np.log10(tr_s / tr_n)


def _averaged_noise(
    lf: LeadField, voxels: list[int], n_samples: int, n_trials: int,
    brown_fraction: float, ss: np.random.SeedSequence,
) -> np.ndarray:
    """Trial-averaged sensor noise with unit expected per-trial power.

    Brown noise enters per active dipole axis at source level; white noise
    is added at the sensors. Both streams are scaled so a single trial has
    unit expected mean-square sensor power split ``brown_fraction`` /
    ``1 - brown_fraction``; averaging n_trials then shrinks the variance by
    the usual 1/n_trials. Each trial owns a child stream so the result is
    independent of evaluation order.
    """
    m = lf.n_electrodes
    brown = np.zeros((m, n_samples))
    white = np.zeros((m, n_samples))
    for child in ss.spawn(n_trials):
        rng = np.random.default_rng(child)
        if brown_fraction > 0:
            for v in voxels:
                b = np.vstack([brown_noise(n_samples, rng) for _ in range(3)])
                brown += lf.column_block(v) @ b
        if brown_fraction < 1:
            white += rng.standard_normal((m, n_samples))
    brown /= n_trials
    white /= n_trials

    out = np.zeros((m, n_samples))
    if brown_fraction > 0:
        # expected per-trial sensor power of unit-variance source series
        cols = np.concatenate([lf.column_block(v) for v in voxels], axis=1)
        p_brown = float(np.sum(cols**2)) / m
        if p_brown <= 0:
            raise SimulationError("brown_fraction > 0 but no source-level noise power")
        out += np.sqrt(brown_fraction / p_brown) * brown
    if brown_fraction < 1:
        out += np.sqrt(1.0 - brown_fraction) * white  # white per-trial power is 1
    return out


def simulate_epoch(
    lf: LeadField,
    active: list[tuple[int, np.ndarray]],
    erp: ErpSpec,
    noise: NoiseSpec,
    fs_hz: float,
    n_samples: int,
    noise_gain: float | None = None,
) -> tuple[EegEpoch, EegEpoch]:
    """Trial-averaged noisy epoch plus a matched source-silent noise epoch.

    The single noise gain shared by both noise layers is bisected so the
    returned epoch measures within 0.1 dB of ``noise.target_snr_db`` under
    :func:`snr_db`; pass ``noise_gain`` to skip calibration.
    """
    w = erp_waveform(erp, fs_hz, n_samples)
    sensor = np.zeros(lf.n_electrodes)
    for voxel, moment in active:
        if not 0 <= voxel < lf.n_voxels:
            raise SimulationError(f"voxel index {voxel} out of range (K={lf.n_voxels})")
        sensor += lf.column_block(voxel) @ np.asarray(moment, dtype=float)
    signal = np.outer(sensor, w)
    if not np.any(signal):
        raise SimulationError("unreachable SNR: zero signal (all moments vanish)")

    root = seed_sequence(noise.seed, "epoch-noise")
    branch_sig, branch_silent = root.spawn(2)
    voxels = [v for v, _ in active]
    noise_sig = _averaged_noise(lf, voxels, n_samples, noise.n_trials, noise.brown_fraction, branch_sig)
    noise_silent = _averaged_noise(lf, voxels, n_samples, noise.n_trials, noise.brown_fraction, branch_silent)

    baseline = _baseline_window(erp, fs_hz, n_samples, w)

    def measured(g: float) -> float:
        return snr_db(
            EegEpoch(signal + g * noise_sig, fs_hz),
            EegEpoch(g * noise_silent, fs_hz),
        )

    if noise_gain is None:
        noise_gain = _calibrate_gain(measured, noise.target_snr_db)
    epoch = EegEpoch(signal + noise_gain * noise_sig, fs_hz, baseline)
    silent = EegEpoch(noise_gain * noise_silent, fs_hz)
    return epoch, silent


def _baseline_window(erp: ErpSpec, fs_hz: float, n_samples: int, w: np.ndarray) -> tuple[int, int] | None:
    sigma = erp.width_ms / FWHM_TO_SIGMA
    stop = int((erp.latency_ms - 3 * sigma) * fs_hz / 1000.0)
    stop = min(max(stop, 1), n_samples)
    peak = int(np.argmax(np.abs(w)))
    if peak < stop:  # pathological spec: no clean pre-stimulus window
        return None
    return (0, stop)


def _calibrate_gain(measured, target_db: float, tol_db: float = 0.1, max_iter: int = 30) -> float:
    """Bisection in log-gain; measured SNR is monotone decreasing in gain."""
    lo, hi = 1e-12, 1e12
    scale = 1.0
    f_lo, f_hi = measured(lo * scale), measured(hi * scale)
    if not (f_hi <= target_db <= f_lo):
        raise SimulationError(
            f"unreachable SNR: target {target_db:g} dB outside attainable "
            f"range [{f_hi:.2f}, {f_lo:.2f}] dB"
        )
    llo, lhi = np.log10(lo), np.log10(hi)
    for _ in range(max_iter):
        mid = 0.5 * (llo + lhi)
        f = measured(10**mid * scale)
        if abs(f - target_db) <= tol_db:
            return 10**mid * scale
        if f > target_db:
            llo = mid
        else:
            lhi = mid
    return 10 ** (0.5 * (llo + lhi)) * scale
