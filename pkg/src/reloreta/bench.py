"""Benchmark harness: seeded source sweeps, CSV records, summary statistics."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._util import seed_sequence, seeded_rng
from .eloreta import eloreta_apply, eloreta_weights, localize, reconstruction_error
from .forward import (
    EegEpoch,
    ErpSpec,
    LeadField,
    NoiseSpec,
    leadfield_subset,
    simulate_epoch,
)
from .geometry import (
    DipoleSourceSpec,
    HeadModel,
    SourceGrid,
    build_sphere_grid,
    extended_source_dipoles,
    standard_1020_electrodes,
)
from .perturb import PerturbationSpec, build_inverse_problem
from .reloreta import ReloretaConfig, ReloretaTrace, run_reloreta

CSV_COLUMNS = [
    "source_id", "true_x_mm", "true_y_mm", "true_z_mm", "snr_db", "method",
    "est_x_mm", "est_y_mm", "est_z_mm", "error_mm", "e_recon_final",
    "outer_iters", "converged", "wall_ms",
]

METHODS = ("eloreta", "reloreta")


class ConfigError(ValueError):
    """Malformed benchmark or simulation configuration."""


def localization_error(p_true, p_est) -> float:
    """Euclidean distance between the true and estimated positions (mm)."""
    p_true = np.asarray(p_true, dtype=float)
    p_est = np.asarray(p_est, dtype=float)
    if not (np.all(np.isfinite(p_true)) and np.all(np.isfinite(p_est))):
        raise ValueError("positions must be finite")
    return float(np.linalg.norm(p_true - p_est))


@dataclass(frozen=True)
class BenchConfig:
    n_sources: int = 20
    source_mode: str = "single_dipole"  # or "extended"
    extent_mm: float = 0.0
    n_dipoles: int = 1
    snr_levels_db: tuple[float, ...] = (5.0, 20.0)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    methods: tuple[str, ...] = METHODS
    solver: ReloretaConfig = field(default_factory=ReloretaConfig)
    forward_spacing_mm: float = 4.0
    seed: int = 0
    # head / simulation parameters
    radius_mm: float = 85.0
    conductivity_s_per_m: float = 0.33
    margin_mm: float = 5.0
    min_depth_mm: float = 5.0
    fs_hz: float = 500.0
    n_samples: int = 200
    n_trials: int = 10
    brown_fraction: float = 0.5
    erp_latency_ms: float = 200.0
    erp_width_ms: float = 60.0
    erp_amplitude: float = 1.0

    def __post_init__(self):
        if self.n_sources < 1:
            raise ConfigError("n_sources must be >= 1")
        if self.source_mode not in ("single_dipole", "extended"):
            raise ConfigError(f"unknown source_mode {self.source_mode!r}")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if self.source_mode == "extended" and self.n_dipoles < 2:
            raise ConfigError("extended mode needs n_dipoles >= 2")
        if self.source_mode == "single_dipole" and (self.n_dipoles != 1 or self.extent_mm != 0):
            raise ConfigError("single_dipole mode requires n_dipoles=1 and extent_mm=0")

    @classmethod
    def from_json(cls, doc: dict) -> "BenchConfig":
        doc = dict(doc)
        kwargs = {}
        try:
            if "perturbation" in doc:
                kwargs["perturbation"] = PerturbationSpec.from_json(doc.pop("perturbation"))
            if "solver" in doc:
                kwargs["solver"] = ReloretaConfig(**doc.pop("solver"))
            for key, value in doc.items():
                if key not in cls.__dataclass_fields__:
                    raise ConfigError(f"unknown config key {key!r}")
                if key in ("snr_levels_db", "methods"):
                    value = tuple(value)
                kwargs[key] = value
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class BenchRecord:
    source_id: int
    true_position_mm: tuple[float, float, float]
    snr_db: float
    method: str
    estimated_position_mm: tuple[float, float, float]
    error_mm: float
    e_recon_final: float
    outer_iters: int
    converged: bool
    wall_ms: float


def sample_source_voxels(grid: SourceGrid, radius_mm: float, n: int, seed: int,
                         min_depth_mm: float = 5.0) -> np.ndarray:
    """Seeded uniform draw of source voxels at least min_depth_mm below scalp."""
    depth = radius_mm - np.linalg.norm(grid.positions_mm, axis=1)
    eligible = np.flatnonzero(depth >= min_depth_mm)
    if eligible.size < n:
        raise ConfigError(
            f"only {eligible.size} grid points at depth >= {min_depth_mm} mm, need {n}"
        )
    rng = seeded_rng(seed, "source-positions")
    return np.sort(rng.choice(eligible, size=n, replace=False))


def _run_cell(args) -> tuple[BenchRecord, ReloretaTrace | None]:
    (cfg, fwd_positions, fwd_spacing, fwd_el_pos, fwd_el_labels, inv_lf_gain,
     inv_positions, inv_spacing, source_id, center_voxel, snr, method) = args
    from .geometry import ElectrodeArray  # local to keep the pickled payload small

    t0 = time.perf_counter()
    model = HeadModel(radius_mm=cfg.radius_mm, conductivity_s_per_m=cfg.conductivity_s_per_m)
    fwd_grid = SourceGrid(positions_mm=fwd_positions, spacing_mm=fwd_spacing)
    inv_grid = SourceGrid(positions_mm=inv_positions, spacing_mm=inv_spacing)
    inv_lf = LeadField(gain=inv_lf_gain, grid_ref=inv_grid.key)
    electrodes = ElectrodeArray(positions_mm=fwd_el_pos, labels=fwd_el_labels)

    true_pos = fwd_grid.positions_mm[center_voxel]
    moment_rng = seeded_rng(cfg.seed, "moment", source_id)
    direction = moment_rng.standard_normal(3)
    direction /= np.linalg.norm(direction)

    if cfg.source_mode == "extended":
        spec = DipoleSourceSpec(
            center_mm=tuple(true_pos), moment=tuple(direction),
            extent_mm=cfg.extent_mm, n_dipoles=cfg.n_dipoles,
        )
        dipoles = extended_source_dipoles(spec, fwd_grid, seed=cfg.seed + source_id)
    else:
        dipoles = [(int(center_voxel), direction)]

    voxels = [v for v, _ in dipoles]
    lf_active = leadfield_subset(model, electrodes, fwd_grid, voxels)
    active = [(j, mom) for j, (_, mom) in enumerate(dipoles)]

    erp = ErpSpec(cfg.erp_latency_ms, cfg.erp_width_ms, cfg.erp_amplitude)
    data_seed = seed_sequence(cfg.seed, "epoch", source_id, int(round(snr * 1000))).generate_state(1)[0]
    noise = NoiseSpec(
        target_snr_db=snr, n_trials=cfg.n_trials,
        brown_fraction=cfg.brown_fraction, seed=int(data_seed),
    )
    epoch, _ = simulate_epoch(lf_active, active, erp, noise, cfg.fs_hz, cfg.n_samples)

    trace = None
    if method == "eloreta":
        state = eloreta_weights(
            inv_lf, alpha=cfg.solver.alpha,
            max_iter=cfg.solver.weight_max_iter, w_tol=cfg.solver.weight_tol,
        )
        y = eloreta_apply(state, inv_lf, epoch)
        referenced = EegEpoch(state.centering @ epoch.data, epoch.fs_hz)
        e_final = reconstruction_error(inv_lf, y, referenced)
        outer_iters = 1
        converged = state.converged
    else:
        trace = run_reloreta(inv_lf, epoch, cfg.solver)
        y = trace.estimate
        e_final = trace.iterations[-1].e_reloreta
        outer_iters = trace.outer_iterations
        converged = trace.converged

    _, est_pos = localize(y, inv_grid)
    record = BenchRecord(
        source_id=source_id,
        true_position_mm=tuple(float(c) for c in true_pos),
        snr_db=float(snr),
        method=method,
        estimated_position_mm=tuple(float(c) for c in est_pos),
        error_mm=localization_error(true_pos, est_pos),
        e_recon_final=float(e_final),
        outer_iters=outer_iters,
        converged=converged,
        wall_ms=(time.perf_counter() - t0) * 1000.0,
    )
    return record, trace


def run_benchmark(
    cfg: BenchConfig, jobs: int = 1, keep_traces: bool = False
) -> tuple[list[BenchRecord], dict[tuple[int, float], ReloretaTrace]]:
    """Full sources x SNR x methods sweep.

    Cell failures become rows with NaN estimates and converged=False rather
    than aborting the sweep. Returns the sorted records and, when requested,
    the ReLORETA trace per (source_id, snr_db) cell.
    """
    model = HeadModel(radius_mm=cfg.radius_mm, conductivity_s_per_m=cfg.conductivity_s_per_m)
    electrodes = standard_1020_electrodes(cfg.radius_mm)
    fwd_grid = build_sphere_grid(cfg.radius_mm, cfg.forward_spacing_mm, cfg.margin_mm)
    _, fwd_el, inv_grid, inv_lf = build_inverse_problem(
        model, electrodes, cfg.perturbation,
        forward_spacing_mm=cfg.forward_spacing_mm, margin_mm=cfg.margin_mm,
    )
    centers = sample_source_voxels(
        fwd_grid, cfg.radius_mm, cfg.n_sources, cfg.seed, cfg.min_depth_mm
    )

    cells = []
    for source_id, center in enumerate(centers):
        for snr in cfg.snr_levels_db:
            for method in cfg.methods:
                cells.append((
                    cfg, fwd_grid.positions_mm, fwd_grid.spacing_mm,
                    fwd_el.positions_mm, fwd_el.labels, inv_lf.gain,
                    inv_grid.positions_mm, inv_grid.spacing_mm,
                    source_id, int(center), float(snr), method,
                ))

    results: list[tuple[BenchRecord, ReloretaTrace | None]] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_safe, cells, chunksize=1))
    else:
        results = [_run_cell_safe(c) for c in cells]

    records = [r for r, _ in results]
    records.sort(key=lambda r: (r.source_id, r.snr_db, r.method))
    traces = {}
    if keep_traces:
        for rec, trace in results:
            if trace is not None:
                traces[(rec.source_id, rec.snr_db)] = trace
    return records, traces


def _run_cell_safe(args):
    source_id, snr, method = args[-4], args[-2], args[-1]
    try:
        return _run_cell(args)
    except Exception:
        record = BenchRecord(
            source_id=source_id,
            true_position_mm=(float("nan"),) * 3,
            snr_db=float(snr),
            method=method,
            estimated_position_mm=(float("nan"),) * 3,
            error_mm=float("nan"),
            e_recon_final=float("nan"),
            outer_iters=0,
            converged=False,
            wall_ms=0.0,
        )
        return record, None


def _fmt(x: float) -> str:
    return repr(float(x))


def records_to_csv(records: list[BenchRecord]) -> str:
    """Deterministic CSV rendering (wall_ms is written as 0.0 so identical
    configs produce byte-identical files; real timings live in summaries)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([
            r.source_id,
            _fmt(r.true_position_mm[0]), _fmt(r.true_position_mm[1]), _fmt(r.true_position_mm[2]),
            _fmt(r.snr_db), r.method,
            _fmt(r.estimated_position_mm[0]), _fmt(r.estimated_position_mm[1]),
            _fmt(r.estimated_position_mm[2]),
            _fmt(r.error_mm), _fmt(r.e_recon_final),
            r.outer_iters, str(bool(r.converged)).lower(),
            _fmt(0.0),
        ])
    return buf.getvalue()


def records_from_csv(text: str) -> list[BenchRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_COLUMNS:
        raise ConfigError(f"unexpected CSV columns: {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(BenchRecord(
            source_id=int(row["source_id"]),
            true_position_mm=(float(row["true_x_mm"]), float(row["true_y_mm"]), float(row["true_z_mm"])),
            snr_db=float(row["snr_db"]),
            method=row["method"],
            estimated_position_mm=(float(row["est_x_mm"]), float(row["est_y_mm"]), float(row["est_z_mm"])),
            error_mm=float(row["error_mm"]),
            e_recon_final=float(row["e_recon_final"]),
            outer_iters=int(row["outer_iters"]),
            converged=row["converged"] == "true",
            wall_ms=float(row["wall_ms"]),
        ))
    return out


def summarize(records: list[BenchRecord]) -> dict:
    """Boxplot-style statistics per (snr_db, method) cell."""
    cells = {}
    for r in records:
        cells.setdefault((r.snr_db, r.method), []).append(r)
    out = []
    for (snr, method) in sorted(cells):
        rows = cells[(snr, method)]
        errs = np.array([r.error_mm for r in rows])
        finite = errs[np.isfinite(errs)]
        stats = {
            "snr_db": snr,
            "method": method,
            "n": len(rows),
            "n_failed": int(np.sum(~np.isfinite(errs))),
            "n_converged": int(sum(r.converged for r in rows)),
            "median_outer_iters": float(np.median([r.outer_iters for r in rows])),
        }
        if finite.size:
            stats.update({
                "median_mm": float(np.median(finite)),
                "q25_mm": float(np.percentile(finite, 25)),
                "q75_mm": float(np.percentile(finite, 75)),
                "mean_mm": float(np.mean(finite)),
                "max_mm": float(np.max(finite)),
            })
        out.append(stats)
    return {"n_rows": len(records), "cells": out}
