"""Command line interface: simulate / localize / benchmark / report.

Exit codes: 0 success, 1 configuration error, 2 I/O or shape error,
3 numerical failure. The RLRT_SEED environment variable overrides the
seed found in configuration files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (
    BenchConfig,
    ConfigError,
    localization_error,
    records_from_csv,
    records_to_csv,
    run_benchmark,
    summarize,
)
from .eloreta import (
    EegEpoch,
    eloreta_apply,
    eloreta_weights,
    localize,
    reconstruction_error,
)
from .forward import (
    ErpSpec,
    LeadField,
    NoiseSpec,
    assemble_leadfield,
    leadfield_subset,
    simulate_epoch,
)
from .geometry import (
    DipoleSourceSpec,
    GeometryError,
    HeadModel,
    SourceGrid,
    build_sphere_grid,
    extended_source_dipoles,
    geometry_from_json,
    geometry_to_json,
    standard_1020_electrodes,
)
from .linalg import NumericalError
from .matio import MatrixFormatError, read_matrix, write_matrix
from .perturb import PerturbationSpec, build_inverse_problem
from .reloreta import ReloretaConfig, run_reloreta

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise _IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return doc


class _IoFailure(Exception):
    pass


def _override_seed(doc: dict) -> dict:
    env = os.environ.get("RLRT_SEED")
    if env is not None:
        try:
            doc = dict(doc, seed=int(env))
        except ValueError:
            raise ConfigError(f"RLRT_SEED must be an integer, got {env!r}")
    return doc


SIM_DEFAULTS = {
    "radius_mm": 85.0,
    "conductivity_s_per_m": 0.33,
    "forward_spacing_mm": 10.0,
    "margin_mm": 5.0,
    "source_position_mm": [0.0, 30.0, 40.0],
    "moment": [0.0, 0.0, 1.0],
    "extent_mm": 0.0,
    "n_dipoles": 1,
    "snr_db": 20.0,
    "fs_hz": 500.0,
    "n_samples": 200,
    "n_trials": 10,
    "brown_fraction": 0.5,
    "erp_latency_ms": 200.0,
    "erp_width_ms": 60.0,
    "erp_amplitude": 1.0,
    "seed": 0,
    "perturbation": {},
}


def cmd_simulate(args) -> int:
    doc = _override_seed(_load_json(args.config))
    cfg = dict(SIM_DEFAULTS)
    for key, value in doc.items():
        if key not in SIM_DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = value
    spec = PerturbationSpec.from_json(cfg["perturbation"])

    model = HeadModel(radius_mm=cfg["radius_mm"],
                      conductivity_s_per_m=cfg["conductivity_s_per_m"])
    electrodes = standard_1020_electrodes(cfg["radius_mm"])
    fwd_grid = build_sphere_grid(cfg["radius_mm"], cfg["forward_spacing_mm"],
                                 cfg["margin_mm"])
    inv_model, fwd_el, inv_grid, inv_lf = build_inverse_problem(
        model, electrodes, spec,
        forward_spacing_mm=cfg["forward_spacing_mm"], margin_mm=cfg["margin_mm"],
    )

    target = np.asarray(cfg["source_position_mm"], dtype=float)
    center = int(np.argmin(np.sum((fwd_grid.positions_mm - target) ** 2, axis=1)))
    moment = np.asarray(cfg["moment"], dtype=float)
    if cfg["n_dipoles"] > 1:
        dspec = DipoleSourceSpec(
            center_mm=tuple(fwd_grid.positions_mm[center]), moment=tuple(moment),
            extent_mm=cfg["extent_mm"], n_dipoles=int(cfg["n_dipoles"]),
        )
        dipoles = extended_source_dipoles(dspec, fwd_grid, seed=int(cfg["seed"]))
    else:
        dipoles = [(center, moment)]

    voxels = [v for v, _ in dipoles]
    lf_active = leadfield_subset(model, fwd_el, fwd_grid, voxels)
    active = [(j, mom) for j, (_, mom) in enumerate(dipoles)]
    erp = ErpSpec(cfg["erp_latency_ms"], cfg["erp_width_ms"], cfg["erp_amplitude"])
    noise = NoiseSpec(target_snr_db=cfg["snr_db"], n_trials=int(cfg["n_trials"]),
                      brown_fraction=cfg["brown_fraction"], seed=int(cfg["seed"]))
    epoch, silent = simulate_epoch(lf_active, active, erp, noise,
                                   cfg["fs_hz"], int(cfg["n_samples"]))

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        fwd_lf = assemble_leadfield(model, fwd_el, fwd_grid)
        write_matrix(out / "leadfield_forward.bin", fwd_lf.gain)
        write_matrix(out / "leadfield_inverse.bin", inv_lf.gain)
        write_matrix(out / "epoch.bin", epoch.data)
        write_matrix(out / "noise.bin", silent.data)
        truth = {
            "voxel": center,
            "position_mm": [float(c) for c in fwd_grid.positions_mm[center]],
            "moment": [float(c) for c in moment],
            "active_voxels": [int(v) for v in voxels],
            "snr_db": float(cfg["snr_db"]),
        }
        (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
        geo = geometry_to_json(inv_model, electrodes, inv_grid)
        (out / "geometry.json").write_text(json.dumps(geo, indent=2) + "\n")
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc
    print(f"wrote simulation to {out}")
    return EXIT_OK


def cmd_localize(args) -> int:
    try:
        gain = read_matrix(args.leadfield)
        data = read_matrix(args.eeg)
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc
    if gain.shape[1] % 3 != 0:
        raise MatrixFormatError(
            f"lead field must have 3K columns, got {gain.shape[1]}"
        )
    if data.shape[0] != gain.shape[0]:
        raise MatrixFormatError(
            f"EEG has {data.shape[0]} channels, lead field has {gain.shape[0]}"
        )
    lf = LeadField(gain=gain)
    epoch = EegEpoch(data, fs_hz=1.0)

    grid = None
    if args.geometry:
        _, _, grid = geometry_from_json(_load_json(args.geometry))
        if grid.n_voxels != lf.n_voxels:
            raise MatrixFormatError(
                f"geometry grid has {grid.n_voxels} voxels, "
                f"lead field has {lf.n_voxels}"
            )

    if args.method == "eloreta":
        state = eloreta_weights(lf, alpha=args.alpha)
        y = eloreta_apply(state, lf, epoch)
        referenced = EegEpoch(state.centering @ epoch.data, epoch.fs_hz)
        result = {
            "method": "eloreta",
            "converged": state.converged,
            "iterations": state.iterations_used,
            "e_recon": reconstruction_error(lf, y, referenced),
        }
    else:
        cfg = ReloretaConfig(alpha=args.alpha, epsilon=args.epsilon,
                             max_outer_iter=args.max_iter)
        trace = run_reloreta(lf, epoch, cfg)
        y = trace.estimate
        result = {"method": "reloreta", **trace.to_json()}

    idx, _ = localize(y, grid) if grid is not None else (_argmax_voxel(y), None)
    result["argmax_voxel"] = int(idx)
    if grid is not None:
        result["position_mm"] = [float(c) for c in grid.positions_mm[idx]]

    try:
        Path(args.out).write_text(json.dumps(result, indent=2) + "\n")
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc
    print(f"wrote localization result to {args.out}")
    return EXIT_OK


def _argmax_voxel(y) -> int:
    per_voxel = y.amplitudes.reshape(y.n_voxels, 3, -1)
    scores = np.sqrt(np.sum(per_voxel**2, axis=(1, 2)))
    return int(np.argmax(scores))


def cmd_benchmark(args) -> int:
    doc = _override_seed(_load_json(args.config))
    cfg = BenchConfig.from_json(doc)
    records, _ = run_benchmark(cfg, jobs=args.jobs)
    csv_text = records_to_csv(records)
    out = Path(args.out)
    try:
        out.write_text(csv_text)
        summary = summarize(records)
        wall = {}
        for r in records:
            wall.setdefault((r.snr_db, r.method), []).append(r.wall_ms)
        for cell in summary["cells"]:
            key = (cell["snr_db"], cell["method"])
            cell["mean_wall_ms"] = float(np.mean(wall[key]))
        out.with_suffix(".summary.json").write_text(
            json.dumps(summary, indent=2) + "\n"
        )
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc
    print(f"wrote {len(records)} rows to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        text = Path(args.csv).read_text()
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc
    records = records_from_csv(text)
    summary = summarize(records)
    try:
        Path(args.out).write_text(json.dumps(summary, indent=2) + "\n")
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc
    print(f"wrote summary for {len(records)} rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reloreta",
                     description="EEG source localization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("localize", help="localize sources from saved matrices")
    p.add_argument("--method", required=True, choices=("eloreta", "reloreta"))
    p.add_argument("--leadfield", required=True, help="lead field matrix file")
    p.add_argument("--eeg", required=True, help="EEG epoch matrix file")
    p.add_argument("--geometry", help="geometry JSON for position output")
    p.add_argument("--alpha", type=float, default=0.05,
                   help="regularization parameter (default 0.05)")
    p.add_argument("--epsilon", type=float, default=0.005,
                   help="convergence threshold (default 0.005)")
    p.add_argument("--max-iter", type=int, default=60,
                   help="maximum outer iterations (default 60)")
    p.add_argument("--out", required=True, help="output JSON file")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("benchmark", help="run a localization benchmark sweep")
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", required=True, help="output CSV file")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="summarize a benchmark CSV")
    p.add_argument("--csv", required=True, help="benchmark CSV file")
    p.add_argument("--out", required=True, help="output JSON file")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MatrixFormatError, _IoFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
