import numpy as np
import pytest

from reloreta.bench import (
    CSV_COLUMNS,
    BenchConfig,
    BenchRecord,
    ConfigError,
    localization_error,
    records_from_csv,
    records_to_csv,
    run_benchmark,
    sample_source_voxels,
    summarize,
)
from reloreta.perturb import PerturbationSpec
from reloreta.reloreta import ReloretaConfig

FAST_SOLVER = ReloretaConfig(alpha=1e7, lambda_init=1e8, lambda_down=0.5,
                             epsilon=0.98, min_outer_iter=7, max_outer_iter=60)


def fast_config(**overrides):
    kwargs = dict(
        n_sources=2,
        snr_levels_db=(10.0,),
        perturbation=PerturbationSpec(tilt_deg=5.0, inverse_spacing_mm=20.0),
        solver=FAST_SOLVER,
        forward_spacing_mm=12.0,
        seed=3,
        n_samples=80,
        n_trials=3,
    )
    kwargs.update(overrides)
    return BenchConfig(**kwargs)


class TestLocalizationError:
    def test_euclidean_distance(self):
        assert localization_error((0, 0, 0), (3, 4, 0)) == 5.0

    def test_non_finite_raises(self):
        with pytest.raises(ValueError):
            localization_error((0, 0, np.nan), (0, 0, 0))


class TestBenchConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            BenchConfig.from_json({"n_source": 5})

    def test_from_json_round_trip_fields(self):
        doc = {
            "n_sources": 3,
            "snr_levels_db": [5.0, 20.0],
            "perturbation": {"tilt_deg": 2.0},
            "solver": {"alpha": 1e7},
            "seed": 11,
        }
        cfg = BenchConfig.from_json(doc)
        assert cfg.n_sources == 3
        assert cfg.snr_levels_db == (5.0, 20.0)
        assert cfg.perturbation.tilt_deg == 2.0
        assert cfg.solver.alpha == 1e7

    def test_mode_validation(self):
        with pytest.raises(ConfigError):
            BenchConfig(source_mode="plane_wave")
        with pytest.raises(ConfigError, match="n_dipoles"):
            BenchConfig(source_mode="extended", extent_mm=10.0, n_dipoles=1)
        with pytest.raises(ConfigError, match="single_dipole"):
            BenchConfig(source_mode="single_dipole", n_dipoles=2)
        with pytest.raises(ConfigError, match="method"):
            BenchConfig(methods=("eloreta", "beamformer"))
        with pytest.raises(ConfigError):
            BenchConfig(n_sources=0)


class TestSampleSourceVoxels:
    def test_depth_and_determinism(self, coarse_grid):
        picked = sample_source_voxels(coarse_grid, 85.0, 10, seed=5)
        depth = 85.0 - np.linalg.norm(coarse_grid.positions_mm[picked], axis=1)
        assert depth.min() >= 5.0
        assert np.array_equal(picked,
                              sample_source_voxels(coarse_grid, 85.0, 10, seed=5))
        assert len(set(picked.tolist())) == 10

    def test_too_many_requested(self, coarse_grid):
        with pytest.raises(ConfigError, match="need"):
            sample_source_voxels(coarse_grid, 85.0, 10**6, seed=0)


@pytest.fixture(scope="module")
def small_run():
    cfg = fast_config()
    records, traces = run_benchmark(cfg, jobs=1, keep_traces=True)
    return cfg, records, traces


class TestRunBenchmark:
    def test_full_grid_of_cells(self, small_run):
        cfg, records, _ = small_run
        assert len(records) == 2 * 1 * 2  # sources x snrs x methods
        keys = [(r.source_id, r.snr_db, r.method) for r in records]
        assert keys == sorted(keys)

    def test_traces_cover_reloreta_cells(self, small_run):
        _, records, traces = small_run
        expected = {(r.source_id, r.snr_db) for r in records if r.method == "reloreta"}
        assert set(traces) == expected

    def test_methods_share_data(self, small_run):
        _, records, _ = small_run
        by_method = {}
        for r in records:
            by_method.setdefault(r.method, []).append(r.true_position_mm)
        assert by_method["eloreta"] == by_method["reloreta"]

    def test_csv_round_trip(self, small_run):
        _, records, _ = small_run
        text = records_to_csv(records)
        assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
        parsed = records_from_csv(text)
        for orig, back in zip(records, parsed):
            assert back.source_id == orig.source_id
            assert back.true_position_mm == orig.true_position_mm
            assert back.snr_db == orig.snr_db
            assert back.method == orig.method
            assert back.estimated_position_mm == orig.estimated_position_mm
            assert back.error_mm == orig.error_mm
            assert back.e_recon_final == orig.e_recon_final
            assert back.outer_iters == orig.outer_iters
            assert back.converged == orig.converged
            assert back.wall_ms == 0.0  # timings are not part of the record file

    def test_parallel_matches_serial(self, small_run):
        cfg, records, _ = small_run
        records2, _ = run_benchmark(cfg, jobs=2)
        assert records_to_csv(records2) == records_to_csv(records)

    def test_summary_recomputes_from_csv(self, small_run):
        _, records, _ = small_run
        direct = summarize(records)
        reparsed = summarize(records_from_csv(records_to_csv(records)))
        assert direct["n_rows"] == reparsed["n_rows"]
        for a, b in zip(direct["cells"], reparsed["cells"]):
            for key, value in a.items():
                if isinstance(value, float):
                    assert abs(value - b[key]) <= 1e-9
                else:
                    assert value == b[key]


class TestSummarize:
    def test_failure_rows_counted_not_averaged(self):
        ok = BenchRecord(0, (0.0, 0.0, 0.0), 5.0, "eloreta", (3.0, 4.0, 0.0),
                         5.0, 1.0, 1, True, 10.0)
        bad = BenchRecord(1, (float("nan"),) * 3, 5.0, "eloreta",
                          (float("nan"),) * 3, float("nan"), float("nan"),
                          0, False, 0.0)
        summary = summarize([ok, bad])
        cell = summary["cells"][0]
        assert cell["n"] == 2
        assert cell["n_failed"] == 1
        assert cell["n_converged"] == 1
        assert cell["mean_mm"] == 5.0
        assert cell["median_mm"] == 5.0
