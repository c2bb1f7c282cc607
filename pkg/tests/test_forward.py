import numpy as np
import pytest

from reloreta.forward import (
    EegEpoch,
    ErpSpec,
    ForwardModelError,
    NoiseSpec,
    SimulationError,
    assemble_leadfield,
    brown_noise,
    erp_waveform,
    leadfield_column,
    leadfield_subset,
    simulate_epoch,
    snr_db,
)
from reloreta.geometry import HeadModel, SourceGrid, build_sphere_grid


class TestLeadfieldColumn:
    def test_matches_hand_computed_value(self):
        # electrode 100 mm above a dipole at the origin, sigma = 0.25 S/m:
        # offset r = 0.1 m along z, so the gain is r / (4 pi sigma |r|^3)
        # = [0, 0, 0.1 / (4 pi 0.25 1e-3)] = [0, 0, 1e2 / pi]
        model = HeadModel(radius_mm=200.0, conductivity_s_per_m=0.25)
        g = leadfield_column(model, (0.0, 0.0, 100.0), (0.0, 0.0, 0.0))
        assert np.allclose(g, [0.0, 0.0, 100.0 / np.pi], rtol=1e-12)

    def test_direction_and_inverse_square_falloff(self):
        model = HeadModel(radius_mm=200.0, conductivity_s_per_m=0.33)
        near = leadfield_column(model, (50.0, 0.0, 0.0), (0.0, 0.0, 0.0))
        far = leadfield_column(model, (100.0, 0.0, 0.0), (0.0, 0.0, 0.0))
        assert near[1] == near[2] == 0.0
        # potential of a radial dipole falls as 1/distance^2
        assert np.isclose(near[0] / far[0], 4.0, rtol=1e-12)

    def test_coincident_positions_raise(self):
        model = HeadModel(radius_mm=200.0, conductivity_s_per_m=0.33)
        with pytest.raises(ForwardModelError, match="coincide"):
            leadfield_column(model, (1.0, 2.0, 3.0), (1.0, 2.0, 3.0))


class TestAssembleLeadfield:
    def test_matches_per_column_formula(self, head_model, electrodes):
        grid = build_sphere_grid(85.0, 40.0, 5.0)
        lf = assemble_leadfield(head_model, electrodes, grid)
        # independently: per-electrode, per-voxel closed form, then reference
        manual = np.empty_like(lf.gain)
        for k in range(grid.n_voxels):
            for m in range(electrodes.n_electrodes):
                manual[m, 3 * k : 3 * k + 3] = leadfield_column(
                    head_model, electrodes.positions_mm[m], grid.positions_mm[k]
                )
        manual -= manual.mean(axis=0, keepdims=True)
        assert np.allclose(lf.gain, manual, rtol=1e-12)

    def test_average_referenced(self, coarse_leadfield):
        assert np.abs(coarse_leadfield.gain.mean(axis=0)).max() < 1e-10

    def test_subset_matches_full(self, head_model, electrodes, coarse_grid,
                                 coarse_leadfield):
        sub = leadfield_subset(head_model, electrodes, coarse_grid, [3, 17])
        assert np.allclose(sub.gain[:, 0:3], coarse_leadfield.column_block(3))
        assert np.allclose(sub.gain[:, 3:6], coarse_leadfield.column_block(17))


class TestErpWaveform:
    def test_peak_at_latency(self):
        spec = ErpSpec(latency_ms=200.0, width_ms=60.0, amplitude=2.5)
        w = erp_waveform(spec, fs_hz=500.0, n_samples=300)
        assert np.isclose(w[100], 2.5)  # 200 ms at 500 Hz is sample 100
        assert np.argmax(w) == 100

    def test_width_is_fwhm(self):
        spec = ErpSpec(latency_ms=200.0, width_ms=60.0, amplitude=1.0)
        w = erp_waveform(spec, fs_hz=1000.0, n_samples=500)
        # half maximum at latency +/- width/2 = 170 ms and 230 ms
        assert np.isclose(w[170], 0.5, atol=5e-3)
        assert np.isclose(w[230], 0.5, atol=5e-3)

    def test_invalid_specs(self):
        with pytest.raises(SimulationError):
            ErpSpec(latency_ms=100.0, width_ms=0.0, amplitude=1.0)
        with pytest.raises(SimulationError):
            erp_waveform(ErpSpec(100.0, 50.0, 1.0), fs_hz=500.0, n_samples=1)


class TestBrownNoise:
    def test_normalized(self):
        b = brown_noise(512, seed=0)
        assert abs(b.mean()) < 1e-12
        assert np.isclose(b.std(), 1.0)

    def test_spectral_slope_near_minus_two(self):
        # average periodograms over many seeds, fit log-log slope
        n = 2048
        psd = np.zeros(n // 2 - 1)
        for seed in range(50):
            spec = np.abs(np.fft.rfft(brown_noise(n, seed=seed))) ** 2
            psd += spec[1 : n // 2]
        freqs = np.fft.rfftfreq(n)[1 : n // 2]
        # fit over the low/mid band where the random-walk spectrum is clean
        band = freqs < 0.1
        slope = np.polyfit(np.log10(freqs[band]), np.log10(psd[band]), 1)[0]
        assert abs(slope - (-2.0)) < 0.5

    def test_deterministic(self):
        assert np.array_equal(brown_noise(128, seed=42), brown_noise(128, seed=42))


class TestSnrDb:
    def test_known_trace_ratio(self):
        rng = np.random.default_rng(0)
        noise = rng.standard_normal((4, 100))
        # signal epoch with sqrt(10) times the noise amplitude: +10 dB exactly
        epoch = EegEpoch(np.sqrt(10.0) * noise, fs_hz=500.0)
        silent = EegEpoch(noise, fs_hz=500.0)
        assert np.isclose(snr_db(epoch, silent), 10.0, atol=1e-12)

    def test_channel_mismatch_raises(self):
        a = EegEpoch(np.random.default_rng(0).standard_normal((4, 50)), 500.0)
        b = EegEpoch(np.random.default_rng(0).standard_normal((5, 50)), 500.0)
        with pytest.raises(SimulationError):
            snr_db(a, b)


@pytest.fixture(scope="module")
def active_leadfield(head_model, electrodes, coarse_grid):
    return leadfield_subset(head_model, electrodes, coarse_grid, [40])


class TestSimulateEpoch:
    def test_calibrated_snr(self, active_leadfield):
        erp = ErpSpec(200.0, 60.0, 1.0)
        noise = NoiseSpec(target_snr_db=10.0, n_trials=5, seed=1)
        epoch, silent = simulate_epoch(active_leadfield, [(0, np.array([0, 0, 1.0]))],
                                       erp, noise, fs_hz=500.0, n_samples=200)
        assert abs(snr_db(epoch, silent) - 10.0) <= 0.1

    def test_trial_averaging_shrinks_noise(self, active_leadfield):
        # with a fixed gain, the silent epoch's power must shrink ~ 1/n_trials
        erp = ErpSpec(200.0, 60.0, 1.0)
        powers = {}
        for n_trials in (1, 16):
            acc = 0.0
            for seed in range(8):
                noise = NoiseSpec(target_snr_db=0.0, n_trials=n_trials, seed=seed)
                _, silent = simulate_epoch(
                    active_leadfield, [(0, np.array([0, 0, 1.0]))],
                    erp, noise, fs_hz=500.0, n_samples=400, noise_gain=1.0,
                )
                acc += float(np.mean(silent.data**2))
            powers[n_trials] = acc / 8
        assert np.isclose(powers[1] / powers[16], 16.0, rtol=0.5)

    def test_deterministic_given_seed(self, active_leadfield):
        erp = ErpSpec(200.0, 60.0, 1.0)
        noise = NoiseSpec(target_snr_db=5.0, n_trials=3, seed=9)
        e1, _ = simulate_epoch(active_leadfield, [(0, np.array([1.0, 0, 0]))],
                               erp, noise, 500.0, 100)
        e2, _ = simulate_epoch(active_leadfield, [(0, np.array([1.0, 0, 0]))],
                               erp, noise, 500.0, 100)
        assert np.array_equal(e1.data, e2.data)

    def test_zero_moment_raises(self, active_leadfield):
        erp = ErpSpec(200.0, 60.0, 1.0)
        noise = NoiseSpec(target_snr_db=5.0, seed=0)
        with pytest.raises(SimulationError, match="unreachable SNR"):
            simulate_epoch(active_leadfield, [(0, np.zeros(3))], erp, noise, 500.0, 100)

    def test_voxel_out_of_range(self, active_leadfield):
        erp = ErpSpec(200.0, 60.0, 1.0)
        noise = NoiseSpec(target_snr_db=5.0, seed=0)
        with pytest.raises(SimulationError, match="out of range"):
            simulate_epoch(active_leadfield, [(5, np.array([0, 0, 1.0]))],
                           erp, noise, 500.0, 100)

    def test_baseline_window_precedes_peak(self, active_leadfield):
        erp = ErpSpec(200.0, 60.0, 1.0)
        noise = NoiseSpec(target_snr_db=20.0, seed=0)
        epoch, _ = simulate_epoch(active_leadfield, [(0, np.array([0, 0, 1.0]))],
                                  erp, noise, 500.0, 200)
        assert epoch.baseline_cols is not None
        lo, hi = epoch.baseline_cols
        assert lo == 0 and hi <= 100  # peak sits at sample 100
