"""Tests for Hjorth, Welch and Morlet features and the data matrix."""

import sys
import os

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from eeg_gafs.errors import ConfigurationError, DegenerateError, FeatureError, InputError, NyquistError
from eeg_gafs.features import (
    BANDS,
    MorletConfig,
    WelchConfig,
    build_matrix,
    expected_column_count,
    feature_columns,
    hjorth_activity,
    hjorth_complexity,
    hjorth_mobility,
    integrate_band,
    morlet_psd,
    resolve_bands,
    welch_psd,
    welch_spectrum,
)
from eeg_gafs.ingest import ChannelSpec, SineComponent, synthesize
from eeg_gafs.models import Band, InstanceSet, Recording


def _sine(freq, rate, seconds, amplitude=1.0):
    t = np.arange(int(rate * seconds)) / rate
    return amplitude * np.sin(2 * np.pi * freq * t)


# --- Hjorth ---------------------------------------------------------------

def test_activity_examples():
    assert hjorth_activity(np.full(100, 3.0)) == 0.0
    alternating = np.tile([-1.0, 1.0], 500)
    assert abs(hjorth_activity(alternating) - 1000 / 999) < 1e-12
    assert abs(hjorth_activity(_sine(10, 1000, 10)) - 0.5) < 1e-3


def test_activity_too_short():
    with pytest.raises(InputError):
        hjorth_activity([1.0])


def test_mobility_of_sampled_sine():
    """Within 1% of 2r·sin(πf/r)."""
    rate, freq = 160.0, 10.0
    x = _sine(freq, rate, 10)
    expected = 2 * rate * np.sin(np.pi * freq / rate)

    assert abs(hjorth_mobility(x, rate) - expected) / expected < 0.01


def test_mobility_and_complexity_scale_invariant():
    rng = np.random.default_rng(0)
    x = rng.normal(size=2000) + _sine(7, 250, 8)
    m, c = hjorth_mobility(x, 250), hjorth_complexity(x, 250)

    for alpha in (0.5, 3.0, 100.0):
        assert abs(hjorth_mobility(alpha * x, 250) - m) < 1e-9
        assert abs(hjorth_complexity(alpha * x, 250) - c) < 1e-9


def test_lowpassed_noise_has_lower_mobility():
    rng = np.random.default_rng(1)
    noise = rng.normal(size=5000)
    smoothed = np.convolve(noise, np.ones(5) / 5, mode="valid")

    assert hjorth_mobility(smoothed, 100) < hjorth_mobility(noise, 100)


def test_complexity_of_sine():
    """A pure sine has complexity ≈ 1; added noise raises it."""
    x = _sine(5, 1000, 10)
    assert abs(hjorth_complexity(x, 1000) - 1.0) < 0.01

    rng = np.random.default_rng(2)
    noisy = x + 0.1 * rng.normal(size=x.size)
    assert hjorth_complexity(noisy, 1000) > hjorth_complexity(x, 1000)


def test_mobility_of_constant_signal():
    with pytest.raises(DegenerateError):
        hjorth_mobility(np.ones(50), 100)


# --- Welch ----------------------------------------------------------------

def test_welch_concentrates_tone_in_its_band():
    """Unit 10 Hz sine at 500 Hz: alpha ≥ 20× lower beta."""
    x = _sine(10, 500, 10)
    alpha = welch_psd(x, 500, BANDS["alpha"])
    beta_l = welch_psd(x, 500, BANDS["beta_l"])

    assert alpha >= 20 * beta_l


def test_welch_zero_signal():
    zeros = np.zeros(1000)
    for band in BANDS.values():
        assert welch_psd(zeros, 250, band) == 0.0


def test_welch_integral_matches_noise_power():
    rng = np.random.default_rng(4)
    x = rng.normal(size=10000)
    freqs, psd = welch_spectrum(x, 100.0)

    total = float(np.sum(psd) * (freqs[1] - freqs[0]))
    assert abs(total - np.var(x)) / np.var(x) < 0.02


def test_welch_bands_partition_total_power():
    """Disjoint bands covering (0, Nyquist] sum to the total above DC."""
    rng = np.random.default_rng(5)
    rate = 100.0
    x = rng.normal(size=6000)
    freqs, psd = welch_spectrum(x, rate)
    partition = [Band(f"b{i}", lo, hi) for i, (lo, hi) in enumerate(
        [(0.5, 10.4), (10.5, 20.4), (20.5, 30.4), (30.5, 40.4), (40.5, 50.0)]
    )]

    pieces = sum(integrate_band(freqs, psd, band) for band in partition)
    total = float(np.sum(psd[freqs > 0]) * (freqs[1] - freqs[0]))

    assert abs(pieces - total) / total < 1e-6


def test_welch_psd_is_band_integral_of_spectrum():
    x = _sine(12, 200, 5) + 0.1
    freqs, psd = welch_spectrum(x, 200)
    assert welch_psd(x, 200, BANDS["alpha"]) == integrate_band(freqs, psd, BANDS["alpha"])


def test_welch_errors():
    x = _sine(10, 100, 2)
    with pytest.raises(NyquistError):
        welch_psd(x, 100, Band("high", 40.0, 50.0))
    with pytest.raises(InputError):
        welch_psd(x, 100, BANDS["alpha"], WelchConfig(segment_len=500))
    with pytest.raises(ConfigurationError):
        WelchConfig(segment_len=4)
    with pytest.raises(ConfigurationError):
        WelchConfig(overlap=1.0)


# --- Morlet ---------------------------------------------------------------

@pytest.mark.parametrize("tone", [6.0, 10.0, 20.0])
def test_morlet_tone_localization(tone):
    """Over single-frequency bands, power peaks at the tone's grid frequency."""
    rate = 250.0
    x = _sine(tone, rate, 10)
    grid = np.arange(2.0, 30.5, 0.5)
    values = [morlet_psd(x, rate, Band(f"g{g}", g, g + 0.25)) for g in grid]

    assert grid[int(np.argmax(values))] == tone


def test_morlet_band_containing_tone_dominates():
    x = _sine(10, 250, 10)
    alpha = morlet_psd(x, 250, BANDS["alpha"])

    assert alpha > morlet_psd(x, 250, BANDS["theta"])
    assert alpha > morlet_psd(x, 250, BANDS["beta"])


def test_morlet_zero_and_scaling():
    rng = np.random.default_rng(6)
    x = rng.normal(size=2500)
    band = BANDS["alpha"]

    assert morlet_psd(np.zeros(2500), 250, band) == 0.0
    base = morlet_psd(x, 250, band)
    assert abs(morlet_psd(2 * x, 250, band) / base - 4.0) < 1e-9


def test_morlet_fixed_cycles():
    cfg = MorletConfig(fixed_cycles=5)
    assert cfg.cycles(np.array([4.0, 30.0])).tolist() == [5.0, 5.0]
    ramp = MorletConfig(freq_range=(4.0, 30.0)).cycles(np.array([4.0, 17.0, 30.0]))
    assert np.allclose(ramp, [3.0, 5.0, 7.0])


def test_morlet_wavelet_longer_than_signal():
    with pytest.raises(InputError):
        morlet_psd(_sine(2, 250, 1), 250, BANDS["delta"])


def test_morlet_config_validation():
    with pytest.raises(ConfigurationError):
        MorletConfig(cycles_lo=2)
    with pytest.raises(ConfigurationError):
        MorletConfig(cycles_lo=7, cycles_hi=3)


# --- matrix ---------------------------------------------------------------

def test_column_count_formula():
    assert expected_column_count(19, 4) == 209
    assert expected_column_count(64, 3) == 576
    assert expected_column_count(15, 3) == 135
    electrodes = [f"E{i}" for i in range(19)]
    assert len(feature_columns(electrodes, resolve_bands(["workload"]))) == 209


def test_resolve_bands():
    assert [b.name for b in resolve_bands(["workload"])] == ["theta_l", "theta_h", "beta_l", "beta_h"]
    assert [b.name for b in resolve_bands(["motor"])] == ["theta", "alpha", "beta"]
    with pytest.raises(ConfigurationError):
        resolve_bands(["kappa"])


def _instances():
    spec = [
        ChannelSpec("C3", (SineComponent(10.0),), noise_std=0.5),
        ChannelSpec("Cz", (SineComponent(6.0),), noise_std=0.5),
        ChannelSpec("C4", (SineComponent(20.0),), noise_std=0.5),
    ]
    recs = [
        synthesize(spec, 4.0, 128.0, seed=i, condition=c, subject=str(i))
        for i, c in enumerate(["REST", "MAT", "REST", "MAT"])
    ]
    return InstanceSet.from_recordings(recs)


def test_build_matrix_layout():
    instances = _instances()
    bands = resolve_bands(["theta", "alpha"])

    fm = build_matrix(instances, bands)

    assert fm.shape == (4, expected_column_count(3, 2))
    assert fm.columns[:7] == [
        "C3_activity", "C3_mobility", "C3_complexity",
        "C3_psd_welch_theta", "C3_psd_morlet_theta",
        "C3_psd_welch_alpha", "C3_psd_morlet_alpha",
    ]
    assert fm.columns[7] == "Cz_activity"
    assert [r.condition for r in fm.row_meta] == ["REST", "MAT", "REST", "MAT"]
    assert np.all(np.isfinite(fm.values))


def test_build_matrix_independent_of_workers():
    instances = _instances()
    bands = resolve_bands(["motor"])

    serial = build_matrix(instances, bands, workers=1)
    threaded = build_matrix(instances, bands, workers=3)

    assert np.array_equal(serial.values, threaded.values)


def test_build_matrix_reports_failing_cell():
    good = _instances().recordings[0]
    flat = Recording(
        channels=good.channels,
        samples=np.vstack([good.samples[0], np.zeros(good.n_samples), good.samples[2]]),
        sampling_rate=good.sampling_rate,
        condition="MAT",
        subject="9",
    )

    with pytest.raises(FeatureError) as excinfo:
        build_matrix(InstanceSet.from_recordings([good, flat]), resolve_bands(["alpha"]))
    assert excinfo.value.row == 1
    assert excinfo.value.electrode == "Cz"
    assert excinfo.value.feature == "mobility"


def test_build_matrix_duplicate_band_names():
    with pytest.raises(ConfigurationError):
        build_matrix(_instances(), [BANDS["alpha"], BANDS["alpha"]])


if __name__ == "__main__":
    test_activity_examples()
    test_mobility_of_sampled_sine()
    test_mobility_and_complexity_scale_invariant()
    test_complexity_of_sine()
    test_welch_concentrates_tone_in_its_band()
    test_welch_bands_partition_total_power()
    for tone in (6.0, 10.0, 20.0):
        test_morlet_tone_localization(tone)
    test_column_count_formula()
    test_build_matrix_layout()
    print("All tests passed!")
