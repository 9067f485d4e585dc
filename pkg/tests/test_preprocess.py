"""Tests for FIR filtering, resampling and z-scoring."""

import sys
import os

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from eeg_gafs.errors import ConfigurationError, DegenerateError, NyquistError
from eeg_gafs.ingest import ChannelSpec, SineComponent, synthesize
from eeg_gafs.models import Recording
from eeg_gafs.preprocess import (
    FilterSpec,
    default_taps,
    fir_bandpass,
    highpass_kernel,
    lowpass_kernel,
    notch,
    resample,
    zscore,
)

RATE = 250.0


def _tone(freq, seconds=30.0, amplitude=1.0, offset=0.0):
    spec = [ChannelSpec("Cz", (SineComponent(freq, amplitude),))]
    rec = synthesize(spec, duration=seconds, rate=RATE, seed=0)
    return rec.with_samples(rec.samples + offset)


def _interior(rec, margin):
    return rec.samples[:, margin:rec.n_samples - margin]


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def test_default_taps():
    """3·rate/high-pass cycles, odd, capped below the signal length."""
    spec = FilterSpec()
    assert default_taps(spec, RATE, 100000) == 1501
    assert default_taps(spec, RATE, 1000) == 999
    assert default_taps(spec, RATE, 1001) == 999
    assert default_taps(FilterSpec(fir_order=101), RATE, 100000) == 101


def test_highpass_kernel_has_zero_dc_gain():
    kernel = highpass_kernel(0.5, RATE, 1501)
    assert abs(kernel.sum()) < 1e-12
    assert abs(lowpass_kernel(45.0, RATE, 1501).sum() - 1.0) < 1e-12


def test_bandpass_preserves_length_and_rate():
    rec = _tone(10.0)
    out = fir_bandpass(rec, FilterSpec())

    assert out.samples.shape == rec.samples.shape
    assert out.sampling_rate == rec.sampling_rate


def test_bandpass_passes_in_band_tone():
    """A 10 Hz tone keeps its amplitude away from the zero-padded edges."""
    spec = FilterSpec()
    rec = _tone(10.0)
    taps = default_taps(spec, RATE, rec.n_samples)

    out = fir_bandpass(rec, spec)

    margin = taps
    ratio = _rms(_interior(out, margin)) / _rms(_interior(rec, margin))
    assert abs(ratio - 1.0) < 0.02


def test_bandpass_removes_dc_offset():
    spec = FilterSpec()
    rec = _tone(10.0, offset=100.0)
    taps = default_taps(spec, RATE, rec.n_samples)

    out = fir_bandpass(rec, spec)

    assert abs(_interior(out, taps).mean()) < 0.01


def test_bandpass_attenuates_out_of_band_tone():
    spec = FilterSpec()
    rec = _tone(80.0)
    taps = default_taps(spec, RATE, rec.n_samples)

    out = fir_bandpass(rec, spec)

    assert _rms(_interior(out, taps)) < 0.01 * _rms(_interior(rec, taps))


def test_notch_suppresses_line_frequency():
    """A 50 Hz tone is strongly attenuated; a 10 Hz tone is not."""
    spec = FilterSpec()
    line = _tone(50.0)
    alpha = _tone(10.0)
    taps = default_taps(spec, RATE, line.n_samples)
    margin = taps // 2

    assert _rms(_interior(notch(line, spec), margin)) < 0.05 * _rms(_interior(line, margin))
    ratio = _rms(_interior(notch(alpha, spec), margin)) / _rms(_interior(alpha, margin))
    assert abs(ratio - 1.0) < 0.02


def test_notch_whole_output_on_continuous_recording():
    """Edges included: a 50 Hz unit sine at 500 Hz leaves RMS <= 0.1."""
    rate, seconds = 500.0, 20.0
    t = np.arange(int(rate * seconds)) / rate
    spec = FilterSpec()

    line = notch(Recording(["Cz"], np.sin(2 * np.pi * 50.0 * t), sampling_rate=rate), spec)
    alpha_in = Recording(["Cz"], np.sin(2 * np.pi * 10.0 * t), sampling_rate=rate)
    alpha = notch(alpha_in, spec)

    assert _rms(line.samples) <= 0.1
    assert _rms(alpha.samples) >= 0.9 * _rms(alpha_in.samples)
    assert np.allclose(notch(alpha_in.with_samples(np.zeros((1, t.size))), spec).samples, 0.0, atol=1e-12)


def test_filter_rejects_bad_cutoffs():
    rec = _tone(10.0, seconds=4.0)
    with pytest.raises(NyquistError):
        fir_bandpass(rec, FilterSpec(low_pass_cutoff=130.0))
    with pytest.raises(ConfigurationError):
        fir_bandpass(rec, FilterSpec(high_pass_cutoff=50.0, low_pass_cutoff=40.0))
    with pytest.raises(NyquistError):
        notch(rec, FilterSpec(low_pass_cutoff=45.0, notch_freq=125.0))


def test_zscore_unit_variance():
    rng = np.random.default_rng(1)
    rec = Recording(["C3", "C4"], rng.normal(5.0, 3.0, size=(2, 1000)), sampling_rate=RATE)

    out = zscore(rec)

    assert np.allclose(out.samples.mean(axis=1), 0.0, atol=1e-12)
    assert np.allclose(out.samples.std(axis=1, ddof=1), 1.0, atol=1e-12)


def test_zscore_constant_channel():
    samples = np.vstack([np.arange(10.0), np.full(10, 3.0)])
    rec = Recording(["C3", "C4"], samples, sampling_rate=RATE)

    with pytest.raises(DegenerateError) as excinfo:
        zscore(rec)
    assert excinfo.value.channel == "C4"


def test_resample_changes_rate_and_length():
    """500 Hz to 160 Hz keeps duration and the tone amplitude."""
    spec = [ChannelSpec("Cz", (SineComponent(10.0),))]
    rec = synthesize(spec, duration=10.0, rate=500.0, seed=0)

    out = resample(rec, 160.0)

    assert out.sampling_rate == 160.0
    assert out.n_samples == 1600
    assert abs(_rms(out.samples[:, 100:-100]) - np.sqrt(0.5)) < 0.01


if __name__ == "__main__":
    test_default_taps()
    test_highpass_kernel_has_zero_dc_gain()
    test_bandpass_preserves_length_and_rate()
    test_bandpass_passes_in_band_tone()
    test_bandpass_removes_dc_offset()
    test_notch_suppresses_line_frequency()
    test_notch_whole_output_on_continuous_recording()
    test_zscore_unit_variance()
    test_resample_changes_rate_and_length()
    print("All tests passed!")
