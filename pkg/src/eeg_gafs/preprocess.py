"""FIR band-pass and notch filtering, resampling and per-channel z-scoring."""

import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import signal

from .errors import ConfigurationError, DegenerateError, InputError, NyquistError
from .models import Recording

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterSpec:
    """FIR filter parameters; `fir_order` None picks the default tap count."""
    high_pass_cutoff: float = 0.5
    low_pass_cutoff: float = 45.0
    notch_freq: float = 50.0
    notch_bandwidth: float = 1.0
    fir_order: Optional[int] = None

    def check(self, sampling_rate: float) -> None:
        """Raise if the spec is unusable at `sampling_rate`."""
        nyquist = sampling_rate / 2
        if not (0 < self.high_pass_cutoff < self.low_pass_cutoff):
            raise ConfigurationError(
                f"need 0 < high_pass_cutoff < low_pass_cutoff "
                f"(got {self.high_pass_cutoff}, {self.low_pass_cutoff})"
            )
        if self.low_pass_cutoff >= nyquist:
            raise NyquistError(f"low_pass_cutoff {self.low_pass_cutoff} Hz >= Nyquist {nyquist} Hz")
        if self.notch_bandwidth <= 0:
            raise ConfigurationError(f"notch_bandwidth must be > 0 (got {self.notch_bandwidth})")
        if self.notch_freq - self.notch_bandwidth / 2 <= 0:
            raise ConfigurationError(f"notch band around {self.notch_freq} Hz reaches 0 Hz")
        if self.notch_freq + self.notch_bandwidth / 2 >= nyquist:
            raise NyquistError(f"notch_freq {self.notch_freq} Hz too close to Nyquist {nyquist} Hz")
        if self.fir_order is not None and (self.fir_order < 3 or self.fir_order % 2 == 0):
            raise ConfigurationError(f"fir_order must be an odd tap count >= 3 (got {self.fir_order})")


def _odd(n: int) -> int:
    return n if n % 2 else n + 1


def default_taps(spec: FilterSpec, rate: float, n_samples: int) -> int:
    """Odd tap count: min(odd(3·rate/high_pass_cutoff), n_samples − 1)."""
    taps = spec.fir_order if spec.fir_order is not None else _odd(int(np.ceil(3 * rate / spec.high_pass_cutoff)))
    limit = n_samples - 1 if (n_samples - 1) % 2 else n_samples - 2
    taps = min(taps, limit)
    if taps < 3:
        raise ConfigurationError(f"signal of {n_samples} samples is too short to filter")
    return taps


def _apply(rec: Recording, kernel: np.ndarray) -> Recording:
    # "same" convolution with an odd kernel = zero padding plus (taps-1)/2 delay compensation
    filtered = np.vstack([signal.convolve(ch, kernel, mode="same", method="auto") for ch in rec.samples])
    return rec.with_samples(filtered)


def lowpass_kernel(cutoff: float, rate: float, taps: int) -> np.ndarray:
    """Hamming windowed-sinc low-pass with unit DC gain."""
    return signal.firwin(taps, cutoff, window="hamming", pass_zero="lowpass", scale=True, fs=rate)


def highpass_kernel(cutoff: float, rate: float, taps: int) -> np.ndarray:
    """High-pass by spectral inversion of the unit-DC low-pass, so DC gain is exactly 0."""
    kernel = -lowpass_kernel(cutoff, rate, taps)
    kernel[taps // 2] += 1.0
    return kernel


def notch_kernel(center: float, bandwidth: float, rate: float, taps: int) -> np.ndarray:
    """Hamming windowed-sinc band-stop over [center ± bandwidth/2]."""
    edges = [center - bandwidth / 2, center + bandwidth / 2]
    return signal.firwin(taps, edges, window="hamming", pass_zero="bandstop", scale=True, fs=rate)


def fir_bandpass(rec: Recording, spec: FilterSpec) -> Recording:
    """
    High-pass then low-pass FIR filtering of every channel.

    Output length and sampling rate equal the input's.

    Raises:
        ConfigurationError: Invalid cutoffs for this sampling rate
    """
    spec.check(rec.sampling_rate)
    taps = default_taps(spec, rec.sampling_rate, rec.n_samples)
    logger.debug(
        f"Band-pass [{spec.high_pass_cutoff}, {spec.low_pass_cutoff}] Hz, {taps} taps, "
        f"subject {rec.subject!r}"
    )
    out = _apply(rec, highpass_kernel(spec.high_pass_cutoff, rec.sampling_rate, taps))
    return _apply(out, lowpass_kernel(spec.low_pass_cutoff, rec.sampling_rate, taps))


def notch(rec: Recording, spec: FilterSpec) -> Recording:
    """
    FIR band-stop at `spec.notch_freq` (power-line removal).

    Raises:
        ConfigurationError: Invalid notch for this sampling rate
    """
    spec.check(rec.sampling_rate)
    taps = default_taps(spec, rec.sampling_rate, rec.n_samples)
    logger.debug(f"Notch at {spec.notch_freq} Hz (+/-{spec.notch_bandwidth / 2} Hz), {taps} taps")
    return _apply(rec, notch_kernel(spec.notch_freq, spec.notch_bandwidth, rec.sampling_rate, taps))


def zscore(rec: Recording) -> Recording:
    """
    Per-channel (x − mean) / std with the n−1 denominator.

    Raises:
        DegenerateError: A channel has zero variance
    """
    mean = rec.samples.mean(axis=1, keepdims=True)
    std = rec.samples.std(axis=1, ddof=1, keepdims=True)
    for label, s in zip(rec.channels, std[:, 0]):
        if not s > 0:
            raise DegenerateError(f"channel {label} has zero variance", channel=label)
    return rec.with_samples((rec.samples - mean) / std)


def resample(rec: Recording, rate: float) -> Recording:
    """
    Polyphase resampling to `rate` Hz (used to merge datasets recorded at different rates).

    Raises:
        ConfigurationError: Non-positive target rate
        InputError: Fewer than 2 samples left after resampling
    """
    if rate <= 0:
        raise ConfigurationError(f"resample rate must be > 0 (got {rate})")
    if rate == rec.sampling_rate:
        return rec
    ratio = Fraction(rate / rec.sampling_rate).limit_denominator(1000)
    samples = signal.resample_poly(rec.samples, ratio.numerator, ratio.denominator, axis=1)
    if samples.shape[1] < 2:
        raise InputError(f"resampling subject {rec.subject!r} to {rate} Hz leaves {samples.shape[1]} samples")
    logger.debug(f"Resampled {rec.sampling_rate:g} Hz -> {rate:g} Hz (x{ratio.numerator}/{ratio.denominator})")
    return replace(rec, samples=samples, sampling_rate=float(rate))
