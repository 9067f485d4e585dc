"""Hjorth, Welch PSD and Morlet-wavelet PSD features and the data matrix."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, signal

from .errors import ConfigurationError, DegenerateError, EegGafsError, FeatureError, InputError, NyquistError
from .models import Band, ColumnMeta, FeatureMatrix, InstanceSet, Recording, RowMeta

logger = logging.getLogger(__name__)

# Canonical EEG rhythms and the narrower sub-bands used for mental workload
BANDS: Dict[str, Band] = {
    b.name: b
    for b in (
        Band("delta", 0.5, 4.0),
        Band("theta", 4.0, 8.0),
        Band("alpha", 8.0, 13.0),
        Band("beta", 13.0, 30.0),
        Band("gamma", 31.0, 45.0),
        Band("theta_l", 4.1, 5.8),
        Band("theta_h", 5.9, 7.4),
        Band("beta_l", 13.0, 19.9),
        Band("beta_h", 20.0, 25.0),
    )
}

BAND_SETS: Dict[str, Tuple[str, ...]] = {
    "workload": ("theta_l", "theta_h", "beta_l", "beta_h"),
    "motor": ("theta", "alpha", "beta"),
}


def resolve_bands(names: Sequence[str]) -> List[Band]:
    """Look up preset bands (or a named band set) by name."""
    bands: List[Band] = []
    for name in names:
        if name in BAND_SETS:
            bands.extend(BANDS[b] for b in BAND_SETS[name])
        elif name in BANDS:
            bands.append(BANDS[name])
        else:
            raise ConfigurationError(f"unknown band {name!r}")
    return bands


@dataclass(frozen=True)
class WelchConfig:
    """Welch estimator settings; `segment_len` None means one second of samples."""
    segment_len: Optional[int] = None
    overlap: float = 0.5
    window: str = "hamming"

    def __post_init__(self):
        if self.segment_len is not None and self.segment_len < 8:
            raise ConfigurationError(f"segment_len must be >= 8 (got {self.segment_len})")
        if not (0 <= self.overlap < 1):
            raise ConfigurationError(f"overlap must be in [0, 1) (got {self.overlap})")


@dataclass(frozen=True)
class MorletConfig:
    """
    Complex Morlet settings.

    Cycle counts rise linearly from `cycles_lo` at the lowest analysis
    frequency to `cycles_hi` at the highest; `freq_range` pins that range
    (set from all bands by `build_matrix`), `fixed_cycles` disables the
    interpolation.
    """
    cycles_lo: float = 3.0
    cycles_hi: float = 7.0
    freq_step: float = 0.5
    fixed_cycles: Optional[float] = None
    freq_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not (3 <= self.cycles_lo <= self.cycles_hi):
            raise ConfigurationError(
                f"need 3 <= cycles_lo <= cycles_hi (got {self.cycles_lo}, {self.cycles_hi})"
            )
        if self.freq_step <= 0:
            raise ConfigurationError(f"freq_step must be > 0 (got {self.freq_step})")
        if self.fixed_cycles is not None and self.fixed_cycles <= 0:
            raise ConfigurationError(f"fixed_cycles must be > 0 (got {self.fixed_cycles})")

    def cycles(self, freqs: np.ndarray) -> np.ndarray:
        freqs = np.asarray(freqs, dtype=float)
        if self.fixed_cycles is not None:
            return np.full(freqs.shape, float(self.fixed_cycles))
        fmin, fmax = self.freq_range if self.freq_range else (freqs.min(), freqs.max())
        if fmax <= fmin:
            return np.full(freqs.shape, float(self.cycles_lo))
        frac = np.clip((freqs - fmin) / (fmax - fmin), 0.0, 1.0)
        return self.cycles_lo + (self.cycles_hi - self.cycles_lo) * frac


def _as_signal(x, minimum: int, op: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < minimum:
        raise InputError(f"{op} needs a 1-D signal of at least {minimum} samples (got shape {x.shape})")
    return x


def _derivative(x: np.ndarray, rate: float) -> np.ndarray:
    return np.diff(x) * rate


def hjorth_activity(x) -> float:
    """Unbiased variance of the signal."""
    x = _as_signal(x, 2, "activity")
    return float(np.var(x, ddof=1))


def hjorth_mobility(x, rate: float = 1.0) -> float:
    """sqrt(activity(x′) / activity(x)), x′ the forward difference times `rate`."""
    x = _as_signal(x, 3, "mobility")
    activity = hjorth_activity(x)
    if activity <= 0:
        raise DegenerateError("mobility undefined for a zero-activity signal")
    return float(np.sqrt(hjorth_activity(_derivative(x, rate)) / activity))


def hjorth_complexity(x, rate: float = 1.0) -> float:
    """mobility(x′) / mobility(x)."""
    x = _as_signal(x, 4, "complexity")
    mobility = hjorth_mobility(x, rate)
    if mobility <= 0:
        raise DegenerateError("complexity undefined for a zero-mobility signal")
    return hjorth_mobility(_derivative(x, rate), rate) / mobility


def _check_band(band: Band, rate: float) -> None:
    if band.hi >= rate / 2:
        raise NyquistError(f"band {band.name} [{band.lo}, {band.hi}] Hz reaches Nyquist ({rate / 2} Hz)")


def welch_spectrum(x, rate: float, cfg: WelchConfig = WelchConfig()) -> Tuple[np.ndarray, np.ndarray]:
    """
    One-sided averaged windowed periodogram (density scaling).

    Raises:
        InputError: Signal shorter than one configured segment
    """
    x = _as_signal(x, 2, "welch")
    if cfg.segment_len is None:
        nperseg = min(int(round(rate)), x.size)
    else:
        nperseg = cfg.segment_len
        if nperseg > x.size:
            raise InputError(f"segment_len {nperseg} exceeds signal length {x.size}")
    noverlap = int(round(nperseg * cfg.overlap))
    if noverlap >= nperseg:
        noverlap = nperseg - 1
    return signal.welch(
        x,
        fs=rate,
        window=cfg.window,
        nperseg=nperseg,
        noverlap=noverlap,
        nfft=nperseg,
        detrend=False,
        return_onesided=True,
        scaling="density",
        average="mean",
    )


def integrate_band(freqs: np.ndarray, psd: np.ndarray, band: Band) -> float:
    """Sum of PSD bins whose centers lie in [band.lo, band.hi], times the bin width."""
    if freqs.size < 2:
        return 0.0
    df = freqs[1] - freqs[0]
    return float(np.sum(psd[band.contains(freqs)]) * df)


def welch_psd(x, rate: float, band: Band, cfg: WelchConfig = WelchConfig()) -> float:
    """Welch PSD integrated over a band."""
    _check_band(band, rate)
    freqs, psd = welch_spectrum(x, rate, cfg)
    return integrate_band(freqs, psd, band)


def band_frequencies(band: Band, step: float) -> np.ndarray:
    """Analysis grid lo, lo+step, … not exceeding hi."""
    count = int(np.floor((band.hi - band.lo) / step + 1e-9)) + 1
    return np.round(band.lo + step * np.arange(count), 10)


def morlet_band_power(x, rate: float, freqs: np.ndarray, cycles: np.ndarray) -> Tuple[np.ndarray, int]:
    """
    Σ_f |cx(f, t)|² over the given frequencies.

    Each wavelet is truncated at ±4σ and its spectrum scaled to unit
    peak amplitude before the frequency-domain product.

    Returns:
        (power over time, largest wavelet half-width in samples)
    """
    x = _as_signal(x, 2, "morlet")
    n = x.size
    sigmas = cycles / (2 * np.pi * freqs)
    halves = np.ceil(4 * sigmas * rate).astype(int)
    widest = int(halves.max())
    if 2 * widest + 1 > n:
        raise InputError(
            f"wavelet support of {2 * widest + 1} samples exceeds signal length {n}"
        )

    n_fft = fft.next_fast_len(n + 2 * widest)
    spectrum = fft.fft(x, n_fft)
    power = np.zeros(n)
    for f, sigma, half in zip(freqs, sigmas, halves):
        t = np.arange(-half, half + 1) / rate
        cmw = np.exp(2j * np.pi * f * t) * np.exp(-t ** 2 / (2 * sigma ** 2))
        cmw_x = fft.fft(cmw, n_fft)
        cmw_x /= np.abs(cmw_x).max()
        cx = fft.ifft(spectrum * cmw_x)[half:half + n]
        power += np.abs(cx) ** 2
    return power, widest


def morlet_psd(x, rate: float, band: Band, cfg: MorletConfig = MorletConfig()) -> float:
    """
    Time-averaged Morlet band power.

    Samples within the widest wavelet's half-width of either edge are
    excluded from the average.
    """
    _check_band(band, rate)
    freqs = band_frequencies(band, cfg.freq_step)
    power, widest = morlet_band_power(x, rate, freqs, cfg.cycles(freqs))
    valid = power[widest:power.size - widest]
    if valid.size == 0:
        raise InputError("no samples left after excluding wavelet edge regions")
    return float(valid.mean())


def feature_columns(channels: Sequence[str], bands: Sequence[Band]) -> List[ColumnMeta]:
    """Electrode-major layout: Hjorth triple, then Welch/Morlet per band."""
    columns = []
    for ch in channels:
        columns.extend(ColumnMeta(electrode=ch, kind=kind) for kind in ("activity", "mobility", "complexity"))
        for band in bands:
            columns.append(ColumnMeta(electrode=ch, kind="psd_welch", band=band.name))
            columns.append(ColumnMeta(electrode=ch, kind="psd_morlet", band=band.name))
    return columns


def expected_column_count(n_electrodes: int, n_bands: int) -> int:
    return n_electrodes * (3 + n_bands * 2)


def _row_features(
    row: int,
    rec: Recording,
    bands: Sequence[Band],
    wcfg: WelchConfig,
    mcfg: MorletConfig,
) -> np.ndarray:
    values = []
    rate = rec.sampling_rate
    for ch, x in zip(rec.channels, rec.samples):
        steps = [
            ("activity", lambda: hjorth_activity(x)),
            ("mobility", lambda: hjorth_mobility(x, rate)),
            ("complexity", lambda: hjorth_complexity(x, rate)),
        ]
        for band in bands:
            steps.append((f"psd_welch_{band.name}", lambda b=band: welch_psd(x, rate, b, wcfg)))
            steps.append((f"psd_morlet_{band.name}", lambda b=band: morlet_psd(x, rate, b, mcfg)))
        for feature, compute in steps:
            try:
                values.append(compute())
            except EegGafsError as e:
                raise FeatureError(str(e), row=row, electrode=ch, feature=feature) from e
    return np.array(values)


def build_matrix(
    instances: InstanceSet,
    bands: Sequence[Band],
    wcfg: WelchConfig = WelchConfig(),
    mcfg: MorletConfig = MorletConfig(),
    workers: int = 1,
) -> FeatureMatrix:
    """
    Compute every feature of every channel of every instance.

    Rows follow the input order. Rows may be computed on a thread pool;
    the result does not depend on `workers`.

    Raises:
        FeatureError: A feature failed (carries row, electrode and feature)
        ConfigurationError: Duplicate band names
    """
    names = [b.name for b in bands]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"band names must be unique (got {names})")
    if bands and mcfg.freq_range is None and mcfg.fixed_cycles is None:
        grid = np.concatenate([band_frequencies(b, mcfg.freq_step) for b in bands])
        mcfg = replace(mcfg, freq_range=(float(grid.min()), float(grid.max())))

    columns = feature_columns(instances.channels, bands)
    logger.info(
        f"Computing {len(columns)} features for {len(instances)} instances "
        f"({len(instances.channels)} electrodes, {len(bands)} bands)"
    )

    def compute(item):
        row, rec = item
        return _row_features(row, rec, bands, wcfg, mcfg)

    items = list(enumerate(instances.recordings))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(compute, items))
    else:
        rows = [compute(item) for item in items]

    values = np.vstack(rows) if rows else np.empty((0, len(columns)))
    bad = ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        meta = columns[c]
        raise FeatureError("non-finite value", row=int(r), electrode=meta.electrode, feature=meta.name)

    return FeatureMatrix(
        values=values,
        column_meta=columns,
        row_meta=[RowMeta(subject=r.subject, condition=r.condition) for r in instances.recordings],
    )
