"""Loading recordings from EDF and CSV, segmentation and synthetic signals."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd

from .errors import (
    CsvParseError,
    EdfIntegrityError,
    EdfParseError,
    InputError,
    NyquistError,
)
from .models import Recording

logger = logging.getLogger(__name__)

EDF_HEADER_BYTES = 256
EDF_SIGNAL_HEADER_BYTES = 256
ANNOTATION_LABEL = "EDF Annotations"

# (field name, width) of the per-signal header, stored field-major for all signals
_SIGNAL_FIELDS: Tuple[Tuple[str, int], ...] = (
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefilter", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)

T = TypeVar("T")


def _ascii_field(raw: bytes, offset: int, width: int, what: str) -> str:
    if offset + width > len(raw):
        raise EdfParseError(f"header truncated while reading {what}", offset=offset)
    return raw[offset:offset + width].decode("latin-1").strip()


def _number_field(raw: bytes, offset: int, width: int, what: str, cast: Callable[[str], T]) -> T:
    text = _ascii_field(raw, offset, width, what)
    try:
        return cast(text)
    except ValueError:
        raise EdfParseError(f"{what} is not a number: {text!r}", offset=offset) from None


def _clean_label(label: str) -> str:
    # PhysioNet motor files pad labels with dots ("Fc5.", "C3..")
    return label.strip().rstrip(".")


def load_edf(path: Path, condition: str = "", subject: str = "") -> Recording:
    """
    Read a classic 16-bit EDF file.

    Digital samples are scaled to physical units with the header's
    min/max pairs. `EDF Annotations` signals are skipped.

    Args:
        path: EDF file
        condition: Task label for the recording
        subject: Subject id

    Returns:
        Recording with one row per data signal

    Raises:
        EdfParseError: Malformed header (message carries the byte offset)
        EdfIntegrityError: Header and data records disagree
    """
    path = Path(path)
    raw = path.read_bytes()
    logger.debug(f"Reading EDF file {path} ({len(raw)} bytes)")

    if len(raw) < EDF_HEADER_BYTES:
        raise EdfParseError(f"file shorter than the {EDF_HEADER_BYTES}-byte EDF header", offset=len(raw))

    header_bytes = _number_field(raw, 184, 8, "header byte count", int)
    n_records = _number_field(raw, 236, 8, "number of data records", int)
    record_duration = _number_field(raw, 244, 8, "data record duration", float)
    n_signals = _number_field(raw, 252, 4, "number of signals", int)

    if n_signals <= 0:
        raise EdfIntegrityError(f"{path}: header declares {n_signals} signals")
    if record_duration <= 0:
        raise EdfIntegrityError(f"{path}: data record duration must be > 0 (got {record_duration})")
    expected_header = EDF_HEADER_BYTES + n_signals * EDF_SIGNAL_HEADER_BYTES
    if header_bytes != expected_header:
        raise EdfParseError(
            f"header byte count {header_bytes} does not match {n_signals} signals ({expected_header})",
            offset=184,
        )

    fields = {}
    offset = EDF_HEADER_BYTES
    for name, width in _SIGNAL_FIELDS:
        values = []
        for s in range(n_signals):
            what = f"{name} of signal {s}"
            if name in ("physical_min", "physical_max"):
                values.append(_number_field(raw, offset, width, what, float))
            elif name in ("digital_min", "digital_max", "samples_per_record"):
                values.append(_number_field(raw, offset, width, what, int))
            else:
                values.append(_ascii_field(raw, offset, width, what))
            offset += width
        fields[name] = values

    spr = np.array(fields["samples_per_record"], dtype=np.int64)
    if np.any(spr <= 0):
        raise EdfIntegrityError(f"{path}: samples per record must be positive")
    record_bytes = int(spr.sum()) * 2
    data_bytes = len(raw) - header_bytes
    if n_records == -1:
        if data_bytes % record_bytes:
            raise EdfIntegrityError(f"{path}: data size {data_bytes} is not a whole number of records")
        n_records = data_bytes // record_bytes
    if n_records <= 0:
        raise EdfIntegrityError(f"{path}: no data records")
    if data_bytes != n_records * record_bytes:
        raise EdfIntegrityError(
            f"{path}: expected {n_records} records of {record_bytes} bytes "
            f"({n_records * record_bytes} bytes), found {data_bytes}"
        )

    data_idx = [s for s in range(n_signals) if fields["label"][s] != ANNOTATION_LABEL]
    if not data_idx:
        raise EdfIntegrityError(f"{path}: only annotation signals present")
    data_spr = {int(spr[s]) for s in data_idx}
    if len(data_spr) != 1:
        raise EdfIntegrityError(f"{path}: data signals have mixed sampling rates {sorted(data_spr)}")

    digital = np.frombuffer(raw, dtype="<i2", offset=header_bytes).reshape(n_records, int(spr.sum()))
    starts = np.concatenate([[0], np.cumsum(spr)])

    samples = []
    for s in data_idx:
        dmin, dmax = fields["digital_min"][s], fields["digital_max"][s]
        pmin, pmax = fields["physical_min"][s], fields["physical_max"][s]
        if dmax == dmin:
            raise EdfIntegrityError(f"{path}: signal {s} has digital_min == digital_max")
        gain = (pmax - pmin) / (dmax - dmin)
        values = digital[:, starts[s]:starts[s + 1]].reshape(-1).astype(float)
        samples.append((values - dmin) * gain + pmin)

    rate = data_spr.pop() / record_duration
    recording = Recording(
        channels=[_clean_label(fields["label"][s]) for s in data_idx],
        samples=np.vstack(samples),
        sampling_rate=rate,
        condition=condition,
        subject=subject,
    )
    logger.info(
        f"Loaded EDF {path.name}: {len(recording.channels)} channels x "
        f"{recording.n_samples} samples at {rate:g} Hz"
    )
    return recording


def load_csv(path: Path, sampling_rate: float, condition: str, subject: str = "") -> Recording:
    """
    Read a CSV recording whose header row holds the channel labels.

    Args:
        path: UTF-8 comma-separated file
        sampling_rate: Samples per second
        condition: Task label
        subject: Subject id

    Returns:
        Recording with one channel per column

    Raises:
        CsvParseError: Ragged rows or non-numeric cells (with row/col)
        InvalidRecordingError: Duplicate labels or fewer than 2 samples
    """
    path = Path(path)
    try:
        table = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise CsvParseError(f"{path}: file is empty") from None
    except pd.errors.ParserError as e:
        raise CsvParseError(f"{path}: ragged rows ({e})") from e

    header = [str(h).strip() for h in table.iloc[0].tolist()]
    body = table.iloc[1:]

    missing = body.isna()
    if missing.to_numpy().any():
        row = int(np.argwhere(missing.to_numpy())[0][0]) + 1
        raise CsvParseError(f"{path}: ragged row with fewer fields than the header", row=row)

    numeric = body.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = (int(v) for v in np.argwhere(bad)[0])
        raise CsvParseError(
            f"{path}: non-numeric cell {body.iat[row, col]!r}", row=row + 1, col=col
        )

    recording = Recording(
        channels=header,
        samples=numeric.to_numpy(dtype=float).T,
        sampling_rate=sampling_rate,
        condition=condition,
        subject=subject,
    )
    logger.info(f"Loaded CSV {path.name}: {len(header)} channels x {recording.n_samples} samples")
    return recording


@dataclass(frozen=True)
class SineComponent:
    """A·sin(2π f t + φ)."""
    freq: float
    amplitude: float = 1.0
    phase: float = 0.0


@dataclass(frozen=True)
class ChannelSpec:
    """Sum of sinusoids plus Gaussian noise for one synthetic channel."""
    label: str
    components: Tuple[SineComponent, ...] = field(default_factory=tuple)
    noise_std: float = 0.0


def synthesize(
    spec: Sequence[ChannelSpec],
    duration: float,
    rate: float,
    seed: int,
    condition: str = "",
    subject: str = "",
) -> Recording:
    """
    Generate a deterministic synthetic recording.

    Each channel is Σ A_i·sin(2π f_i t + φ_i) plus N(0, noise_std²) noise
    drawn from one stream seeded by `seed`, in channel order.

    Raises:
        NyquistError: A component frequency at or above rate/2
        InputError: Fewer than 2 samples
    """
    n = int(round(duration * rate))
    if n < 2:
        raise InputError(f"duration x rate must give at least 2 samples (got {n})")
    for ch in spec:
        for comp in ch.components:
            if comp.freq >= rate / 2:
                raise NyquistError(
                    f"channel {ch.label}: {comp.freq} Hz is at or above Nyquist ({rate / 2} Hz)"
                )

    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    rows = []
    for ch in spec:
        x = np.zeros(n)
        for comp in ch.components:
            x += comp.amplitude * np.sin(2 * np.pi * comp.freq * t + comp.phase)
        if ch.noise_std > 0:
            x += rng.normal(0.0, ch.noise_std, size=n)
        rows.append(x)

    return Recording(
        channels=[ch.label for ch in spec],
        samples=np.vstack(rows),
        sampling_rate=rate,
        condition=condition,
        subject=subject,
    )


@dataclass(frozen=True)
class Segment:
    """A labeled window of a recording, in seconds from its start."""
    onset: float
    duration: float
    condition: str


def segment(rec: Recording, segments: Sequence[Segment]) -> List[Recording]:
    """
    Cut cue-aligned windows out of a recording.

    Raises:
        InputError: A window falls outside the recording
    """
    pieces = []
    for seg in segments:
        start = int(round(seg.onset * rec.sampling_rate))
        stop = start + int(round(seg.duration * rec.sampling_rate))
        if start < 0 or stop > rec.n_samples or stop - start < 2:
            raise InputError(
                f"segment [{seg.onset}s, +{seg.duration}s) outside recording of {rec.duration:g}s"
            )
        pieces.append(Recording(
            channels=list(rec.channels),
            samples=rec.samples[:, start:stop].copy(),
            sampling_rate=rec.sampling_rate,
            condition=seg.condition,
            subject=rec.subject,
        ))
    logger.debug(f"Cut {len(pieces)} segments from subject {rec.subject!r}")
    return pieces


def load_many(loaders: Sequence[Callable[[], Recording]], workers: int = 1) -> List[Recording]:
    """Run independent per-file loaders, optionally on a thread pool; order is preserved."""
    if workers <= 1 or len(loaders) <= 1:
        return [load() for load in loaders]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda load: load(), loaders))
