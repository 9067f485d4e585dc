"""Data models shared by ingest, features, learners and the GA."""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DataError, InvalidRecordingError

logger = logging.getLogger(__name__)

# Column kinds produced by feature extraction, plus the synthetic kinds
# used for PCA scores and externally prepared matrices.
HJORTH_KINDS = ("activity", "mobility", "complexity")
PSD_KINDS = ("psd_welch", "psd_morlet")
COLUMN_KINDS = HJORTH_KINDS + PSD_KINDS + ("pca_component", "external")


@dataclass
class Recording:
    """A multichannel recording of one task instance."""
    channels: List[str]
    samples: np.ndarray
    sampling_rate: float
    condition: str = ""
    subject: str = ""

    def __post_init__(self):
        self.channels = [str(c) for c in self.channels]
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))

        if self.sampling_rate <= 0:
            raise InvalidRecordingError(f"sampling_rate must be > 0 (got {self.sampling_rate})")
        if len(set(self.channels)) != len(self.channels):
            dupes = sorted({c for c in self.channels if self.channels.count(c) > 1})
            raise InvalidRecordingError(f"duplicate channel labels: {', '.join(dupes)}")
        if self.samples.shape[0] != len(self.channels):
            raise InvalidRecordingError(
                f"{len(self.channels)} channel labels but {self.samples.shape[0]} sample rows"
            )
        if self.samples.shape[1] < 2:
            raise InvalidRecordingError(
                f"each channel needs at least 2 samples (got {self.samples.shape[1]})"
            )

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[1])

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.n_samples / self.sampling_rate

    def channel(self, label: str) -> np.ndarray:
        return self.samples[self.channels.index(label)]

    def with_samples(self, samples: np.ndarray) -> "Recording":
        """Copy with new sample data and the same metadata."""
        return replace(self, samples=samples)

    def pick(self, channels: Sequence[str]) -> "Recording":
        """Restrict to, and reorder by, the given channel labels."""
        missing = [c for c in channels if c not in self.channels]
        if missing:
            raise InvalidRecordingError(
                f"recording (subject {self.subject!r}) lacks channels: {', '.join(missing)}"
            )
        idx = [self.channels.index(c) for c in channels]
        return replace(self, channels=list(channels), samples=self.samples[idx])

    def rename(self, aliases: Dict[str, str]) -> "Recording":
        """Relabel channels; labels absent from `aliases` are kept."""
        return replace(self, channels=[aliases.get(c, c) for c in self.channels])


@dataclass
class InstanceSet:
    """Recordings sharing one channel layout and sampling rate."""
    recordings: List[Recording]

    def __post_init__(self):
        if not self.recordings:
            raise InvalidRecordingError("instance set is empty")
        first = self.recordings[0]
        for i, rec in enumerate(self.recordings[1:], start=1):
            if rec.channels != first.channels:
                raise InvalidRecordingError(f"recording {i} has a different channel list")
            if rec.sampling_rate != first.sampling_rate:
                raise InvalidRecordingError(
                    f"recording {i} sampled at {rec.sampling_rate} Hz, expected {first.sampling_rate} Hz"
                )
        if len(self.conditions) < 2:
            raise InvalidRecordingError(
                f"at least 2 distinct conditions required (got {sorted(self.conditions)})"
            )

    @classmethod
    def from_recordings(cls, recordings: Sequence[Recording]) -> "InstanceSet":
        return cls(recordings=list(recordings))

    @property
    def conditions(self) -> set:
        return {r.condition for r in self.recordings}

    @property
    def channels(self) -> List[str]:
        return list(self.recordings[0].channels)

    @property
    def sampling_rate(self) -> float:
        return self.recordings[0].sampling_rate

    def __len__(self) -> int:
        return len(self.recordings)


@dataclass(frozen=True)
class Band:
    """A closed frequency band [lo, hi] in Hz."""
    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ConfigurationError(f"band {self.name!r} needs 0 < lo < hi (got [{self.lo}, {self.hi}])")

    def contains(self, freqs: np.ndarray) -> np.ndarray:
        """Membership mask, inclusive of both edges."""
        eps = 1e-9
        return (freqs >= self.lo - eps) & (freqs <= self.hi + eps)


@dataclass(frozen=True)
class ColumnMeta:
    """Provenance of one feature column."""
    electrode: str
    kind: str
    band: Optional[str] = None

    @property
    def name(self) -> str:
        if self.kind in ("external", "pca_component"):
            return self.electrode
        parts = [self.electrode, self.kind] + ([self.band] if self.band else [])
        return "_".join(parts)

    def to_dict(self) -> dict:
        return {"electrode": self.electrode, "kind": self.kind, "band": self.band}


@dataclass(frozen=True)
class RowMeta:
    """Provenance of one instance row."""
    subject: str
    condition: str


@dataclass
class FeatureMatrix:
    """Instances x named features with row and column provenance."""
    values: np.ndarray
    column_meta: List[ColumnMeta]
    row_meta: List[RowMeta]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError(f"feature values must be 2-D (got shape {self.values.shape})")
        n_rows, n_cols = self.values.shape
        if n_cols != len(self.column_meta):
            raise DataError(f"{n_cols} columns but {len(self.column_meta)} column descriptors")
        if n_rows != len(self.row_meta):
            raise DataError(f"{n_rows} rows but {len(self.row_meta)} row descriptors")
        names = self.columns
        if len(set(names)) != len(names):
            raise DataError("feature column names must be unique")
        for meta in self.column_meta:
            if meta.kind not in COLUMN_KINDS:
                raise DataError(f"unknown column kind {meta.kind!r}")
        if not np.all(np.isfinite(self.values)):
            bad_row, bad_col = np.argwhere(~np.isfinite(self.values))[0]
            raise DataError(f"non-finite feature value at row {bad_row}, column {names[bad_col]}")

    @classmethod
    def from_array(
        cls,
        values: np.ndarray,
        conditions: Sequence[str],
        names: Optional[Sequence[str]] = None,
        subjects: Optional[Sequence[str]] = None,
    ) -> "FeatureMatrix":
        """Wrap an externally prepared matrix with anonymous column provenance."""
        values = np.asarray(values, dtype=float)
        names = list(names) if names is not None else [f"f{j}" for j in range(values.shape[1])]
        subjects = list(subjects) if subjects is not None else [str(i) for i in range(values.shape[0])]
        return cls(
            values=values,
            column_meta=[ColumnMeta(electrode=n, kind="external") for n in names],
            row_meta=[RowMeta(subject=str(s), condition=str(c)) for s, c in zip(subjects, conditions)],
        )

    @property
    def columns(self) -> List[str]:
        return [m.name for m in self.column_meta]

    @property
    def shape(self):
        return self.values.shape

    @property
    def conditions(self) -> np.ndarray:
        return np.array([r.condition for r in self.row_meta])

    def select(self, mask: np.ndarray) -> "FeatureMatrix":
        """Column-masked copy; `mask` is a boolean or 0/1 vector."""
        mask = np.asarray(mask).astype(bool)
        if mask.shape != (self.values.shape[1],):
            raise ConfigurationError(
                f"mask length {mask.shape} does not match {self.values.shape[1]} columns"
            )
        return FeatureMatrix(
            values=self.values[:, mask],
            column_meta=[m for m, keep in zip(self.column_meta, mask) if keep],
            row_meta=list(self.row_meta),
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.columns)
        frame.insert(0, "condition", [r.condition for r in self.row_meta])
        frame.insert(0, "subject", [r.subject for r in self.row_meta])
        return frame

    def to_csv(self, path: Path) -> Path:
        """Write the matrix CSV and its `.json` column sidecar; returns the CSV path."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        sidecar = path.with_suffix(".json")
        sidecar.write_text(
            json.dumps({"column_meta": [m.to_dict() for m in self.column_meta]}, indent=2),
            encoding="utf-8",
        )
        logger.info(f"Wrote feature matrix {self.values.shape[0]}x{self.values.shape[1]} to: {path}")
        return path

    @classmethod
    def read_csv(cls, path: Path) -> "FeatureMatrix":
        """Read a matrix written by `to_csv`; without a sidecar columns become `external`."""
        path = Path(path)
        if not path.exists():
            raise DataError(f"feature matrix not found: {path}")
        frame = pd.read_csv(path, dtype={"subject": str, "condition": str})
        for required in ("subject", "condition"):
            if required not in frame.columns:
                raise DataError(f"{path} lacks the {required!r} column")
        feature_names = [c for c in frame.columns if c not in ("subject", "condition")]
        sidecar = path.with_suffix(".json")
        if sidecar.exists():
            meta = json.loads(sidecar.read_text(encoding="utf-8"))["column_meta"]
            column_meta = [ColumnMeta(**m) for m in meta]
        else:
            column_meta = [ColumnMeta(electrode=n, kind="external") for n in feature_names]
        return cls(
            values=frame[feature_names].to_numpy(dtype=float),
            column_meta=column_meta,
            row_meta=[RowMeta(subject=s, condition=c) for s, c in zip(frame["subject"], frame["condition"])],
        )


@dataclass
class LabeledData:
    """A (possibly column-masked) feature matrix with per-row labels."""
    matrix: FeatureMatrix
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.labels is None:
            self.labels = self.matrix.conditions
        self.labels = np.asarray(self.labels)
        if len(self.labels) != self.matrix.values.shape[0]:
            raise DataError(
                f"{self.matrix.values.shape[0]} rows but {len(self.labels)} labels"
            )

    @classmethod
    def from_matrix(cls, matrix: FeatureMatrix) -> "LabeledData":
        return cls(matrix=matrix, labels=matrix.conditions)

    @property
    def X(self) -> np.ndarray:
        return self.matrix.values

    @property
    def n_features(self) -> int:
        return int(self.matrix.values.shape[1])

    @property
    def classes(self) -> List[str]:
        return sorted(set(self.labels.tolist()))

    def masked(self, mask: np.ndarray) -> "LabeledData":
        return LabeledData(matrix=self.matrix.select(mask), labels=self.labels)

    def class_counts(self) -> Dict[str, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {str(v): int(c) for v, c in zip(values, counts)}
