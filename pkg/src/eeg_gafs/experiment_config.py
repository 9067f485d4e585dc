"""Declarative experiment configuration (JSON) and its validation."""

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import ConfigurationError, ConfigValidationError
from .features import BANDS, BAND_SETS, MorletConfig, WelchConfig
from .ga import FitnessFamily, GaConfig, Mode
from .ingest import SineComponent
from .models import Band
from .preprocess import FilterSpec

logger = logging.getLogger(__name__)

FORMATS = ("edf", "csv", "synthetic", "matrix")
STRATEGIES = ("ALL", "PCA", "GAFS")
REPORT_FORMATS = ("json", "text", "xlsx")
LEARNER_FIELDS = ("k", "folds")


@dataclass
class DatasetFile:
    """One recording file; `segments` cut it into labeled windows."""
    path: str
    subject: str
    condition: str = ""
    sampling_rate: Optional[float] = None
    segments: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class SyntheticDataset:
    """Sinusoid-plus-noise recordings, one per (subject, condition, repeat)."""
    channels: List[str]
    conditions: Dict[str, List[SineComponent]]
    subjects: int = 10
    repeats: int = 1
    duration: float = 4.0
    sampling_rate: float = 128.0
    noise_std: float = 1.0


@dataclass
class DatasetConfig:
    format: str
    files: List[DatasetFile] = field(default_factory=list)
    exclude_subjects: List[str] = field(default_factory=list)
    include_subjects: Optional[List[str]] = None
    channels: Optional[List[str]] = None
    channel_aliases: Dict[str, str] = field(default_factory=dict)
    resample_rate: Optional[float] = None
    synthetic: Optional[SyntheticDataset] = None
    matrix_path: Optional[str] = None

    def keeps(self, subject: str) -> bool:
        if subject in self.exclude_subjects:
            return False
        return self.include_subjects is None or subject in self.include_subjects


@dataclass
class PreprocessConfig:
    filter: Optional[FilterSpec] = None
    notch: bool = True
    zscore: bool = True


@dataclass
class FeatureConfig:
    bands: List[Band]
    welch: WelchConfig = field(default_factory=WelchConfig)
    morlet: MorletConfig = field(default_factory=MorletConfig)


@dataclass
class LearnerConfig:
    mode: Mode = Mode.SUPERVISED
    folds: int = 10
    k: Optional[int] = None


@dataclass
class ExperimentConfig:
    """A fully resolved experiment; paths are absolute."""
    name: str
    seed: int
    output_dir: Optional[str]
    dataset: DatasetConfig
    preprocess: PreprocessConfig
    features: FeatureConfig
    strategy: str
    learner: LearnerConfig
    pca_variance_threshold: Optional[float] = None
    ga: Optional[GaConfig] = None
    reports: List[str] = field(default_factory=lambda: ["json", "text"])

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        """
        Read and validate a JSON config; relative paths resolve against its directory.

        Raises:
            ConfigValidationError: Unreadable file or any schema violation
        """
        path = Path(path)
        if not path.exists():
            raise ConfigValidationError([f"<file>: config not found: {path}"])
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigValidationError([f"<file>: invalid JSON at line {e.lineno}: {e.msg}"]) from e
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], base_dir: Optional[Path] = None) -> "ExperimentConfig":
        """
        Build a config, collecting every violation before failing.

        Raises:
            ConfigValidationError: One or more violations, with dotted field paths
        """
        return _Parser(base_dir or Path.cwd()).parse(raw)

    def with_overrides(self, seed: Optional[int] = None, max_minutes: Optional[float] = None) -> "ExperimentConfig":
        """Copy with the command-line overrides applied."""
        cfg = replace(self)
        if seed is not None:
            cfg.seed = seed
            if cfg.ga is not None:
                cfg.ga = replace(cfg.ga, seed=seed)
        if max_minutes is not None:
            if max_minutes <= 0:
                raise ConfigValidationError([f"--max-minutes: must be > 0 (got {max_minutes})"])
            if cfg.ga is not None:
                cfg.ga = replace(cfg.ga, max_minutes=max_minutes)
        return cfg

    def to_dict(self) -> Dict[str, Any]:
        """Schema-shaped dict; `from_dict` of it yields an equal config."""
        ds = self.dataset
        dataset: Dict[str, Any] = {
            "format": ds.format,
            "files": [asdict(f) for f in ds.files],
            "exclude_subjects": list(ds.exclude_subjects),
            "include_subjects": list(ds.include_subjects) if ds.include_subjects is not None else None,
            "channels": list(ds.channels) if ds.channels is not None else None,
            "channel_aliases": dict(ds.channel_aliases),
            "resample_rate": ds.resample_rate,
            "matrix_path": ds.matrix_path,
        }
        if ds.synthetic is not None:
            syn = ds.synthetic
            dataset["synthetic"] = {
                "channels": list(syn.channels),
                "conditions": {c: [asdict(comp) for comp in comps] for c, comps in syn.conditions.items()},
                "subjects": syn.subjects,
                "repeats": syn.repeats,
                "duration": syn.duration,
                "sampling_rate": syn.sampling_rate,
                "noise_std": syn.noise_std,
            }
        pre = self.preprocess
        filter_dict = None
        if pre.filter is not None:
            filter_dict = {**asdict(pre.filter), "notch": pre.notch}
        morlet = asdict(self.features.morlet)
        if morlet["freq_range"] is not None:
            morlet["freq_range"] = list(morlet["freq_range"])
        out: Dict[str, Any] = {
            "name": self.name,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": dataset,
            "preprocess": {"filter": filter_dict, "zscore": pre.zscore},
            "features": {
                "bands": [{"name": b.name, "lo": b.lo, "hi": b.hi} for b in self.features.bands],
                "welch": asdict(self.features.welch),
                "morlet": morlet,
            },
            "strategy": self.strategy,
            "learner": {"mode": self.learner.mode.value, "folds": self.learner.folds, "k": self.learner.k},
            "reports": list(self.reports),
        }
        if self.pca_variance_threshold is not None:
            out["pca"] = {"variance_threshold": self.pca_variance_threshold}
        if self.ga is not None:
            out["ga"] = {
                "population_size": self.ga.population_size,
                "mating_pool": self.ga.mating_pool,
                "mutations": self.ga.mutations,
                "lambda": self.ga.lam,
                "max_generations": self.ga.max_generations,
                "max_minutes": self.ga.max_minutes,
                "fitness_family": self.ga.fitness_family.value,
                "uniform_crossover": self.ga.uniform_crossover,
            }
        return out


class _Parser:
    """Walks the raw dict once, recording every violation by dotted path."""

    def __init__(self, base_dir: Path):
        self.base_dir = Path(base_dir)
        self.violations: List[str] = []

    def fail(self, path: str, problem: str) -> None:
        self.violations.append(f"{path}: {problem}")

    def section(self, raw: Dict[str, Any], key: str, required: bool = True) -> Optional[Dict[str, Any]]:
        value = raw.get(key)
        if value is None:
            if required:
                self.fail(key, "required section missing")
            return None
        if not isinstance(value, dict):
            self.fail(key, f"must be an object (got {type(value).__name__})")
            return None
        return value

    def number(self, raw: Dict[str, Any], key: str, path: str, default=None, cast=float, minimum=None):
        value = raw.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"must be a number (got {value!r})")
            return default
        if cast is int and value != int(value):
            self.fail(path, f"must be an integer (got {value!r})")
            return default
        if minimum is not None and value < minimum:
            self.fail(path, f"must be >= {minimum} (got {value!r})")
        return cast(value)

    def resolve(self, raw_path: str, path: str) -> str:
        resolved = Path(raw_path)
        if not resolved.is_absolute():
            resolved = (self.base_dir / resolved).resolve()
        if not resolved.exists():
            self.fail(path, f"file not found: {resolved}")
        return str(resolved)

    # sections

    def parse(self, raw: Any) -> ExperimentConfig:
        if not isinstance(raw, dict):
            raise ConfigValidationError([f"<root>: must be an object (got {type(raw).__name__})"])

        name = raw.get("name")
        if not isinstance(name, str) or not name.strip():
            self.fail("name", "required non-empty string")
            name = "experiment"
        seed = self.number(raw, "seed", "seed", default=0, cast=int, minimum=0)

        output_dir = raw.get("output_dir")
        if output_dir is not None:
            output_dir = str((self.base_dir / output_dir).resolve()) if not Path(output_dir).is_absolute() else output_dir

        dataset = self.dataset(self.section(raw, "dataset"))
        preprocess = self.preprocess(raw.get("preprocess", {}))
        computes_features = dataset is None or dataset.format != "matrix"
        features = self.features(self.section(raw, "features", required=computes_features), computes_features)
        learner = self.learner(self.section(raw, "learner"))

        strategy = raw.get("strategy")
        if strategy not in STRATEGIES:
            self.fail("strategy", f"must be one of {', '.join(STRATEGIES)} (got {strategy!r})")

        pca_threshold = None
        pca = self.section(raw, "pca", required=strategy == "PCA")
        if pca is not None:
            pca_threshold = self.number(pca, "variance_threshold", "pca.variance_threshold", default=0.95)
            if pca_threshold is not None and not (0 < pca_threshold <= 1):
                self.fail("pca.variance_threshold", f"must be in (0, 1] (got {pca_threshold})")

        ga = self.ga(self.section(raw, "ga", required=strategy == "GAFS"), learner, seed)

        reports = raw.get("reports", ["json", "text"])
        if not isinstance(reports, list) or any(r not in REPORT_FORMATS for r in reports):
            self.fail("reports", f"must be a list drawn from {', '.join(REPORT_FORMATS)} (got {reports!r})")
            reports = ["json", "text"]

        if self.violations:
            for v in self.violations:
                logger.debug(f"Config violation: {v}")
            raise ConfigValidationError(self.violations)

        return ExperimentConfig(
            name=name,
            seed=seed,
            output_dir=output_dir,
            dataset=dataset,
            preprocess=preprocess,
            features=features or FeatureConfig(bands=[]),
            strategy=strategy,
            learner=learner,
            pca_variance_threshold=pca_threshold,
            ga=ga,
            reports=list(reports),
        )

    def dataset(self, raw: Optional[Dict[str, Any]]) -> Optional[DatasetConfig]:
        if raw is None:
            return None
        fmt = raw.get("format")
        if fmt not in FORMATS:
            self.fail("dataset.format", f"must be one of {', '.join(FORMATS)} (got {fmt!r})")
            return None

        cfg = DatasetConfig(
            format=fmt,
            exclude_subjects=[str(s) for s in raw.get("exclude_subjects") or []],
            include_subjects=[str(s) for s in raw["include_subjects"]] if raw.get("include_subjects") is not None else None,
            channels=list(raw["channels"]) if raw.get("channels") is not None else None,
            channel_aliases={str(k): str(v) for k, v in (raw.get("channel_aliases") or {}).items()},
        )
        resample_rate = self.number(raw, "resample_rate", "dataset.resample_rate")
        if resample_rate is not None and resample_rate <= 0:
            self.fail("dataset.resample_rate", f"must be > 0 (got {resample_rate})")
        cfg.resample_rate = resample_rate

        if fmt in ("edf", "csv"):
            files = raw.get("files") or []
            if not files:
                self.fail("dataset.files", f"at least one file required for format {fmt}")
            for i, entry in enumerate(files):
                cfg.files.append(self.dataset_file(entry, f"dataset.files[{i}]", fmt))
        elif fmt == "synthetic":
            cfg.synthetic = self.synthetic(raw.get("synthetic"))
        else:
            if not raw.get("matrix_path"):
                self.fail("dataset.matrix_path", "required for format matrix")
            else:
                cfg.matrix_path = self.resolve(raw["matrix_path"], "dataset.matrix_path")
        return cfg

    def dataset_file(self, raw: Any, path: str, fmt: str) -> DatasetFile:
        if not isinstance(raw, dict) or "path" not in raw:
            self.fail(path, "must be an object with a 'path'")
            return DatasetFile(path="", subject="")
        entry = DatasetFile(
            path=self.resolve(raw["path"], f"{path}.path"),
            subject=str(raw.get("subject", "")),
            condition=str(raw.get("condition", "")),
            sampling_rate=self.number(raw, "sampling_rate", f"{path}.sampling_rate"),
            segments=list(raw.get("segments") or []),
        )
        if not entry.subject:
            self.fail(f"{path}.subject", "required")
        if fmt == "csv" and (entry.sampling_rate is None or entry.sampling_rate <= 0):
            self.fail(f"{path}.sampling_rate", "a positive sampling rate is required for CSV files")
        if not entry.condition and not entry.segments:
            self.fail(f"{path}.condition", "required unless segments give conditions")
        for j, seg in enumerate(entry.segments):
            where = f"{path}.segments[{j}]"
            if not isinstance(seg, dict) or not {"onset", "duration", "condition"} <= set(seg):
                self.fail(where, "needs onset, duration and condition")
            elif any(isinstance(seg[k], bool) or not isinstance(seg[k], (int, float)) for k in ("onset", "duration")):
                self.fail(where, f"onset and duration must be numbers (got {seg['onset']!r}, {seg['duration']!r})")
            elif seg["duration"] <= 0 or seg["onset"] < 0:
                self.fail(where, "onset must be >= 0 and duration > 0")
        return entry

    def synthetic(self, raw: Any) -> Optional[SyntheticDataset]:
        if not isinstance(raw, dict):
            self.fail("dataset.synthetic", "required object for format synthetic")
            return None
        channels = raw.get("channels") or []
        if not channels:
            self.fail("dataset.synthetic.channels", "at least one channel label required")
        conditions: Dict[str, List[SineComponent]] = {}
        for condition, comps in (raw.get("conditions") or {}).items():
            try:
                conditions[condition] = [SineComponent(**c) for c in comps]
            except TypeError as e:
                self.fail(f"dataset.synthetic.conditions.{condition}", f"bad component: {e}")
        if len(conditions) < 2:
            self.fail("dataset.synthetic.conditions", "at least 2 conditions required")
        return SyntheticDataset(
            channels=list(channels),
            conditions=conditions,
            subjects=self.number(raw, "subjects", "dataset.synthetic.subjects", 10, int, 1),
            repeats=self.number(raw, "repeats", "dataset.synthetic.repeats", 1, int, 1),
            duration=self.number(raw, "duration", "dataset.synthetic.duration", 4.0),
            sampling_rate=self.number(raw, "sampling_rate", "dataset.synthetic.sampling_rate", 128.0),
            noise_std=self.number(raw, "noise_std", "dataset.synthetic.noise_std", 1.0, minimum=0),
        )

    def preprocess(self, raw: Any) -> PreprocessConfig:
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            self.fail("preprocess", "must be an object")
            return PreprocessConfig()
        cfg = PreprocessConfig(zscore=bool(raw.get("zscore", True)))
        spec = raw.get("filter")
        if spec is None:
            return cfg
        spec = dict(spec)
        cfg.notch = bool(spec.pop("notch", True))
        try:
            cfg.filter = FilterSpec(**spec)
        except TypeError as e:
            self.fail("preprocess.filter", f"unknown field: {e}")
            return cfg
        try:
            # Nyquist limits are checked per recording at run time
            cfg.filter.check(sampling_rate=float("inf"))
        except ConfigurationError as e:
            self.fail("preprocess.filter", str(e))
        return cfg

    def band(self, raw: Any, path: str) -> List[Band]:
        if isinstance(raw, str):
            if raw in BAND_SETS:
                return [BANDS[b] for b in BAND_SETS[raw]]
            if raw in BANDS:
                return [BANDS[raw]]
            self.fail(path, f"unknown band or band set {raw!r}")
            return []
        if isinstance(raw, dict):
            try:
                return [Band(str(raw["name"]), float(raw["lo"]), float(raw["hi"]))]
            except KeyError as e:
                self.fail(path, f"missing {e}")
            except ConfigurationError as e:
                self.fail(path, str(e))
            return []
        self.fail(path, f"must be a name or {{name, lo, hi}} (got {raw!r})")
        return []

    def features(self, raw: Optional[Dict[str, Any]], need_bands: bool = True) -> Optional[FeatureConfig]:
        if raw is None:
            return None
        bands: List[Band] = []
        for i, entry in enumerate(raw.get("bands") or []):
            bands.extend(self.band(entry, f"features.bands[{i}]"))
        if need_bands and not bands:
            self.fail("features.bands", "at least one band required")
        names = [b.name for b in bands]
        if len(set(names)) != len(names):
            self.fail("features.bands", f"band names must be unique (got {names})")

        welch, morlet = WelchConfig(), MorletConfig()
        try:
            welch = WelchConfig(**(raw.get("welch") or {}))
        except (TypeError, ConfigurationError) as e:
            self.fail("features.welch", str(e))
        morlet_raw = dict(raw.get("morlet") or {})
        if morlet_raw.get("freq_range") is not None:
            morlet_raw["freq_range"] = tuple(morlet_raw["freq_range"])
        try:
            morlet = MorletConfig(**morlet_raw)
        except (TypeError, ConfigurationError) as e:
            self.fail("features.morlet", str(e))
        return FeatureConfig(bands=bands, welch=welch, morlet=morlet)

    def learner(self, raw: Optional[Dict[str, Any]]) -> LearnerConfig:
        if raw is None:
            return LearnerConfig()
        try:
            mode = Mode(raw.get("mode", "supervised"))
        except ValueError:
            self.fail("learner.mode", f"must be supervised or unsupervised (got {raw.get('mode')!r})")
            mode = Mode.SUPERVISED
        cfg = LearnerConfig(
            mode=mode,
            folds=self.number(raw, "folds", "learner.folds", 10, int, 2),
            k=self.number(raw, "k", "learner.k", None, int, 2),
        )
        if mode is Mode.UNSUPERVISED and cfg.k is None:
            self.fail("learner.k", "required in unsupervised mode")
        return cfg

    def ga(self, raw: Optional[Dict[str, Any]], learner: LearnerConfig, seed: int) -> Optional[GaConfig]:
        if raw is None:
            return None
        family = raw.get("fitness_family", "NFF")
        try:
            family = FitnessFamily(family)
        except ValueError:
            self.fail("ga.fitness_family", f"must be POFF, VMFF or NFF (got {family!r})")
            family = FitnessFamily.NFF
        cfg = GaConfig(
            population_size=self.number(raw, "population_size", "ga.population_size", 8, int),
            mating_pool=self.number(raw, "mating_pool", "ga.mating_pool", 4, int),
            mutations=self.number(raw, "mutations", "ga.mutations", 3, int),
            lam=self.number(raw, "lambda", "ga.lambda", 0.88),
            max_generations=self.number(raw, "max_generations", "ga.max_generations", 200, int),
            max_minutes=self.number(raw, "max_minutes", "ga.max_minutes", 60.0),
            seed=seed,
            mode=learner.mode,
            fitness_family=family,
            k=learner.k,
            folds=learner.folds,
            uniform_crossover=bool(raw.get("uniform_crossover", False)),
        )
        for name, problem in cfg.violations():
            if name in LEARNER_FIELDS:
                continue  # reported under learner.*
            self.fail(f"ga.{name}", problem)
        return cfg
