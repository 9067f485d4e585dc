"""Run directories: timestamped artifact folders with a JSON manifest."""

import json
import logging
import platform
import time
from contextlib import contextmanager
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from . import __version__
from .errors import MissingArtifactError, StageError

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
CLEANUP_POLICY = "retain"
TRACKED_PACKAGES = ("numpy", "scipy", "scikit-learn", "pandas", "openpyxl")


def package_versions() -> Dict[str, str]:
    """Installed versions of the numerical stack, plus this package and Python."""
    versions = {"eeg_gafs": __version__, "python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


class RunDirectory:
    """
    One experiment's artifacts under `<output_dir>/<name>_<timestamp>/`.

    The manifest records the config, seeds, package versions and per-stage
    elapsed times. A failed stage is recorded with its name; artifacts
    written before the failure are kept (cleanup policy "retain").
    """

    def __init__(self, path: Path, manifest: Dict[str, Any]):
        self.path = Path(path)
        self.manifest = manifest

    @classmethod
    def create(cls, output_dir: str, name: str, config: Dict[str, Any], seeds: Dict[str, int]) -> "RunDirectory":
        """Create a fresh run directory and write its initial manifest."""
        stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        path = Path(output_dir) / f"{name}_{stamp}"
        suffix = 1
        while path.exists():
            suffix += 1
            path = Path(output_dir) / f"{name}_{stamp}_{suffix}"
        path.mkdir(parents=True)

        run = cls(path, {
            "name": name,
            "created": datetime.now().isoformat(timespec="seconds"),
            "status": "running",
            "config": config,
            "seeds": dict(seeds),
            "versions": package_versions(),
            "stages": {},
            "artifacts": [],
            "failed_stage": None,
            "error": None,
            "cleanup_policy": CLEANUP_POLICY,
        })
        run._write_manifest()
        logger.info(f"Created run directory: {path}")
        return run

    @classmethod
    def open(cls, path: Path) -> "RunDirectory":
        """
        Open an existing run directory.

        Raises:
            MissingArtifactError: No directory or no manifest
        """
        path = Path(path)
        manifest_path = path / MANIFEST
        if not manifest_path.exists():
            raise MissingArtifactError(f"no {MANIFEST} in {path}")
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise MissingArtifactError(f"unreadable {manifest_path}: {e}") from e
        logger.debug(f"Opened run directory: {path}")
        return cls(path, manifest)

    def _write_manifest(self) -> None:
        try:
            (self.path / MANIFEST).write_text(json.dumps(self.manifest, indent=2), encoding="utf-8")
        except IOError as e:
            logger.error(f"Failed to write manifest: {e}")
            raise

    def artifact(self, name: str) -> Path:
        """Path of an artifact inside the run directory (may not exist yet)."""
        return self.path / name

    def require(self, name: str) -> Path:
        """
        Path of an existing artifact.

        Raises:
            MissingArtifactError: The artifact was never written
        """
        path = self.artifact(name)
        if not path.exists():
            raise MissingArtifactError(f"run {self.path.name} lacks {name}")
        return path

    def register(self, name: str) -> Path:
        """Record an artifact written by other code; returns its path."""
        if name not in self.manifest["artifacts"]:
            self.manifest["artifacts"].append(name)
            self._write_manifest()
        return self.artifact(name)

    def write_json(self, name: str, data: Any) -> Path:
        path = self.artifact(name)
        path.write_text(json.dumps(data, indent=2), encoding="utf-8")
        logger.info(f"Wrote {name}")
        return self.register(name)

    def write_text(self, name: str, text: str) -> Path:
        path = self.artifact(name)
        path.write_text(text, encoding="utf-8")
        logger.info(f"Wrote {name}")
        return self.register(name)

    def read_json(self, name: str) -> Any:
        return json.loads(self.require(name).read_text(encoding="utf-8"))

    @property
    def artifacts(self) -> List[str]:
        return list(self.manifest["artifacts"])

    @contextmanager
    def stage(self, name: str) -> Iterator[Dict[str, Any]]:
        """
        Time a pipeline stage; failures are recorded and re-raised as StageError.

        The yielded dict is stored under the stage entry, so a stage can
        attach its own figures (e.g. generations run).
        """
        logger.info(f"Stage {name}: start")
        extra: Dict[str, Any] = {}
        start = time.perf_counter()
        try:
            yield extra
        except Exception as e:
            elapsed = time.perf_counter() - start
            self.manifest["stages"][name] = {"elapsed_seconds": elapsed, "status": "failed", **extra}
            self.manifest["failed_stage"] = name
            self.manifest["error"] = f"{type(e).__name__}: {e}"
            self.manifest["status"] = "failed"
            self._write_manifest()
            logger.error(f"Stage {name} failed after {elapsed:.2f}s: {e}")
            raise StageError(name, e) from e
        elapsed = time.perf_counter() - start
        self.manifest["stages"][name] = {"elapsed_seconds": elapsed, "status": "ok", **extra}
        self._write_manifest()
        logger.info(f"Stage {name}: done in {elapsed:.2f}s")

    def finish(self, status: str = "complete") -> None:
        self.manifest["status"] = status
        self.manifest["finished"] = datetime.now().isoformat(timespec="seconds")
        self._write_manifest()

    @property
    def failed_stage(self) -> Optional[str]:
        return self.manifest.get("failed_stage")
