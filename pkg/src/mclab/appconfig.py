"""Application-level configuration shared by the CLI and the service.

An AppConfig bundles what the tools need beyond the science modules:
the service port, the stimulus cache directory, the default sampling
grid and experiment protocol, and the master seed from which session
and stimulus seeds derive.  The cache directory resolves, in order,
from an explicit setting, the MCLAB_CACHE environment variable, and a
per-user default.
"""

import json
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .experiment import ExperimentConfig, _config_to_json
from .grid import GridSpec

__all__ = ["AppConfig", "default_cache_dir", "load_app_config"]

CACHE_ENV_VAR = "MCLAB_CACHE"


def default_cache_dir() -> Path:
    """Cache directory honoring MCLAB_CACHE, else a per-user default."""
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "mclab"


def _default_grid() -> GridSpec:
    return GridSpec(nx=128, ny=128, ppd=32.0, fps=100.0)


@dataclass(frozen=True)
class AppConfig:
    """Runtime configuration for the CLI and HTTP service."""

    port: int = 8712
    cache_dir: Path = field(default_factory=default_cache_dir)
    grid: GridSpec = field(default_factory=_default_grid)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    master_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.port, int) or isinstance(self.port, bool) \
                or not 1 <= self.port <= 65535:
            raise ConfigurationError(
                f"port must be an integer in [1, 65535], got {self.port!r}")
        if not isinstance(self.master_seed, int) \
                or isinstance(self.master_seed, bool) or self.master_seed < 0:
            raise ConfigurationError(
                f"master_seed must be a non-negative integer, got "
                f"{self.master_seed!r}")
        object.__setattr__(self, "cache_dir", Path(self.cache_dir))
        self._ensure_writable(self.cache_dir)

    @staticmethod
    def _ensure_writable(directory: Path) -> None:
        try:
            directory.mkdir(parents=True, exist_ok=True)
            probe = directory / f".writable-{uuid.uuid4().hex}"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as exc:
            raise ConfigurationError(
                f"cache directory {directory} is not writable: {exc}")

    @property
    def sessions_dir(self) -> Path:
        """Where session JSONL files persist; created on first use."""
        path = self.cache_dir / "sessions"
        path.mkdir(parents=True, exist_ok=True)
        return path

    @property
    def stimuli_dir(self) -> Path:
        """Where rendered stimulus bodies cache; created on first use."""
        path = self.cache_dir / "stimuli"
        path.mkdir(parents=True, exist_ok=True)
        return path

    def to_dict(self) -> dict:
        return {
            "port": self.port,
            "cache_dir": str(self.cache_dir),
            "grid": self.grid.to_dict(),
            "experiment": _config_to_json(self.experiment),
            "master_seed": self.master_seed,
        }


def load_app_config(path: Optional[str] = None, *,
                    port: Optional[int] = None,
                    cache_dir: Optional[str] = None,
                    master_seed: Optional[int] = None) -> AppConfig:
    """Build an AppConfig from an optional JSON file plus overrides.

    The file may set port, cache_dir, master_seed, grid (GridSpec
    fields), and experiment (ExperimentConfig fields).  Keyword
    overrides win over the file; unknown top-level keys are rejected.
    """
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: "
                                     f"{exc}")
        if not isinstance(data, dict):
            raise ConfigurationError(
                f"config {path} must hold a JSON object")
    known = {"port", "cache_dir", "grid", "experiment", "master_seed"}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(
            f"unknown config fields: {sorted(unknown)}")

    kwargs = {}
    if port is not None:
        kwargs["port"] = port
    elif "port" in data:
        kwargs["port"] = data["port"]
    if cache_dir is not None:
        kwargs["cache_dir"] = Path(cache_dir)
    elif "cache_dir" in data:
        kwargs["cache_dir"] = Path(data["cache_dir"])
    if master_seed is not None:
        kwargs["master_seed"] = master_seed
    elif "master_seed" in data:
        kwargs["master_seed"] = data["master_seed"]
    if "grid" in data:
        kwargs["grid"] = GridSpec.from_dict(data["grid"])
    if "experiment" in data:
        try:
            kwargs["experiment"] = ExperimentConfig(**data["experiment"])
        except TypeError as exc:
            raise ConfigurationError(
                f"bad experiment block in {path}: {exc}")
    return AppConfig(**kwargs)
