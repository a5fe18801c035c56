"""Run configuration: JSON config files with flag overrides, flags win.

Each command reads an optional structured config file holding named
sections; unknown sections or keys are rejected so typos fail loudly.  The
effective merged configuration is dumped alongside every command's outputs
for reproducibility.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .trainer import TrainConfig

KNOWN_SECTIONS = ("data", "model", "train", "synth", "cv")


@dataclass
class DataConfig:
    n_rois: int = 116
    fd_threshold: float = 0.15
    fd_column: str = "func_mean_fd"
    atlas_labels: str | None = None  # path to an index,name CSV

    def validate(self) -> None:
        if self.n_rois < 1:
            raise ConfigError(f"n_rois must be >= 1, got {self.n_rois}")
        if self.fd_threshold < 0:
            raise ConfigError(f"fd_threshold must be >= 0, got {self.fd_threshold}")


@dataclass
class SynthConfig:
    n: int = 10
    t_len: int = 150
    subjects_per_class: int = 10
    lag_order: int = 1
    noise_sigma: float = 0.5
    planted_weight: float = 0.4
    spectral_radius_cap: float = 0.95
    seed: int = 18

    def validate(self) -> None:
        if self.n < 8 or self.t_len < 4 or self.subjects_per_class < 1:
            raise ConfigError("synth spec needs n >= 8, t_len >= 4, subjects_per_class >= 1")
        if self.lag_order != 1:
            raise ConfigError("only lag_order 1 is wired through the default generator")
        if self.spectral_radius_cap <= 0:
            raise ConfigError("spectral_radius_cap must be positive")


@dataclass
class CvConfig:
    jobs: int = 0  # 0 -> available cores
    rank_top_k: int = 10
    val_fraction: float = 0.125
    baseline: str | None = None

    def validate(self) -> None:
        if self.jobs < 0:
            raise ConfigError(f"jobs must be >= 0, got {self.jobs}")
        if not (0.0 < self.val_fraction < 0.5):
            raise ConfigError(f"val_fraction must be in (0, 0.5), got {self.val_fraction}")
        if self.baseline not in (None, "cpm"):
            raise ConfigError(f"unknown baseline {self.baseline!r}")

    def effective_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)


_SECTION_TYPES = {
    "data": DataConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
    "cv": CvConfig,
}


def _from_dict(cls, payload: dict):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - fields
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**payload)


def load_config_file(path) -> dict:
    if path is None:
        return {}
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    unknown = set(payload) - set(KNOWN_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown config sections: {sorted(unknown)}")
    return payload


def build_section(name: str, file_payload: dict, overrides: dict):
    """Construct one config section from file values plus flag overrides."""
    cls = _SECTION_TYPES[name]
    merged = dict(file_payload.get(name, {}))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    cfg = _from_dict(cls, merged)
    cfg.validate()
    return cfg


def dump_effective_config(out_dir: Path, command: str, sections: dict, extras: dict | None = None) -> None:
    payload = {"command": command}
    for name, cfg in sections.items():
        payload[name] = dataclasses.asdict(cfg)
    if extras:
        payload.update(extras)
    (out_dir / "config.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


__all__ = [
    "DataConfig",
    "SynthConfig",
    "CvConfig",
    "KNOWN_SECTIONS",
    "load_config_file",
    "build_section",
    "dump_effective_config",
]
