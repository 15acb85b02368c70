"""Run configuration: a nested YAML file plus dotted-key overrides.

One config file drives every CLI subcommand.  Defaults follow the
reference hyperparameters: 100 diffusion steps, auxiliary weight 1.0,
length weight 0.01, learning rate 3e-4, codebook of 2048 vectors with
256-dimensional features, and 512-dimensional denoiser features.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .schedule import ScheduleSpec
from .synthetic import SyntheticCorpusSpec


class ConfigError(ValueError):
    """Raised for unparseable or out-of-range configuration values."""


@dataclass
class PathsConfig:
    dataset_dir: str = "runs/data"
    checkpoint_dir: str = "runs/checkpoints"
    report_dir: str = "runs/reports"

    def dataset_file(self, split: str) -> Path:
        return Path(self.dataset_dir) / f"{split}.jsonl"

    def codec_file(self) -> Path:
        return Path(self.checkpoint_dir) / "codec.npz"

    def denoiser_file(self) -> Path:
        return Path(self.checkpoint_dir) / "denoiser.npz"


@dataclass
class CodecConfig:
    codebook_size: int = 2048
    feature_dim: int = 256
    patch_mode: str = "separate"
    commitment_weight: float = 0.25
    kmeans_iters: int = 25

    def __post_init__(self) -> None:
        if self.codebook_size < 1 or self.feature_dim < 1:
            raise ConfigError("codec sizes must be positive")


@dataclass
class DenoiserSection:
    d_model: int = 512
    max_frames: int = 512
    max_length_class: int = 64
    ada_scale_init: float = 1.0

    def __post_init__(self) -> None:
        if self.d_model < 4 or self.d_model % 4:
            raise ConfigError("d_model must be a positive multiple of 4")
        if self.ada_scale_init <= 0:
            raise ConfigError("ada_scale_init must be positive")


@dataclass
class TrainingConfig:
    timesteps: int = 100
    steps: int = 500
    batch_size: int = 1
    learning_rate: float = 3e-4
    lambda_aux: float = 1.0
    delta_length: float = 0.01
    length_supervision: str = "segmenter"  # or "gold"
    checkpoint_every: int = 0  # 0: only final

    def __post_init__(self) -> None:
        if self.timesteps < 1 or self.steps < 0 or self.batch_size < 1:
            raise ConfigError("timesteps/steps/batch_size out of range")
        if self.learning_rate <= 0 or self.lambda_aux < 0 or self.delta_length < 0:
            raise ConfigError("rates and loss weights must be nonnegative")
        if self.length_supervision not in ("segmenter", "gold"):
            raise ConfigError("length_supervision must be 'segmenter' or 'gold'")


@dataclass
class InferenceConfig:
    n_length_candidates: int = 3
    use_gold_lengths: bool = False

    def __post_init__(self) -> None:
        if self.n_length_candidates < 1:
            raise ConfigError("need at least one length candidate")


@dataclass
class SegmentationConfig:
    k: int = 16
    l: int = 16

    def __post_init__(self) -> None:
        if self.k < 1 or self.l < 1 or self.k > 2 * self.l:
            raise ConfigError("segmentation needs 1 <= k <= 2*l")


@dataclass
class RunConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    data: SyntheticCorpusSpec = field(default_factory=SyntheticCorpusSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    codec: CodecConfig = field(default_factory=CodecConfig)
    denoiser: DenoiserSection = field(default_factory=DenoiserSection)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "paths": vars(self.paths).copy(),
            "data": self.data.to_dict(),
            "schedule": self.schedule.to_dict(),
            "codec": vars(self.codec).copy(),
            "denoiser": vars(self.denoiser).copy(),
            "training": vars(self.training).copy(),
            "inference": vars(self.inference).copy(),
            "segmentation": {"k": self.segmentation.k, "l": self.segmentation.l},
        }


_SECTIONS = {
    "paths": PathsConfig,
    "data": SyntheticCorpusSpec,
    "schedule": ScheduleSpec,
    "codec": CodecConfig,
    "denoiser": DenoiserSection,
    "training": TrainingConfig,
    "inference": InferenceConfig,
    "segmentation": SegmentationConfig,
}


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw or {})
    kwargs: dict = {"seed": int(raw.pop("seed", 0))}
    for name, cls in _SECTIONS.items():
        section = raw.pop(name, {}) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        try:
            if cls in (SyntheticCorpusSpec, ScheduleSpec):
                defaults = cls().to_dict()
                defaults.update(section)
                kwargs[name] = cls.from_dict(defaults)
            else:
                kwargs[name] = cls(**section)
        except TypeError as err:
            raise ConfigError(f"bad key in section {name!r}: {err}") from err
    if raw:
        raise ConfigError(f"unknown top-level config keys: {sorted(raw)}")
    return RunConfig(**kwargs)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` strings; values parse as YAML scalars."""
    out = dict(raw or {})
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        parsed = yaml.safe_load(value)
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[parts[-1]] = parsed
    return out


def load_config(path: str | None, overrides: list[str] | None = None, seed: int | None = None) -> RunConfig:
    """Read YAML config, apply overrides, then an explicit seed if given."""
    raw: dict = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = loaded
    raw = apply_overrides(raw, overrides or [])
    config = config_from_dict(raw)
    if seed is not None:
        config.seed = int(seed)
    return config


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)


__all__ = [
    "CodecConfig",
    "ConfigError",
    "DenoiserSection",
    "InferenceConfig",
    "PathsConfig",
    "RunConfig",
    "SegmentationConfig",
    "TrainingConfig",
    "apply_overrides",
    "config_from_dict",
    "load_config",
    "save_config",
]
