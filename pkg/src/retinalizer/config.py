"""Configuration records and their JSON (de)serialization.

One JSON document holds all sections; every CLI run writes the effective
document next to its outputs so the run can be reproduced from it alone.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError


@dataclass
class CorpusConfig:
    image_size: int = 64
    samples_per_dataset: int = 48
    healthy_fraction_dme: float = 0.87
    healthy_fraction_umn: float = 0.56
    healthy_fraction_retouch: float = 0.50
    # fraction of non-healthy multi-fluid scans carrying 1/2/3 fluid classes
    retouch_class_mix: tuple[float, float, float] = (0.6, 0.3, 0.1)
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def validate(self) -> None:
        if self.image_size < 16 or self.image_size % 4 != 0:
            raise ConfigurationError("corpus.image_size must be >= 16 and divisible by 4")
        if self.samples_per_dataset < 5:
            raise ConfigurationError("corpus.samples_per_dataset must be >= 5")
        for name in ("healthy_fraction_dme", "healthy_fraction_umn", "healthy_fraction_retouch"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"corpus.{name} must lie in [0, 1]")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigurationError("corpus.split_ratios must sum to 1")


@dataclass
class ModelConfig:
    levels: int = 2
    base_channels: int = 16
    image_size: int = 64
    kernel_size: int = 3
    nonlinearity: str = "leaky_relu"
    param_seed: int = 0

    def validate(self) -> None:
        if self.levels < 1:
            raise ConfigurationError("model.levels must be >= 1")
        if self.image_size % (2 ** self.levels) != 0:
            raise ConfigurationError(
                f"model.image_size={self.image_size} must be divisible by 2^levels={2 ** self.levels}"
            )
        if self.kernel_size % 2 != 1:
            raise ConfigurationError("model.kernel_size must be odd")
        if self.nonlinearity not in ("relu", "leaky_relu", "gelu"):
            raise ConfigurationError(f"unknown model.nonlinearity {self.nonlinearity!r}")


@dataclass
class TaskParams:
    gauss_sigma: float = 0.3
    superres_factor: int = 4
    inpaint_fraction: float = 0.25
    sp_density: float = 0.10
    outpaint_fraction: float = 0.125
    inpaint2x_fraction: float = 0.20
    max_classes: int = 16
    # foreground colors (8-bit) for the single-color unseen semantic tasks
    binary_fg: tuple[int, int, int] = (255, 255, 255)
    boundary_fg: tuple[int, int, int] = (255, 255, 255)

    def validate(self) -> None:
        if self.gauss_sigma < 0:
            raise ConfigurationError("tasks.gauss_sigma must be >= 0")
        if self.superres_factor not in (1, 2, 4):
            raise ConfigurationError("tasks.superres_factor must be one of 1, 2, 4")
        for name in ("inpaint_fraction", "inpaint2x_fraction"):
            v = getattr(self, name)
            if not 0.0 < v <= 0.5:
                raise ConfigurationError(f"tasks.{name} must lie in (0, 0.5]")
        if not 0.0 <= self.sp_density <= 1.0:
            raise ConfigurationError("tasks.sp_density must lie in [0, 1]")
        if not 0.0 < self.outpaint_fraction < 0.5:
            raise ConfigurationError("tasks.outpaint_fraction must lie in (0, 0.5)")


@dataclass
class TrainConfig:
    batch_size: int = 5
    context_size: int = 6
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epochs: int = 4  # full-scale runs use 16
    steps: int | None = None  # overrides the epoch-derived step count when set
    recolor_enabled: bool = False
    min_nonempty_context_masks: int = 2
    sampling_retries: int = 200
    seed: int = 0
    val_interval: int = 200
    val_episodes: int = 12
    log_every: int = 1

    def validate(self) -> None:
        if self.batch_size < 1 or self.context_size < 1:
            raise ConfigurationError("train.batch_size and train.context_size must be >= 1")
        if self.min_nonempty_context_masks > self.context_size:
            raise ConfigurationError(
                "train.min_nonempty_context_masks must not exceed train.context_size"
            )
        if self.learning_rate < 0:
            raise ConfigurationError("train.learning_rate must be >= 0")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigurationError(f"train.{name} must lie in [0, 1)")
        if self.epochs < 1 and self.steps is None:
            raise ConfigurationError("train.epochs must be >= 1")


@dataclass
class EvalConfig:
    seed: int = 0
    context_size: int = 6
    min_nonempty_context_masks: int = 2
    max_test_samples: int | None = None
    dump_predictions: bool = False

    def validate(self) -> None:
        if self.context_size < 1:
            raise ConfigurationError("eval.context_size must be >= 1")


@dataclass
class ExperimentConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    tasks: TaskParams = field(default_factory=TaskParams)

    def validate(self) -> None:
        for section in (self.corpus, self.model, self.train, self.eval, self.tasks):
            section.validate()


_SECTION_TYPES = {
    "corpus": CorpusConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "tasks": TaskParams,
}


def _dataclass_from_dict(cls, data: dict, prefix: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigurationError(f"unknown config field {prefix}{key!r}")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    sections = {}
    for key, value in data.items():
        if key not in _SECTION_TYPES:
            raise ConfigurationError(f"unknown config section {key!r}")
        sections[key] = _dataclass_from_dict(_SECTION_TYPES[key], value, f"{key}.")
    return ExperimentConfig(**sections)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    cfg = config_from_dict(data)
    cfg.validate()
    return cfg


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def _parse_override_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``section.field=value`` overrides onto a config, returning a copy."""
    data = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise ConfigurationError(f"override key {dotted!r} must be section.field")
        section, fieldname = parts
        if section not in data:
            raise ConfigurationError(f"unknown config section {section!r}")
        if fieldname not in data[section]:
            raise ConfigurationError(f"unknown config field {section}.{fieldname}")
        data[section][fieldname] = _parse_override_value(raw)
    new = config_from_dict(data)
    new.validate()
    return new


def write_effective_config(cfg: ExperimentConfig, out_dir, extra: dict | None = None) -> Path:
    """Snapshot the effective config (plus run metadata) next to run outputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = config_to_dict(cfg)
    if extra:
        doc["_run"] = extra
    path = out_dir / "effective_config.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
