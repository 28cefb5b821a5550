"""Run configuration: one JSON file, validated strictly, plus dotted overrides.

Every command reads the same flat schema; unknown keys anywhere are
rejected before any side effect. Overrides use dotted paths into the same
schema ("train.lr=0.001"), so there is exactly one source of truth.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .dataset import NUM_CLASSES, SyntheticSpec
from .errors import ConfigError
from .model import Architecture
from .train import TrainConfig

DEFAULTS = {
    "seed": 0,
    "data": {
        "counts": [50] * NUM_CLASSES,
        "num_layers": 4,
        "hidden": 32,
        "frames_min": 30,
        "frames_max": 50,
        "mean_separation": 5.0,
        "noise_scale": 1.0,
        "gender_bias": [0.5] * NUM_CLASSES,
    },
    "model": {
        "pooling": "std",
        "attention_mode": "paper_literal",
        "conditioning": "none",
        "projection_size": 256,
        "label_smoothing": 0.0,
        "weight_mode": "inverse_frequency",
        "dropout_rate": 0.1,
        "layer_weight_mode": "softmax",
    },
    "train": {
        "lr": 1e-5,
        "weight_decay": 0.01,
        "epochs": 20,
        "batch_size": 32,
        "crop_frames": 50,
        "eval_every_epoch": True,
    },
    "fusion": {
        "constraint_mode": "per_class_simplex",
        "rho_beg": 0.2,
        "rho_end": 1e-4,
        "max_evals": 5000,
    },
    "paths": {
        "out_dir": None,
        "train_manifest": None,
        "dev_manifest": None,
        "checkpoint": None,
        "eval_manifest": None,
        "predictions": [],
    },
}


class RunConfig:
    """Merged, validated configuration for one CLI run."""

    def __init__(self, raw: dict):
        self.raw = raw

    @staticmethod
    def load(path, overrides: list[str] | None = None) -> "RunConfig":
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        merged = _merge(DEFAULTS, user, prefix="")
        for item in overrides or []:
            _apply_override(merged, item)
        cfg = RunConfig(merged)
        cfg.validate()
        return cfg

    @staticmethod
    def from_overrides(overrides: list[str] | None = None) -> "RunConfig":
        merged = copy.deepcopy(DEFAULTS)
        for item in overrides or []:
            _apply_override(merged, item)
        cfg = RunConfig(merged)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            self.synthetic_spec().validate()
            self.architecture().validate()
            self.train_config().validate()
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e
        fusion = self.raw["fusion"]
        if fusion["constraint_mode"] not in ("per_class_simplex", "global_sums"):
            raise ConfigError(f"fusion.constraint_mode {fusion['constraint_mode']!r} unknown")
        if not fusion["rho_beg"] > fusion["rho_end"] > 0:
            raise ConfigError("need fusion.rho_beg > fusion.rho_end > 0")
        if fusion["max_evals"] < 3:
            raise ConfigError("fusion.max_evals too small")

    def describe(self) -> str:
        """Canonical JSON form; parsing it back yields the same config."""
        return json.dumps(self.raw, indent=2, sort_keys=True)

    # -- typed views -------------------------------------------------------------

    @property
    def seed(self) -> int:
        seed = self.raw["seed"]
        if not isinstance(seed, int):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        return seed

    def synthetic_spec(self) -> SyntheticSpec:
        d = self.raw["data"]
        return SyntheticSpec(seed=self.seed, **d)

    def architecture(self) -> Architecture:
        return Architecture(**self.raw["model"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.raw["train"])

    def path(self, name: str, required: bool = True) -> Path | None:
        value = self.raw["paths"].get(name)
        if value is None:
            if required:
                raise ConfigError(f"paths.{name} is required for this command")
            return None
        return Path(value)

    def prediction_paths(self) -> list[Path]:
        preds = self.raw["paths"]["predictions"]
        if not isinstance(preds, list) or not preds:
            raise ConfigError("paths.predictions must be a non-empty list of CSV paths")
        return [Path(p) for p in preds]


def _merge(defaults: dict, user: dict, prefix: str) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in user.items():
        label = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key {label!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{label!r} must be an object")
            merged[key] = _merge(defaults[key], value, prefix=f"{label}.")
        else:
            merged[key] = value
    return merged


def _apply_override(cfg: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key.path=value")
    dotted, text = item.split("=", 1)
    keys = dotted.strip().split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[key]
    leaf = keys[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    if isinstance(node[leaf], dict):
        raise ConfigError(f"{dotted!r} is a section, not a value")
    try:
        node[leaf] = json.loads(text)
    except json.JSONDecodeError:
        node[leaf] = text
