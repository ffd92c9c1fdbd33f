"""Run configuration: YAML file plus CLI overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

from .errors import ConfigError


@dataclass
class DatasetConfig:
    kind: str = "idx"            # idx | frames | synth-xor
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    frames_dir: str | None = None
    limit_train: int | None = None
    limit_test: int | None = None
    t_steps: int = 8
    augment: bool = False
    normalize: bool = True
    # synth-xor knobs
    n_train: int = 256
    n_test: int = 256
    n_features: int = 16


@dataclass
class NeuronConfig:
    tau0: float = 2.0
    v_th: float = 1.0
    v_reset: float = 0.0
    detach_reset: bool = True


@dataclass
class TrainConfig:
    network: str = "FC100-PLIF-APk10s10"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 30
    t_schedule: int = 64
    dropout_p: float = 0.5
    protocol: str = "A"
    val_fraction: float = 0.15
    seed: int = 1
    tie_policy: str = "first"
    device_threads: int = 1
    out_dir: str = "runs/default"

    def validate(self):
        if self.protocol not in ("A", "B"):
            raise ConfigError(f"protocol must be A or B, got {self.protocol!r}")
        if self.tie_policy not in ("first", "random"):
            raise ConfigError(f"tie_policy must be 'first' or 'random', got {self.tie_policy!r}")
        if self.batch_size < 1 or self.epochs < 0 or self.t_schedule < 1:
            raise ConfigError("batch_size/epochs/t_schedule out of range")
        if self.device_threads < 1:
            raise ConfigError("device-threads must be >= 1")
        ds = self.dataset
        if ds.kind == "idx":
            for attr in ("train_images", "train_labels", "test_images", "test_labels"):
                p = getattr(ds, attr)
                if p is None:
                    raise ConfigError(f"dataset.{attr} is required for kind 'idx'")
                if not Path(p).exists():
                    raise ConfigError(f"dataset.{attr} path does not exist: {p}")
        elif ds.kind == "frames":
            if ds.frames_dir is None or not Path(ds.frames_dir).exists():
                raise ConfigError(f"dataset.frames_dir missing or absent: {ds.frames_dir}")
        elif ds.kind != "synth-xor":
            raise ConfigError(f"unknown dataset kind {ds.kind!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of everything that shapes the numerical run (out_dir excluded)."""
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" in d:
            d["dataset"] = DatasetConfig(**d["dataset"])
        if "neuron" in d:
            d["neuron"] = NeuronConfig(**d["neuron"])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e))

    @classmethod
    def from_yaml(cls, path, overrides: dict | None = None) -> "TrainConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = yaml.safe_load(f) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {path} is not valid YAML: {e}")
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        if overrides:
            raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(raw)
