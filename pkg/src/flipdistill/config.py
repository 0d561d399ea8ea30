"""Run configuration, stored as a JSON text file."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .augment import PALETTE

METHODS = ("DM", "DC")


@dataclass
class DistillConfig:
    # data
    dataset: str = "mnist"
    data_dir: str = "data/mnist-subset"
    flip_closed: bool = False
    # distillation
    method: str = "DM"
    fyi: bool = False
    fyi_variant: str = "hflip"
    ipc: int = 1
    iterations: int = 2000
    lr_syn: float = 0.1
    momentum_syn: float = 0.5
    batch_real: int = 256
    init: str = "real"
    dsa: bool = True
    distill_palette: tuple = PALETTE
    # network
    blocks: int | None = None
    width: int = 128
    instance_norm: bool = False
    # diagnostics
    theta_samples: int = 10
    score_every: int = 0
    # retraining
    epochs: int = 300
    lr_net: float = 0.01
    momentum_net: float = 0.9
    weight_decay: float = 5e-4
    lr_drop_epoch: int | None = None
    lr_drop_factor: float = 0.1
    batch_train: int = 256
    retrain_aug: bool = True
    retrain_palette: tuple = PALETTE
    # seeds
    data_seed: int = 0
    theta_seed: int = 1
    aug_seed: int = 2
    eval_seed: int = 1000
    eval_seeds: int = 10
    notes: dict = field(default_factory=dict)

    def validate(self) -> "DistillConfig":
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.ipc < 1:
            raise ValueError(f"ipc must be >= 1, got {self.ipc}")
        if self.iterations < 0 or self.epochs < 0:
            raise ValueError("iterations and epochs must be non-negative")
        for name in ("lr_syn", "lr_net"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("momentum_syn", "momentum_net", "weight_decay", "lr_drop_factor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.batch_real < 1 or self.batch_train < 1 or self.theta_samples < 1:
            raise ValueError("batch sizes and theta_samples must be >= 1")
        if self.init not in ("real", "noise"):
            raise ValueError(f"init must be 'real' or 'noise', got {self.init!r}")
        unknown = (set(self.distill_palette) | set(self.retrain_palette)) - set(PALETTE)
        if unknown:
            raise ValueError(f"unknown augmentation(s) {sorted(unknown)}")
        return self

    @property
    def drop_epoch(self) -> int:
        return self.epochs // 2 if self.lr_drop_epoch is None else self.lr_drop_epoch

    def replace(self, **changes) -> "DistillConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["distill_palette"] = list(self.distill_palette)
        d["retrain_palette"] = list(self.retrain_palette)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DistillConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("distill_palette", "retrain_palette"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DistillConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "DistillConfig":
        return cls.from_json(Path(path).read_text())

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()
