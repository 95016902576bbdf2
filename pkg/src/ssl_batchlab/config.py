"""Run configuration: strict JSON <-> nested dataclasses.

Unknown keys and wrongly typed values are rejected with the full dotted
key path in the error.  ``to_dict(from_dict(d))`` reproduces ``d`` once
defaults are filled in.
"""
from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .augment import AugmentConfig
from .errors import ConfigError
from .fixmatch import FixmatchConfig
from .sampler import SamplerConfig
from .synthdata import DatasetSpec

CONFIG_VERSION = 1
LR_SCHEDULES = ("cosine", "cosine_7_16")


@dataclass
class DataConfig:
    kind: str = "moons"
    n: int = 1000
    n_test: int = 1000
    noise_sigma: float = 0.15
    num_classes: tuple = (2,)
    task_defs: tuple = ("membership",)
    seed: int = 0
    val_fraction: float = 0.1
    n_labeled: tuple = (4,)
    blob_radius: float = 2.0

    def dataset_spec(self):
        return DatasetSpec(self.kind, self.n + self.n_test, self.noise_sigma, tuple(self.num_classes),
                           self.seed, tuple(self.task_defs), self.blob_radius)

    def validate(self):
        self.dataset_spec().validate()
        if self.n_test < 0:
            raise ConfigError("n_test must be >= 0", key="data.n_test")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)", key="data.val_fraction")
        if len(self.n_labeled) != len(self.task_defs):
            raise ConfigError("need one labeled count per task", key="data.n_labeled")
        if any(k < 0 for k in self.n_labeled):
            raise ConfigError("labeled counts must be >= 0", key="data.n_labeled")


@dataclass
class ModelConfig:
    hidden: tuple = (64, 64)

    def validate(self):
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be >= 1", key="model.hidden")


@dataclass
class TrainConfig:
    lr0: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 5e-4
    budget_epochs: float = 600.0
    budget_multiplier: float = 1.0
    budget_samples: int | None = None
    eval_every: float = 1.0
    ema_decay: float = 0.999
    lr_schedule: str = "cosine"
    patience: float | None = None
    init_checkpoint: str | None = None

    def validate(self):
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be > 0", key="train.lr0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)", key="train.momentum")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0", key="train.weight_decay")
        if self.budget_epochs <= 0 or self.budget_multiplier <= 0:
            raise ConfigError("budget must be > 0", key="train.budget_epochs")
        if self.budget_samples is not None and self.budget_samples <= 0:
            raise ConfigError("budget_samples must be > 0", key="train.budget_samples")
        if self.eval_every <= 0:
            raise ConfigError("eval_every must be > 0", key="train.eval_every")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("ema_decay must lie in [0, 1)", key="train.ema_decay")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"unknown schedule {self.lr_schedule!r}", key="train.lr_schedule")


@dataclass
class MetricsConfig:
    raw_batch_log: bool = False


@dataclass
class ReplicateConfig:
    seeds: tuple = (0,)
    split_seeds: tuple = (0,)

    def validate(self):
        if not self.seeds or not self.split_seeds:
            raise ConfigError("need at least one seed and one split seed", key="replicates")


@dataclass
class RunConfig:
    spec_version: int = CONFIG_VERSION
    name: str = "run"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    fixmatch: FixmatchConfig = field(default_factory=FixmatchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    replicates: ReplicateConfig = field(default_factory=ReplicateConfig)

    def validate(self):
        if self.spec_version != CONFIG_VERSION:
            raise ConfigError(f"unsupported version {self.spec_version}", key="spec_version")
        for section in (self.data, self.model, self.sampler, self.augment, self.fixmatch,
                        self.train, self.replicates):
            section.validate()
        if self.sampler.mode == "explicit" and len(self.data.task_defs) != 1:
            raise ConfigError("explicit mode is single-task; use explicit_multitask", key="sampler.mode")
        return self


SECTIONS = {
    "data": DataConfig,
    "model": ModelConfig,
    "sampler": SamplerConfig,
    "augment": AugmentConfig,
    "fixmatch": FixmatchConfig,
    "train": TrainConfig,
    "metrics": MetricsConfig,
    "replicates": ReplicateConfig,
}


def _coerce(value, default, key):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", key=key)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key=key)
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key=key)
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key=key)
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}", key=key)
        if default:
            return tuple(_coerce(v, default[0], f"{key}[{i}]") for i, v in enumerate(value))
        return tuple(value)
    return value


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError("expected an object", key=prefix)
    names = {f.name: f for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError("unknown key", key=f"{prefix}.{k}")
    obj = cls()
    for k, v in data.items():
        default = getattr(obj, k)
        if default is None:
            if isinstance(v, dict):
                v = {str(kk): vv for kk, vv in v.items()}
            setattr(obj, k, v)
        elif v is None:
            setattr(obj, k, None)
        else:
            setattr(obj, k, _coerce(v, default, f"{prefix}.{k}"))
    return obj


def from_dict(d) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"spec_version", "name", *SECTIONS}
    for k in d:
        if k not in allowed:
            raise ConfigError("unknown key", key=k)
    if "spec_version" not in d:
        raise ConfigError("missing version key", key="spec_version")
    cfg = RunConfig()
    cfg.spec_version = _coerce(d["spec_version"], 1, "spec_version")
    if "name" in d:
        cfg.name = _coerce(d["name"], "", "name")
    for name, cls in SECTIONS.items():
        if name in d:
            setattr(cfg, name, _build(cls, d[name], name))
    return cfg.validate()


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def to_dict(cfg: RunConfig):
    out = {"spec_version": cfg.spec_version, "name": cfg.name}
    for name in SECTIONS:
        section = getattr(cfg, name)
        out[name] = {f.name: _plain(getattr(section, f.name)) for f in dataclasses.fields(section)}
    return out


def dumps(cfg: RunConfig):
    return json.dumps(to_dict(cfg), indent=2, sort_keys=False) + "\n"


def preset_names():
    return sorted(p.name[:-5] for p in resources.files("ssl_batchlab.presets").iterdir()
                  if p.name.endswith(".json"))


def load(path_or_preset) -> RunConfig:
    """Load a config file, or a shipped preset by name."""
    p = Path(path_or_preset)
    if p.exists():
        text = p.read_text()
    else:
        res = resources.files("ssl_batchlab.presets").joinpath(f"{path_or_preset}.json")
        if not res.is_file():
            raise ConfigError(f"no config file or preset named {path_or_preset!r}")
        text = res.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path_or_preset}: invalid JSON ({exc})") from exc
    return from_dict(raw)


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(cfg: RunConfig, overrides):
    """Return a new config with ``section.key=value`` overrides applied."""
    d = to_dict(cfg)
    for key, value in overrides:
        parts = key.split(".")
        node = d
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError("unknown key", key=key)
            node = node[p]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError("unknown key", key=key)
        node[parts[-1]] = value
    return from_dict(copy.deepcopy(d))
