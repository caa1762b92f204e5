"""Run configuration: one JSON file drives every command; flags override keys."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FiberParams:
    n: int = 200
    k: int = 12
    final: int = 6
    spacing: int = 2
    seed: int = 0


@dataclass(frozen=True)
class ChainParams:
    gamma: float = 3.0
    A: float = 0.8
    beta: float = 0.1
    d_max: float = 10.0
    contrast: bool = False
    sigma: float = 1.0
    window: int = 7
    degrade_hsi: bool = True


@dataclass(frozen=True)
class DatasetParams:
    train_stride: int = 8
    test_stride: int = 16
    test_fraction: float = 0.2
    side: str = "right"
    seed: int = 0


@dataclass(frozen=True)
class TrainParams:
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 200
    focal_gamma: float = 3.0
    seed: int = 0


@dataclass(frozen=True)
class SweepParams:
    gammas: tuple = (1.0, 2.0, 3.0, 4.0)
    As: tuple = (0.6, 0.8, 0.95)
    contrast: tuple = (False,)
    models: tuple = ("siamese", "unet_rgb", "cnn_rgb")


@dataclass(frozen=True)
class RunConfig:
    out: str = "runs/jasper"
    scene: Optional[str] = None  # defaults to <out>/scene
    fiber: FiberParams = field(default_factory=FiberParams)
    chain: ChainParams = field(default_factory=ChainParams)
    dataset: DatasetParams = field(default_factory=DatasetParams)
    train: TrainParams = field(default_factory=TrainParams)
    sweep: SweepParams = field(default_factory=SweepParams)

    @property
    def scene_dir(self) -> Path:
        return Path(self.scene) if self.scene else Path(self.out) / "scene"

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        return _build(cls, doc, "")

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        return cls.from_json(doc)

    def override(self, key: str, value) -> "RunConfig":
        """Replace a dotted key, e.g. ``train.epochs``; strings are parsed as JSON when possible."""
        head, _, rest = key.partition(".")
        names = {f.name: f for f in fields(self)}
        if head not in names:
            raise ConfigError(f"unknown config key {key!r}")
        if rest:
            sub = getattr(self, head)
            sub_names = {f.name for f in fields(sub)}
            if rest not in sub_names:
                raise ConfigError(f"unknown config key {key!r}")
            current = getattr(sub, rest)
            return replace(self, **{head: replace(sub, **{rest: _coerce(value, current, key)})})
        if is_dataclass(getattr(self, head)):
            raise ConfigError(f"{key!r} is a section; set one of its keys")
        return replace(self, **{head: _coerce(value, getattr(self, head), key)})

    def with_seed(self, seed: int) -> "RunConfig":
        """Set every seed in the config at once."""
        return replace(
            self,
            fiber=replace(self.fiber, seed=seed),
            dataset=replace(self.dataset, seed=seed),
            train=replace(self.train, seed=seed),
        )


def _coerce(value, current, key):
    if current is None:
        return value
    if isinstance(value, str) and not isinstance(current, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{key}: cannot parse {value!r}") from err
    if isinstance(current, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key} expects a list")
        return tuple(value)
    if isinstance(current, bool) and not isinstance(value, bool):
        raise ConfigError(f"{key} expects true/false")
    if isinstance(current, (int, float)) and not isinstance(current, bool):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{key} expects a number")
        if isinstance(current, float):
            return float(value)
        if not float(value).is_integer():
            raise ConfigError(f"{key} expects an integer")
        return int(value)
    return value


def _build(cls, doc: dict, prefix: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(prefix + k for k in unknown)}")
    obj = cls()
    kwargs = {}
    for name, value in doc.items():
        current = getattr(obj, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{prefix}{name}.")
        else:
            kwargs[name] = _coerce(value, current, prefix + name)
    return replace(obj, **kwargs)
