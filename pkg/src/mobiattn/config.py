"""Run configuration as a flat ``key=value`` text file.

Model keys use the ``model.*`` / ``block.N.*`` scheme of
:meth:`ModelSpec.to_text`; training keys are ``train.*``, augmentation
keys ``augment.*`` and data keys ``data.*``. Unknown keys are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError, MobiAttnError
from .model import ModelSpec, spec_from_items, spec_to_items
from .preprocess import AugmentConfig
from .train import TrainConfig


@dataclass(frozen=True)
class DataConfig:
    train_fraction: float = 0.8
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_text(self) -> str:
        items = spec_to_items(self.model)
        for f in fields(TrainConfig):
            items[f"train.{f.name}"] = repr(getattr(self.train, f.name))
        items["augment.enabled"] = "true" if self.augment is not None else "false"
        aug = self.augment or AugmentConfig()
        items["augment.rotation_max_deg"] = repr(aug.rotation_max_deg)
        items["augment.flip_probability"] = repr(aug.flip_probability)
        items["augment.scale_lo"], items["augment.scale_hi"] = map(repr, aug.scale_range)
        items["augment.brightness_lo"], items["augment.brightness_hi"] = map(repr, aug.brightness_range)
        items["augment.contrast_lo"], items["augment.contrast_hi"] = map(repr, aug.contrast_range)
        items["augment.seed"] = repr(aug.seed)
        items["data.train_fraction"] = repr(self.data.train_fraction)
        items["data.seed"] = repr(self.data.seed)
        return "".join(f"{k}={v}\n" for k, v in sorted(items.items()))


def _num(key: str, raw: str, kind):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(text: str) -> RunConfig:
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in items:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        items[k] = v

    try:
        model = spec_from_items(items)

        tdef = TrainConfig()
        tkw = {}
        for f in fields(TrainConfig):
            key = f"train.{f.name}"
            if key in items:
                kind = type(getattr(tdef, f.name))
                tkw[f.name] = _num(key, items.pop(key), kind)
        train = TrainConfig(**tkw)

        adef = AugmentConfig()
        enabled = items.pop("augment.enabled", "true").lower()
        if enabled not in ("true", "false"):
            raise ConfigError(f"augment.enabled: expected true/false, got {enabled!r}")

        def af(key, default):
            return _num(f"augment.{key}", items.pop(f"augment.{key}"), float) if f"augment.{key}" in items else default

        aug = AugmentConfig(
            rotation_max_deg=af("rotation_max_deg", adef.rotation_max_deg),
            flip_probability=af("flip_probability", adef.flip_probability),
            scale_range=(af("scale_lo", adef.scale_range[0]), af("scale_hi", adef.scale_range[1])),
            brightness_range=(af("brightness_lo", adef.brightness_range[0]),
                              af("brightness_hi", adef.brightness_range[1])),
            contrast_range=(af("contrast_lo", adef.contrast_range[0]), af("contrast_hi", adef.contrast_range[1])),
            seed=_num("augment.seed", items.pop("augment.seed"), int) if "augment.seed" in items else adef.seed,
        )

        ddef = DataConfig()
        data = DataConfig(
            train_fraction=_num("data.train_fraction", items.pop("data.train_fraction"), float)
            if "data.train_fraction" in items else ddef.train_fraction,
            seed=_num("data.seed", items.pop("data.seed"), int) if "data.seed" in items else ddef.seed,
        )
        if not 0.0 < data.train_fraction <= 1.0:
            raise ConfigError(f"data.train_fraction must lie in (0, 1], got {data.train_fraction}")
    except ConfigError:
        raise
    except (MobiAttnError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    if items:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(items))}")
    return RunConfig(model, train, aug if enabled == "true" else None, data)


def load_config(path: str | os.PathLike) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
