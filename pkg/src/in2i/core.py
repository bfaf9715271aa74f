"""Configuration types, validation and seeding shared by the whole package."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import torch

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

GAN_MODES = ("log", "least_squares")
FUSION_MODES = ("feature", "concat", "wavelet_db4")


class ConfigError(ValueError):
    """Raised when a configuration fails validation.

    ``errors`` holds every problem found, not just the first one.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    channels: int


@dataclass(frozen=True)
class DomainSpec:
    sources: tuple[ModalitySpec, ...]
    target: ModalitySpec

    @property
    def n(self) -> int:
        return len(self.sources)

    @property
    def source_names(self) -> list[str]:
        return [m.name for m in self.sources]


@dataclass(frozen=True)
class ModelConfig:
    domains: DomainSpec
    image_size: tuple[int, int] = (256, 256)
    base_width: int = 64
    n_res_extract: int = 4
    n_res_encoder: int = 4
    n_res_decoder: int = 3
    n_res_reverse_decoder: int = 5
    latent_channels: int | None = None
    disc_width: int = 64
    gan_mode: str = "log"
    fusion_mode: str = "feature"

    @property
    def latent_width(self) -> int:
        return self.latent_channels if self.latent_channels is not None else 4 * self.base_width

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        h, w = self.image_size
        return (self.latent_width, h // 4, w // 4)


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 10.0
    lambda2: float = 1.0
    lr_generator: float = 2e-4
    lr_discriminator: float = 1e-4
    epochs: int = 200
    decay_start_epoch: int = 100
    batch_size: int = 1
    seed: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    init_std: float = 0.02
    max_steps: int | None = None
    checkpoint_every: int = 1


@dataclass(frozen=True)
class DataConfig:
    root: str | None = None
    n_test: int = 0
    random_crop: bool = False


@dataclass(frozen=True)
class Config:
    model: ModelConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)


# ---------------------------------------------------------------------------
# validation


def _check_modality(m: ModalitySpec, where: str, errors: list[str]) -> None:
    if not isinstance(m.name, str) or not m.name.isidentifier():
        errors.append(f"{where}: modality name {m.name!r} is not an identifier")
    if not isinstance(m.channels, int) or m.channels < 1:
        errors.append(f"{where}: channels must be a positive integer, got {m.channels!r}")


def validate_config(model: ModelConfig, train: TrainConfig | None = None):
    """Check ``model`` and ``train`` and return them with every default made explicit.

    All problems are collected and raised together as a :class:`ConfigError`.
    """
    train = train if train is not None else TrainConfig()
    errors: list[str] = []

    dom = model.domains
    if len(dom.sources) < 1:
        errors.append("domains: at least one source modality is required")
    for i, m in enumerate(dom.sources):
        _check_modality(m, f"sources[{i}]", errors)
    _check_modality(dom.target, "target", errors)
    names = [m.name for m in dom.sources] + [dom.target.name]
    dups = sorted({x for x in names if names.count(x) > 1})
    if dups:
        errors.append(f"duplicate modality names: {', '.join(dups)}")

    h, w = model.image_size
    if h <= 0 or w <= 0:
        errors.append(f"image_size must be positive, got {h}x{w}")
    elif h % 4 or w % 4:
        errors.append(f"image_size {h}x{w} not divisible by 4")
    for key in ("base_width", "disc_width"):
        if getattr(model, key) < 1:
            errors.append(f"{key} must be >= 1")
    for key in ("n_res_extract", "n_res_encoder", "n_res_decoder", "n_res_reverse_decoder"):
        if getattr(model, key) < 0:
            errors.append(f"{key} must be >= 0")
    if model.latent_channels is not None and model.latent_channels < 1:
        errors.append("latent_channels must be >= 1")
    if model.gan_mode not in GAN_MODES:
        errors.append(f"gan_mode must be one of {GAN_MODES}, got {model.gan_mode!r}")
    if model.fusion_mode not in FUSION_MODES:
        errors.append(f"fusion_mode must be one of {FUSION_MODES}, got {model.fusion_mode!r}")
    if model.fusion_mode == "wavelet_db4" and any(m.channels != 1 for m in dom.sources):
        errors.append("wavelet_db4 fusion needs single-channel sources")

    if train.lambda1 < 0 or train.lambda2 < 0:
        errors.append("lambda1 and lambda2 must be non-negative")
    if train.lr_generator <= 0 or train.lr_discriminator <= 0:
        errors.append("learning rates must be > 0")
    if train.epochs < 1:
        errors.append("epochs must be >= 1")
    if not 0 <= train.decay_start_epoch < train.epochs:
        errors.append(
            f"decay_start_epoch ({train.decay_start_epoch}) must be < epochs ({train.epochs})"
        )
    if train.batch_size < 1:
        errors.append("batch_size must be >= 1")
    if train.max_steps is not None and train.max_steps < 1:
        errors.append("max_steps must be >= 1")
    if train.checkpoint_every < 0:
        errors.append("checkpoint_every must be >= 0")
    if errors:
        raise ConfigError(errors)

    model = dataclasses.replace(
        model,
        image_size=(int(h), int(w)),
        latent_channels=model.latent_width,
        domains=DomainSpec(tuple(dom.sources), dom.target),
    )
    return model, train


# ---------------------------------------------------------------------------
# (de)serialization


def model_to_dict(model: ModelConfig) -> dict[str, Any]:
    d = dataclasses.asdict(model)
    dom = d.pop("domains")
    d["sources"] = [dict(m) for m in dom["sources"]]
    d["target"] = dict(dom["target"])
    d["image_size"] = list(model.image_size)
    if d["latent_channels"] is None:
        del d["latent_channels"]
    return d


def _strict_kwargs(cls, raw: Mapping[str, Any], section: str, skip=()) -> dict[str, Any]:
    known = {f.name for f in dataclasses.fields(cls)} - set(skip)
    unknown = sorted(set(raw) - known - set(skip))
    if unknown:
        raise ConfigError([f"[{section}] unknown key {k!r}" for k in unknown])
    return {k: v for k, v in raw.items() if k in known}


def model_from_dict(raw: Mapping[str, Any]) -> ModelConfig:
    raw = dict(raw)
    errors = []
    for key in ("sources", "target"):
        if key not in raw:
            errors.append(f"[model] missing required key {key!r}")
    if errors:
        raise ConfigError(errors)

    def modality(m, where):
        if not isinstance(m, Mapping) or set(m) != {"name", "channels"}:
            raise ConfigError(f"[model] {where} needs exactly the keys 'name' and 'channels'")
        return ModalitySpec(str(m["name"]), m["channels"])

    domains = DomainSpec(
        tuple(modality(m, f"sources[{i}]") for i, m in enumerate(raw.pop("sources"))),
        modality(raw.pop("target"), "target"),
    )
    kwargs = _strict_kwargs(ModelConfig, raw, "model", skip=("domains",))
    if "image_size" in kwargs:
        kwargs["image_size"] = tuple(kwargs["image_size"])
    return ModelConfig(domains=domains, **kwargs)


def config_to_dict(cfg: Config) -> dict[str, Any]:
    train = {k: v for k, v in dataclasses.asdict(cfg.train).items() if v is not None}
    data = {k: v for k, v in dataclasses.asdict(cfg.data).items() if v is not None}
    return {"model": model_to_dict(cfg.model), "train": train, "data": data}


def config_from_dict(raw: Mapping[str, Any]) -> Config:
    unknown = sorted(set(raw) - {"model", "train", "data"})
    if unknown:
        raise ConfigError([f"unknown section [{k}]" for k in unknown])
    if "model" not in raw:
        raise ConfigError("missing [model] section")
    model = model_from_dict(raw["model"])
    train = TrainConfig(**_strict_kwargs(TrainConfig, raw.get("train", {}), "train"))
    data = DataConfig(**_strict_kwargs(DataConfig, raw.get("data", {}), "data"))
    model, train = validate_config(model, train)
    return Config(model, train, data)


def loads_config(text: str) -> Config:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict(raw)


def load_config(path: str | Path) -> Config:
    return loads_config(Path(path).read_text())


def dumps_config(cfg: Config) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def save_config(cfg: Config, path: str | Path) -> None:
    Path(path).write_text(dumps_config(cfg))


def config_hash(model: ModelConfig) -> str:
    """Stable digest of everything that determines network shapes."""
    payload = json.dumps(model_to_dict(validate_config(model)[0]), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# randomness


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic numpy stream; the only source of host-side randomness."""
    return np.random.Generator(np.random.PCG64(seed))


def torch_generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g
