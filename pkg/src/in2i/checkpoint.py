"""Checkpoint directory: a TOML manifest plus one ``.npy`` file per named tensor.

::

    manifest.toml        config hash, epoch, step, gan mode, modality order, full config
    params/<net>.<name>.npy
    optim.pt             Adam moments (optional, present in training checkpoints)
    sampler.json         shuffle-stream state (optional)
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import torch
import tomli_w

from .core import Config, ConfigError, config_from_dict, config_hash, config_to_dict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MANIFEST = "manifest.toml"


def _tensors(nets: dict[str, torch.nn.Module]):
    for prefix, net in nets.items():
        for name, t in net.state_dict().items():
            yield f"{prefix}.{name}", t


def save_checkpoint(path, cfg: Config, nets: dict[str, torch.nn.Module], epoch: int, step: int,
                    optimizers: dict | None = None, sampler: dict | None = None) -> Path:
    path = Path(path)
    (path / "params").mkdir(parents=True, exist_ok=True)
    names = []
    for name, t in _tensors(nets):
        np.save(path / "params" / f"{name}.npy", t.detach().cpu().numpy())
        names.append(name)
    manifest = {
        "config_hash": config_hash(cfg.model),
        "epoch": int(epoch),
        "step": int(step),
        "gan_mode": cfg.model.gan_mode,
        "fusion_mode": cfg.model.fusion_mode,
        "sources": cfg.model.domains.source_names,
        "target": cfg.model.domains.target.name,
        "tensors": names,
        "config": config_to_dict(cfg),
    }
    (path / MANIFEST).write_text(tomli_w.dumps(manifest))
    if optimizers is not None:
        torch.save({k: o.state_dict() for k, o in optimizers.items()}, path / "optim.pt")
    if sampler is not None:
        (path / "sampler.json").write_text(json.dumps(sampler))
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    if not (path / MANIFEST).exists():
        raise FileNotFoundError(f"no checkpoint manifest in {path}")
    manifest = tomllib.loads((path / MANIFEST).read_text())
    cfg = config_from_dict(manifest["config"])
    if config_hash(cfg.model) != manifest["config_hash"]:
        raise ConfigError(f"checkpoint {path}: stored config does not match its hash")
    manifest["config"] = cfg
    return manifest


def load_into(path, nets: dict[str, torch.nn.Module]) -> None:
    path = Path(path)
    for prefix, net in nets.items():
        state = {}
        for name in net.state_dict():
            f = path / "params" / f"{prefix}.{name}.npy"
            if not f.exists():
                raise FileNotFoundError(f"checkpoint {path} lacks tensor {prefix}.{name}")
            state[name] = torch.from_numpy(np.load(f))
        net.load_state_dict(state)


def check_compatible(manifest: dict, cfg: Config) -> None:
    want = config_hash(cfg.model)
    if manifest["config_hash"] != want:
        raise ConfigError(
            f"config hash mismatch: checkpoint {manifest['config_hash']}, current {want}")
