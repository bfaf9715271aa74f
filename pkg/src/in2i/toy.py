"""Deterministic synthetic dataset for desk-scale runs.

Every sample is one random shape on a black background:

* source ``mask``  - the filled shape (white)
* source ``edge``  - its one-pixel outline
* target / ground truth - the filled shape painted with its class colour

Target images are drawn from their own random shapes, so the target pool is
unpaired with the sources. Ground truth exists for test ids only.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .core import (Config, DataConfig, DomainSpec, ModalitySpec, ModelConfig, TrainConfig,
                   save_config, seeded_rng)

# class -> RGB, fixed
CLASS_COLORS = {
    "circle": (220, 40, 40),
    "square": (40, 180, 60),
    "triangle": (40, 80, 220),
    "cross": (230, 200, 40),
}
CLASSES = tuple(CLASS_COLORS)


def _shape_mask(kind: str, size: int, cx: float, cy: float, r: float) -> np.ndarray:
    img = Image.new("L", (size, size), 0)
    d = ImageDraw.Draw(img)
    if kind == "circle":
        d.ellipse([cx - r, cy - r, cx + r, cy + r], fill=255)
    elif kind == "square":
        d.rectangle([cx - r, cy - r, cx + r, cy + r], fill=255)
    elif kind == "triangle":
        d.polygon([(cx, cy - r), (cx - r, cy + r), (cx + r, cy + r)], fill=255)
    elif kind == "cross":
        t = r / 3
        d.rectangle([cx - r, cy - t, cx + r, cy + t], fill=255)
        d.rectangle([cx - t, cy - r, cx + t, cy + r], fill=255)
    else:
        raise ValueError(kind)
    return np.asarray(img) > 0


def random_shape(rng: np.random.Generator, size: int):
    kind = CLASSES[int(rng.integers(len(CLASSES)))]
    r = float(rng.uniform(0.18, 0.32)) * size
    cx, cy = (float(v) for v in rng.uniform(0.5 * size - 0.2 * size, 0.5 * size + 0.2 * size, 2))
    return kind, _shape_mask(kind, size, cx, cy, r)


def edge_map(mask: np.ndarray) -> np.ndarray:
    return mask & ~ndimage.binary_erosion(mask)


def colorize(kind: str, mask: np.ndarray) -> np.ndarray:
    out = np.zeros(mask.shape + (3,), dtype=np.uint8)
    out[mask] = CLASS_COLORS[kind]
    return out


def toy_config(root=None, size: int = 32, n: int = 2, base_width: int = 16,
               **train_overrides) -> Config:
    """Small model suited to the toy task. ``n=1`` keeps only the edge modality.

    Uses least-squares adversarial terms and a 24-epoch schedule (decay from
    epoch 12), about 1500 steps on 64 training samples.
    """
    sources = (ModalitySpec("mask", 1), ModalitySpec("edge", 1))
    if n == 1:
        sources = (ModalitySpec("edge", 1),)
    elif n != 2:
        raise ValueError("the toy task has two source modalities")
    model = ModelConfig(
        DomainSpec(sources, ModalitySpec("rgb", 3)),
        image_size=(size, size),
        base_width=base_width,
        disc_width=base_width,
        n_res_extract=2,
        n_res_encoder=2,
        n_res_decoder=2,
        n_res_reverse_decoder=2,
        gan_mode="least_squares",
    )
    train = TrainConfig(**{"epochs": 24, "decay_start_epoch": 12, **train_overrides})
    return Config(model, train, DataConfig(root=None if root is None else str(root)))


def make_toy(out, size: int = 32, count: int = 64, seed: int = 0, n_test: int | None = None):
    """Write a toy dataset to ``out`` and return the list of (sample_id, class) pairs."""
    out = Path(out)
    if n_test is None:
        n_test = count // 5
    if not 0 <= n_test <= count:
        raise ValueError("n_test must lie in [0, count]")
    rng = seeded_rng(seed)
    src_rng, tgt_rng, split_rng = rng.spawn(3)
    for sub in ("source/mask", "source/edge", "target", "ground_truth"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    ids = [f"{i:04d}" for i in range(count)]
    test = set(ids[i] for i in split_rng.permutation(count)[:n_test])
    classes = []
    for sid in ids:
        kind, mask = random_shape(src_rng, size)
        classes.append((sid, kind))
        Image.fromarray(mask.astype(np.uint8) * 255).save(out / "source/mask" / f"{sid}.png")
        Image.fromarray(edge_map(mask).astype(np.uint8) * 255).save(out / "source/edge" / f"{sid}.png")
        if sid in test:
            Image.fromarray(colorize(kind, mask)).save(out / "ground_truth" / f"{sid}.png")
    for i in range(count):
        kind, mask = random_shape(tgt_rng, size)
        Image.fromarray(colorize(kind, mask)).save(out / "target" / f"t{i:04d}.png")
    (out / "split.txt").write_text(
        "".join(f"{sid} {'test' if sid in test else 'train'}\n" for sid in ids))
    save_config(toy_config(out, size), out / "toy.toml")
    return classes
