"""Unpaired multi-modal dataset on disk and the epoch sampler that feeds training.

Layout::

    root/source/<modality>/<sample_id>.(png|jpg)
    root/target/<target_id>.(png|jpg)
    root/ground_truth/<sample_id>.(png|jpg)    optional, evaluation only
    root/split.txt                             "<sample_id> train|test" per line

Source modalities are paired with each other by ``sample_id``. Target images
share nothing with them and are drawn from their own shuffled order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image

from .core import DomainSpec, seeded_rng

IMAGE_EXTS = (".png", ".jpg", ".jpeg")
GRAY_WEIGHTS = (0.299, 0.587, 0.114)
_PIL_MODES = {1: "L", 3: "RGB", 4: "RGBA"}


class DataError(ValueError):
    pass


class EpochExhausted(StopIteration):
    """Raised by :func:`next_batch` when every train id of the epoch has been served."""


# ---------------------------------------------------------------------------
# image io


def to_unit(x: torch.Tensor) -> torch.Tensor:
    """[-1, 1] -> [0, 1]."""
    return (x + 1) / 2


def from_unit(x: torch.Tensor) -> torch.Tensor:
    return x * 2 - 1


def load_image(path, channels: int, size: tuple[int, int] | None = None) -> torch.Tensor:
    """Read an image file as a ``channels x H x W`` float tensor in [-1, 1]."""
    if channels not in _PIL_MODES:
        raise DataError(f"cannot load {channels}-channel images from {path}")
    with Image.open(path) as im:
        im = im.convert(_PIL_MODES[channels])
        if size is not None and im.size != (size[1], size[0]):
            im = im.resize((size[1], size[0]), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return from_unit(torch.from_numpy(np.ascontiguousarray(arr)))


def save_image(x: torch.Tensor, path) -> None:
    """Write a ``C x H x W`` tensor in [-1, 1] as an 8-bit image."""
    x = x.detach().cpu().float()
    if x.dim() == 4:
        x = x[0]
    arr = (to_unit(x).clamp(0, 1) * 255.0).round().to(torch.uint8).numpy()
    if arr.shape[0] == 1:
        img = Image.fromarray(arr[0], mode="L")
    elif arr.shape[0] in (3, 4):
        img = Image.fromarray(arr.transpose(1, 2, 0), mode=_PIL_MODES[arr.shape[0]])
    else:
        raise DataError(f"cannot save a {arr.shape[0]}-channel image")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path)


def derive_grayscale(rgb: torch.Tensor) -> torch.Tensor:
    """Rec. 601 luma of a 3-channel image (channel axis -3)."""
    if rgb.dim() < 3 or rgb.shape[-3] != 3:
        raise ValueError(f"expected a 3-channel image, got shape {tuple(rgb.shape)}")
    w = torch.tensor(GRAY_WEIGHTS, dtype=rgb.dtype, device=rgb.device).view(3, 1, 1)
    return (rgb * w).sum(dim=-3, keepdim=True)


# ---------------------------------------------------------------------------
# dataset index


@dataclass
class UnpairedMultiModalDataset:
    root: Path
    domains: DomainSpec
    sources: dict[str, list[Path]]
    targets: list[Path]
    train_ids: list[str]
    test_ids: list[str]
    ground_truth: dict[str, Path] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def load(self, path: Path, channels: int, size) -> torch.Tensor:
        key = (path, channels, tuple(size) if size else None)
        if key not in self._cache:
            self._cache[key] = load_image(path, channels, size)
        return self._cache[key]

    def load_sources(self, sample_id: str, size) -> list[torch.Tensor]:
        return [self.load(p, m.channels, size)
                for p, m in zip(self.sources[sample_id], self.domains.sources)]

    def load_ground_truth(self, sample_id: str, size) -> torch.Tensor:
        if sample_id not in self.ground_truth:
            raise DataError(f"no ground truth image for sample {sample_id!r}")
        return self.load(self.ground_truth[sample_id], self.domains.target.channels, size)


def _index_dir(path: Path) -> dict[str, Path]:
    out = {}
    for p in sorted(path.iterdir()):
        if p.is_file() and p.suffix.lower() in IMAGE_EXTS:
            if p.stem in out:
                raise DataError(f"duplicate id {p.stem!r} in {path}")
            out[p.stem] = p
    return out


def make_split(ids: Sequence[str], n_test: int, seed: int) -> tuple[list[str], list[str]]:
    """Hold out ``n_test`` ids, chosen as a pure function of ``(seed, ids)``."""
    ids = sorted(ids)
    if not 0 <= n_test <= len(ids):
        raise DataError(f"cannot hold out {n_test} of {len(ids)} ids")
    perm = seeded_rng(seed).permutation(len(ids))
    test = sorted(ids[i] for i in perm[:n_test])
    test_set = set(test)
    return [i for i in ids if i not in test_set], test


def read_split(path: Path) -> tuple[list[str], list[str]]:
    train, test = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("train", "test"):
            raise DataError(f"{path}:{lineno}: expected '<sample_id> train|test'")
        (train if parts[1] == "train" else test).append(parts[0])
    return train, test


def scan_dataset(root, domains: DomainSpec, n_test: int = 0, seed: int = 0
                 ) -> UnpairedMultiModalDataset:
    """Index a dataset directory.

    If ``root/split.txt`` exists it decides train/test membership; otherwise
    ``n_test`` ids are held out with :func:`make_split`.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    per_mod = {}
    for m in domains.sources:
        d = root / "source" / m.name
        if not d.is_dir():
            raise DataError(f"missing source directory {d}")
        per_mod[m.name] = _index_dir(d)

    all_ids = sorted(set().union(*(set(v) for v in per_mod.values())))
    problems = []
    for sid in all_ids:
        missing = [name for name, idx in per_mod.items() if sid not in idx]
        if missing:
            problems.append(f"sample {sid!r} missing modality {', '.join(missing)}")
    if problems:
        raise DataError(problems[0] if len(problems) == 1 else "; ".join(problems))
    sources = {sid: [per_mod[m.name][sid] for m in domains.sources] for sid in all_ids}

    tdir = root / "target"
    targets = list(_index_dir(tdir).values()) if tdir.is_dir() else []
    if not targets:
        raise DataError(f"empty target pool in {tdir}")
    src_files = {p.resolve() for paths in sources.values() for p in paths}
    if any(p.resolve() in src_files for p in targets):
        raise DataError("target pool overlaps the source index")

    split = root / "split.txt"
    if split.exists():
        train, test = read_split(split)
        unknown = sorted(set(train + test) - set(all_ids))
        if unknown:
            raise DataError(f"split.txt names unknown ids: {', '.join(unknown[:5])}")
    else:
        train, test = make_split(all_ids, n_test, seed)
    if set(train) & set(test):
        raise DataError("train and test splits overlap")

    gdir = root / "ground_truth"
    gt = _index_dir(gdir) if gdir.is_dir() else {}
    return UnpairedMultiModalDataset(root, domains, sources, targets, sorted(train),
                                     sorted(test), gt)


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SampleBundle:
    sources: list[torch.Tensor]
    target: torch.Tensor
    sample_id: str
    target_id: str


@dataclass
class EpochState:
    """Position within the current epoch plus the two independent shuffle streams."""

    source_rng: np.random.Generator
    target_rng: np.random.Generator
    order: list[str] = field(default_factory=list)
    pos: int = 0
    target_order: list[int] = field(default_factory=list)
    target_pos: int = 0
    epoch: int = -1


def epoch_state(seed: int) -> EpochState:
    src, tgt = seeded_rng(seed).spawn(2)
    return EpochState(src, tgt)


def start_epoch(ds: UnpairedMultiModalDataset, state: EpochState) -> None:
    if not ds.train_ids:
        raise DataError("empty train split")
    state.order = [ds.train_ids[i] for i in state.source_rng.permutation(len(ds.train_ids))]
    state.pos = 0
    state.epoch += 1


def _draw_target(ds, state: EpochState) -> int:
    if state.target_pos >= len(state.target_order):
        state.target_order = state.target_rng.permutation(len(ds.targets)).tolist()
        state.target_pos = 0
    idx = state.target_order[state.target_pos]
    state.target_pos += 1
    return idx


def _random_crop(imgs: list[torch.Tensor], size, rng: np.random.Generator):
    h, w = size
    big = (int(round(h * 1.125)) // 4 * 4, int(round(w * 1.125)) // 4 * 4)
    imgs = [torch.nn.functional.interpolate(x[None], size=big, mode="bilinear",
                                            align_corners=False)[0] for x in imgs]
    top = int(rng.integers(0, big[0] - h + 1))
    left = int(rng.integers(0, big[1] - w + 1))
    return [x[:, top:top + h, left:left + w] for x in imgs]


def next_batch(ds: UnpairedMultiModalDataset, state: EpochState, size,
               random_crop: bool = False) -> SampleBundle:
    """Serve the next source bundle of the epoch together with an unrelated target."""
    if state.pos >= len(state.order):
        raise EpochExhausted(state.epoch)
    sid = state.order[state.pos]
    state.pos += 1
    sources = ds.load_sources(sid, size)
    tpath = ds.targets[_draw_target(ds, state)]
    target = ds.load(tpath, ds.domains.target.channels, size)
    if random_crop:
        sources = _random_crop(sources, size, state.source_rng)
        target = _random_crop([target], size, state.target_rng)[0]
    return SampleBundle(sources, target, sid, tpath.stem)
