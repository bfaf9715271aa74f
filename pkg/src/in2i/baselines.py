"""Pixel-level comparison modes: channel concatenation and db4 wavelet fusion.

Both collapse the n sources into one image so that an ordinary one-source
model can be trained on it. Averaging the coefficients of a linear,
perfectly reconstructing transform is the same as averaging pixels; the
wavelet route exists to follow the published baseline procedure, not to
add anything numerically.
"""

from __future__ import annotations

import dataclasses
from typing import Mapping, Sequence

import numpy as np
import pywt
import torch

from .core import DomainSpec, ModalitySpec, ModelConfig

WAVELET = "db4"
DEFAULT_LEVEL = 2
DEFAULT_BOUNDARY = "symmetric"


def concat_adapter(sources: Mapping[str, torch.Tensor] | Sequence[torch.Tensor],
                   domains: DomainSpec | None = None) -> torch.Tensor:
    """Stack the sources along the channel axis in source order.

    When ``sources`` is a mapping its key order must equal the source order
    of ``domains``.
    """
    if isinstance(sources, Mapping):
        names = list(sources)
        if domains is not None and names != domains.source_names:
            raise ValueError(f"sources given in order {names}, expected {domains.source_names}")
        tensors = list(sources.values())
    else:
        tensors = list(sources)
        if domains is not None and len(tensors) != domains.n:
            raise ValueError(f"expected {domains.n} sources, got {len(tensors)}")
    if not tensors:
        raise ValueError("no sources to concatenate")
    if len({tuple(t.shape[-2:]) for t in tensors}) != 1:
        raise ValueError("sources differ in spatial size")
    if len(tensors) == 1:
        return tensors[0]
    return torch.cat(tensors, dim=-3)


def dwt2(img: np.ndarray, level: int = DEFAULT_LEVEL, mode: str = DEFAULT_BOUNDARY):
    return pywt.wavedec2(img, WAVELET, mode=mode, level=level)


def idwt2(coeffs, shape, mode: str = DEFAULT_BOUNDARY) -> np.ndarray:
    out = pywt.waverec2(coeffs, WAVELET, mode=mode)
    return out[: shape[0], : shape[1]]


def _average_coeffs(all_coeffs):
    n = len(all_coeffs)
    fused = [sum(c[0] for c in all_coeffs) / n]
    for lvl in range(1, len(all_coeffs[0])):
        fused.append(tuple(sum(c[lvl][k] for c in all_coeffs) / n for k in range(3)))
    return fused


def wavelet_fuse(sources: Sequence[torch.Tensor | np.ndarray], level: int = DEFAULT_LEVEL,
                 mode: str = DEFAULT_BOUNDARY, value_range=(-1.0, 1.0)):
    """Fuse single-channel images by averaging their db4 coefficients.

    Returns the same type as the inputs (tensor in, ``1 x H x W`` tensor out).
    """
    if len(sources) == 0:
        raise ValueError("no sources to fuse")
    is_tensor = isinstance(sources[0], torch.Tensor)
    arrays = []
    for s in sources:
        a = s.detach().cpu().numpy() if isinstance(s, torch.Tensor) else np.asarray(s)
        a = a.astype(np.float64)
        if a.ndim == 3:
            if a.shape[0] != 1:
                raise ValueError("wavelet fusion needs single-channel inputs; convert first")
            a = a[0]
        if a.ndim != 2:
            raise ValueError(f"expected a single-channel image, got shape {a.shape}")
        arrays.append(a)
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("sources differ in spatial size")
    filt_len = pywt.Wavelet(WAVELET).dec_len
    if min(shape) < filt_len:
        raise ValueError(f"image {shape} smaller than the {WAVELET} filter length {filt_len}")

    fused = idwt2(_average_coeffs([dwt2(a, level, mode) for a in arrays]), shape, mode)
    fused = np.clip(fused, *value_range)
    if is_tensor:
        return torch.from_numpy(fused[None]).to(sources[0].dtype)
    return fused


def effective_model(model: ModelConfig) -> ModelConfig:
    """Network-facing config: pixel-level modes become a single-source model."""
    if model.fusion_mode == "feature":
        return model
    names = model.domains.source_names
    if model.fusion_mode == "concat":
        src = ModalitySpec("concat_" + "_".join(names),
                           sum(m.channels for m in model.domains.sources))
    else:
        src = ModalitySpec("db4_" + "_".join(names), 1)
    return dataclasses.replace(model, domains=DomainSpec((src,), model.domains.target))


def adapt_sources(model: ModelConfig, sources: Sequence[torch.Tensor]) -> list[torch.Tensor]:
    """Apply the configured pixel-level fusion, if any, to one bundle of sources."""
    if model.fusion_mode == "feature":
        return list(sources)
    if model.fusion_mode == "concat":
        return [concat_adapter(list(sources), model.domains)]
    return [wavelet_fuse(list(sources))]
