"""70x70 PatchGAN discriminators, one for the target and one per source modality."""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import conv_output_size
from .core import DomainSpec

# (stride, instance norm) for the four feature layers; the score layer is stride 1.
_LAYERS = ((2, False), (2, True), (2, True), (1, True))


class PatchDiscriminator(nn.Module):
    """C64-C128-C256-C512 stack of 4x4 convs ending in a one-channel score map.

    ``forward`` returns raw scores; :func:`discriminate` applies the sigmoid
    for the log objective.
    """

    def __init__(self, in_channels, width=64):
        super().__init__()
        self.in_channels = in_channels
        layers = []
        c_in = in_channels
        for i, (stride, norm) in enumerate(_LAYERS):
            c_out = width * 2 ** i
            layers.append(nn.Conv2d(c_in, c_out, 4, stride=stride, padding=1, bias=not norm))
            if norm:
                layers.append(nn.InstanceNorm2d(c_out))
            layers.append(nn.LeakyReLU(0.2))
            c_in = c_out
        layers.append(nn.Conv2d(c_in, 1, 4, stride=1, padding=1))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


def patch_map_size(size: int) -> int:
    """Closed-form side length of the score map for a square input of side ``size``."""
    for stride, _ in _LAYERS:
        size = conv_output_size(size, 4, stride, 1)
    return conv_output_size(size, 4, 1, 1)


def discriminate(d: PatchDiscriminator, x: torch.Tensor, mode: str = "log") -> torch.Tensor:
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    if x.shape[1] != d.in_channels:
        raise ValueError(f"channel mismatch: discriminator expects {d.in_channels}, got {x.shape[1]}")
    scores = d(x)
    if mode == "log":
        scores = torch.sigmoid(scores)
    elif mode != "least_squares":
        raise ValueError(f"unknown gan mode {mode!r}")
    return scores[0] if squeeze else scores


def build_discriminator_bank(domains: DomainSpec, width: int = 64) -> nn.ModuleList:
    """Target discriminator first, then one per source modality in source order."""
    return nn.ModuleList(
        [PatchDiscriminator(domains.target.channels, width)]
        + [PatchDiscriminator(m.channels, width) for m in domains.sources]
    )
