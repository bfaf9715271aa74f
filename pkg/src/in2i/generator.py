"""Forward (n sources -> target) and reverse (target -> n sources) generators.

Both generators share the same latent geometry so that latent codes produced
from either side can be compared elementwise.
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn

from .blocks import ConvBlock, DeconvBlock, ResBlock
from .core import ModelConfig


def _extractor(in_channels, base, out_channels, n_res):
    layers = [
        ConvBlock(in_channels, base, 7, pad=3, pad_mode="reflect"),
        ConvBlock(base, 2 * base, 3, stride=2, pad=1),
        ConvBlock(2 * base, out_channels, 3, stride=2, pad=1),
    ]
    layers += [ResBlock(out_channels) for _ in range(n_res)]
    return nn.Sequential(*layers)


def _decoder(latent, base, out_channels, n_res):
    layers = [ResBlock(latent) for _ in range(n_res)]
    layers += [
        DeconvBlock(latent, 2 * base),
        DeconvBlock(2 * base, base),
        ConvBlock(base, out_channels, 7, pad=3, pad_mode="reflect", norm=False, relu=False),
        nn.Tanh(),
    ]
    return nn.Sequential(*layers)


class FeatureFusion(nn.Module):
    """Channel concatenation followed by a single 3x3 convolution."""

    def __init__(self, n_branches, branch_channels, out_channels):
        super().__init__()
        self.n_branches = n_branches
        self.branch_channels = branch_channels
        self.in_channels = n_branches * branch_channels
        self.out_channels = out_channels
        self.conv = ConvBlock(self.in_channels, out_channels, 3, pad=1, pad_mode="reflect")

    def forward(self, branch_features: Sequence[torch.Tensor]) -> torch.Tensor:
        return fuse_features(branch_features, self.conv)


def fuse_features(branch_features: Sequence[torch.Tensor], conv: nn.Module) -> torch.Tensor:
    if len(branch_features) == 0:
        raise ValueError("fusion needs at least one branch")
    spatial = {tuple(f.shape[-2:]) for f in branch_features}
    if len(spatial) != 1:
        raise ValueError(f"branch features disagree on spatial size: {sorted(spatial)}")
    chans = {f.shape[-3] for f in branch_features}
    if len(chans) != 1:
        raise ValueError(f"branch features disagree on channel count: {sorted(chans)}")
    return conv(torch.cat(list(branch_features), dim=-3))


class ForwardGenerator(nn.Module):
    """n per-modality extractors -> fusion -> encoder -> latent -> one decoder."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        b = cfg.base_width
        z = cfg.latent_width
        self.source_channels = [m.channels for m in cfg.domains.sources]
        self.target_channels = cfg.domains.target.channels
        self.extractors = nn.ModuleList(
            _extractor(c, b, 4 * b, cfg.n_res_extract) for c in self.source_channels
        )
        self.fusion = FeatureFusion(len(self.source_channels), 4 * b, z)
        self.encoder = nn.Sequential(*[ResBlock(z) for _ in range(cfg.n_res_encoder)])
        self.decoder = _decoder(z, b, self.target_channels, cfg.n_res_decoder)

    def encode(self, sources: Sequence[torch.Tensor]) -> torch.Tensor:
        feats = [ext(s) for ext, s in zip(self.extractors, sources)]
        return self.encoder(self.fusion(feats))

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        return self.decoder(latent)

    def forward(self, sources: Sequence[torch.Tensor]):
        latent = self.encode(sources)
        return self.decode(latent), latent


class ReverseGenerator(nn.Module):
    """One extractor -> encoder -> latent -> n independent decoders."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        b = cfg.base_width
        z = cfg.latent_width
        self.source_channels = [m.channels for m in cfg.domains.sources]
        self.target_channels = cfg.domains.target.channels
        self.extractor = _extractor(self.target_channels, b, z, 0)
        self.encoder = nn.Sequential(*[ResBlock(z) for _ in range(cfg.n_res_encoder)])
        self.decoders = nn.ModuleList(
            _decoder(z, b, c, cfg.n_res_reverse_decoder) for c in self.source_channels
        )

    def encode(self, target: torch.Tensor) -> torch.Tensor:
        return self.encoder(self.extractor(target))

    def decode(self, latent: torch.Tensor) -> list[torch.Tensor]:
        return [dec(latent) for dec in self.decoders]

    def forward(self, target: torch.Tensor):
        latent = self.encode(target)
        return self.decode(latent), latent


def build_generators(cfg: ModelConfig) -> tuple[ForwardGenerator, ReverseGenerator]:
    fwd, rev = ForwardGenerator(cfg), ReverseGenerator(cfg)
    with torch.no_grad():
        probe_s = [torch.zeros(1, c, 8, 8) for c in fwd.source_channels]
        z_f = fwd.encode(probe_s)
        z_r = rev.encode(torch.zeros(1, rev.target_channels, 8, 8))
    if z_f.shape != z_r.shape:
        raise ValueError(f"latent shapes disagree: {tuple(z_f.shape)} vs {tuple(z_r.shape)}")
    return fwd, rev


def _batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise ValueError(f"expected C x H x W or B x C x H x W, got shape {tuple(x.shape)}")


def forward_translate(gen: ForwardGenerator, sources: Sequence[torch.Tensor]):
    """Translate n source images into one target image; also return the latent code."""
    if len(sources) != len(gen.source_channels):
        raise ValueError(f"expected {len(gen.source_channels)} source images, got {len(sources)}")
    batch = [_batched(s) for s in sources]
    squeeze = batch[0][1]
    xs = [b[0] for b in batch]
    for i, (x, c) in enumerate(zip(xs, gen.source_channels)):
        if x.shape[1] != c:
            raise ValueError(f"source {i} has {x.shape[1]} channels, expected {c}")
    if len({tuple(x.shape[-2:]) for x in xs}) != 1:
        raise ValueError("source images differ in spatial size")
    if len({x.shape[0] for x in xs}) != 1:
        raise ValueError("source images differ in batch size")
    h, w = xs[0].shape[-2:]
    if h % 4 or w % 4:
        raise ValueError(f"image size {h}x{w} not divisible by 4")
    out, latent = gen(xs)
    if squeeze:
        return out[0], latent[0]
    return out, latent


def reverse_translate(gen: ReverseGenerator, target: torch.Tensor):
    """Translate one target image into n source images; also return the latent code."""
    x, squeeze = _batched(target)
    if x.shape[1] != gen.target_channels:
        raise ValueError(f"target has {x.shape[1]} channels, expected {gen.target_channels}")
    h, w = x.shape[-2:]
    if h % 4 or w % 4:
        raise ValueError(f"image size {h}x{w} not divisible by 4")
    outs, latent = gen(x)
    if squeeze:
        return [o[0] for o in outs], latent[0]
    return outs, latent
