"""Layer blocks the generators are assembled from."""

from __future__ import annotations

import torch
import torch.nn as nn


class ConvBlock(nn.Module):
    """Convolution, optional instance norm, optional ReLU.

    ``pad_mode`` is ``"reflect"`` for the 7x7 stems and ``"zeros"`` for the
    strided downsampling convolutions.
    """

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0,
                 pad_mode="zeros", norm=True, relu=True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.conv = nn.Conv2d(in_channels, out_channels, kernel, stride=stride, padding=pad,
                              padding_mode=pad_mode, bias=not norm)
        self.norm = nn.InstanceNorm2d(out_channels, affine=False) if norm else nn.Identity()
        self.act = nn.ReLU() if relu else nn.Identity()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class ResBlock(nn.Module):
    """Two reflection-padded 3x3 conv + instance norm layers around an identity skip."""

    def __init__(self, channels):
        super().__init__()
        self.in_channels = self.out_channels = channels
        self.body = nn.Sequential(
            ConvBlock(channels, channels, 3, pad=1, pad_mode="reflect"),
            ConvBlock(channels, channels, 3, pad=1, pad_mode="reflect", relu=False),
        )

    def forward(self, x):
        return x + self.body(x)


class DeconvBlock(nn.Module):
    """Transposed convolution + instance norm + ReLU.

    With kernel 3, stride 2, pad 1 the ``output_padding`` of 1 makes the
    spatial size exactly double.
    """

    def __init__(self, in_channels, out_channels, kernel=3, stride=2, pad=1, norm=True, relu=True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.conv = nn.ConvTranspose2d(in_channels, out_channels, kernel, stride=stride,
                                       padding=pad, output_padding=stride - 1, bias=not norm)
        self.norm = nn.InstanceNorm2d(out_channels, affine=False) if norm else nn.Identity()
        self.act = nn.ReLU() if relu else nn.Identity()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def apply_block(block: nn.Module, x: torch.Tensor) -> torch.Tensor:
    """Run ``block`` on ``x`` after checking the input contract.

    Accepts a single ``C x H x W`` map or a ``B x C x H x W`` batch and returns
    the same rank it was given.
    """
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    if x.dim() != 4:
        raise ValueError(f"expected a 3-d or 4-d tensor, got shape {tuple(x.shape)}")
    if x.shape[1] != block.in_channels:
        raise ValueError(f"channel mismatch: block expects {block.in_channels}, got {x.shape[1]}")
    if not torch.isfinite(x).all():
        raise ValueError("non-finite values in block input")
    y = block(x)
    return y.squeeze(0) if squeeze else y


@torch.no_grad()
def init_weights(module: nn.Module, std: float = 0.02, generator: torch.Generator | None = None):
    """N(0, std) kernels and zero biases for every conv / deconv layer."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            m.weight.normal_(0.0, std, generator=generator)
            if m.bias is not None:
                m.bias.zero_()
    return module
