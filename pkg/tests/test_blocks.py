import pytest
import torch
from hypothesis import given, settings, strategies as st

from helpers import check_tensor_grads
from in2i.blocks import ConvBlock, DeconvBlock, ResBlock, apply_block, conv_output_size


def test_stem_conv_shape():
    blk = ConvBlock(1, 64, 7, pad=3, pad_mode="reflect")
    assert apply_block(blk, torch.randn(1, 256, 256)).shape == (64, 256, 256)


def test_downsample_shape():
    blk = ConvBlock(64, 128, 3, stride=2, pad=1)
    assert apply_block(blk, torch.randn(2, 64, 32, 32)).shape == (2, 128, 16, 16)
    assert conv_output_size(256, 3, 2, 1) == 128


def test_deconv_doubles():
    blk = DeconvBlock(128, 64)
    assert apply_block(blk, torch.randn(128, 64, 64)).shape == (64, 128, 128)


def test_resblock_zero_weights_is_identity():
    blk = ResBlock(8)
    with torch.no_grad():
        for p in blk.parameters():
            p.zero_()
    x = torch.randn(3, 8, 6, 6)
    assert torch.equal(apply_block(blk, x), x)


@settings(max_examples=15, deadline=None)
@given(c=st.integers(1, 16), h=st.integers(2, 9), w=st.integers(2, 9))
def test_resblock_preserves_shape(c, h, w):
    x = torch.randn(1, c, h, w)
    assert apply_block(ResBlock(c), x).shape == x.shape


def test_channel_mismatch():
    with pytest.raises(ValueError, match="channel mismatch"):
        apply_block(ConvBlock(3, 8, 3, pad=1), torch.randn(1, 4, 8, 8))


def test_non_finite_input():
    x = torch.randn(1, 3, 8, 8)
    x[0, 0, 0, 0] = float("nan")
    with pytest.raises(ValueError, match="non-finite"):
        apply_block(ConvBlock(3, 8, 3, pad=1), x)


def test_instance_norm_statistics(float64):
    blk = ConvBlock(3, 6, 3, pad=1, relu=False)
    y = apply_block(blk, torch.randn(2, 3, 16, 16) * 5)
    mean = y.mean(dim=(2, 3))
    var = y.var(dim=(2, 3), unbiased=False)
    assert mean.abs().max() < 1e-5
    assert (var - 1).abs().max() < 1e-5


BLOCKS = {
    "conv7": lambda: ConvBlock(3, 4, 7, pad=3, pad_mode="reflect"),
    "conv_s2": lambda: ConvBlock(4, 8, 3, stride=2, pad=1),
    "conv_out": lambda: ConvBlock(4, 3, 3, pad=1, norm=False, relu=False),
    "res": lambda: ResBlock(4),
    "deconv": lambda: DeconvBlock(8, 4),
}


@pytest.mark.parametrize("name", BLOCKS)
def test_block_gradients(name, float64):
    torch.manual_seed(0)
    blk = BLOCKS[name]().double()
    x = torch.randn(1, blk.in_channels, 4, 4, requires_grad=True)
    proj = torch.randn_like(blk(x))

    def fn():
        return (blk(x) * proj).sum()

    tensors = [x] + [p for p in blk.parameters()]
    assert check_tensor_grads(fn, tensors, h=1e-4) < 1e-4
