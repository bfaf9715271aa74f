import pytest
import torch

from conftest import make_model
from helpers import check_tensor_grads
from in2i.blocks import init_weights
from in2i.core import DomainSpec, ModalitySpec, ModelConfig, validate_config
from in2i.generator import (FeatureFusion, build_generators, forward_translate, fuse_features,
                            reverse_translate)


def _count_res(seq):
    from in2i.blocks import ResBlock
    return sum(isinstance(m, ResBlock) for m in seq.modules())


def test_default_layer_counts():
    dom = DomainSpec((ModalitySpec("nir", 1), ModalitySpec("grey", 1)), ModalitySpec("rgb", 3))
    fwd, rev = build_generators(validate_config(ModelConfig(dom, (64, 64)))[0])
    assert [_count_res(e) for e in fwd.extractors] == [4, 4]
    assert _count_res(fwd.encoder) == 4 and _count_res(fwd.decoder) == 3
    assert _count_res(rev.extractor) == 0 and _count_res(rev.encoder) == 4
    assert [_count_res(d) for d in rev.decoders] == [5, 5]
    # the reverse input -> output path carries the nine-block backbone
    assert _count_res(rev.encoder) + _count_res(rev.decoders[0]) == 9


def test_colorization_shapes_256():
    dom = DomainSpec((ModalitySpec("nir", 1), ModalitySpec("grey", 1)), ModalitySpec("rgb", 3))
    m = validate_config(ModelConfig(dom, (256, 256), n_res_extract=1, n_res_encoder=1,
                                    n_res_decoder=1, n_res_reverse_decoder=1))[0]
    fwd, rev = build_generators(m)
    with torch.no_grad():
        out, z = forward_translate(fwd, [torch.randn(1, 256, 256), torch.randn(1, 256, 256)])
        assert out.shape == (3, 256, 256) and z.shape == (256, 64, 64)
        outs, z2 = reverse_translate(rev, torch.randn(3, 256, 256))
    assert [o.shape for o in outs] == [(1, 256, 256), (1, 256, 256)]
    assert z2.shape == z.shape


@pytest.mark.parametrize("n", [1, 2, 3])
def test_shapes_and_latent_agreement(n):
    m = make_model(n, 16)
    fwd, rev = build_generators(m)
    srcs = [torch.randn(2, c, 16, 16) for c in fwd.source_channels]
    with torch.no_grad():
        out, z = forward_translate(fwd, srcs)
        back, z2 = reverse_translate(rev, out)
    assert out.shape == (2, 3, 16, 16)
    assert z.shape == z2.shape == (2, *m.latent_shape)
    assert [b.shape for b in back] == [s.shape for s in srcs]
    assert out.abs().max() <= 1 and all(b.abs().max() <= 1 for b in back)


def test_three_modalities_single_output():
    dom = DomainSpec((ModalitySpec("depth", 1), ModalitySpec("nir", 1), ModalitySpec("evi", 1)),
                     ModalitySpec("rgb", 3))
    fwd, _ = build_generators(validate_config(ModelConfig(dom, (16, 16), base_width=4))[0])
    with torch.no_grad():
        out, _ = forward_translate(fwd, [torch.randn(1, 16, 16)] * 3)
    assert out.shape == (3, 16, 16)


def test_zero_final_conv_gives_zero_output():
    fwd, _ = build_generators(make_model(2, 16))
    final = fwd.decoder[-2].conv
    with torch.no_grad():
        final.weight.zero_()
        final.bias.zero_()
        out, _ = forward_translate(fwd, [torch.randn(1, 16, 16), torch.randn(1, 16, 16)])
    assert torch.equal(out, torch.zeros_like(out))


def test_input_contract_errors():
    fwd, rev = build_generators(make_model(2, 16))
    with pytest.raises(ValueError, match="expected 2 source"):
        forward_translate(fwd, [torch.randn(1, 16, 16)])
    with pytest.raises(ValueError, match="channels"):
        forward_translate(fwd, [torch.randn(3, 16, 16), torch.randn(1, 16, 16)])
    with pytest.raises(ValueError, match="spatial"):
        forward_translate(fwd, [torch.randn(1, 16, 16), torch.randn(1, 8, 8)])
    with pytest.raises(ValueError, match="channels"):
        reverse_translate(rev, torch.randn(1, 16, 16))
    with pytest.raises(ValueError, match="divisible"):
        reverse_translate(rev, torch.randn(3, 18, 18))


def test_fusion_shapes():
    fus = FeatureFusion(2, 256, 256)
    y = fus([torch.randn(1, 256, 16, 16), torch.randn(1, 256, 16, 16)])
    assert y.shape == (1, 256, 16, 16)
    assert fus.in_channels == 512
    one = FeatureFusion(1, 8, 8)
    assert one([torch.randn(1, 8, 4, 4)]).shape == (1, 8, 4, 4)
    with pytest.raises(ValueError, match="spatial"):
        fus([torch.randn(1, 256, 16, 16), torch.randn(1, 256, 8, 8)])


def test_fusion_branch_permutation(float64):
    torch.manual_seed(0)
    fus = FeatureFusion(2, 3, 5)
    a, b = torch.randn(1, 3, 6, 6), torch.randn(1, 3, 6, 6)
    swapped = FeatureFusion(2, 3, 5)
    with torch.no_grad():
        w = fus.conv.conv.weight
        swapped.conv.conv.weight.copy_(torch.cat([w[:, 3:], w[:, :3]], dim=1))
    torch.testing.assert_close(fus([a, b]), swapped([b, a]), rtol=0, atol=1e-12)
    torch.testing.assert_close(fus([a, b]), fuse_features([a, b], fus.conv))


def test_reverse_decoders_isolated():
    torch.manual_seed(0)
    _, rev = build_generators(make_model(2, 16))
    t = torch.randn(1, 3, 16, 16)
    with torch.no_grad():
        before, _ = rev(t)
        for p in rev.decoders[0].parameters():
            p.add_(torch.randn_like(p) * 0.1)
        after, _ = rev(t)
    assert not torch.equal(before[0], after[0])
    assert torch.equal(before[1], after[1])


def test_reverse_decoder_jacobian_is_block_diagonal():
    _, rev = build_generators(make_model(2, 8))
    out, _ = rev(torch.randn(1, 3, 8, 8))
    grads = torch.autograd.grad(out[0].sum(), list(rev.decoders[1].parameters()), allow_unused=True)
    assert all(g is None or torch.count_nonzero(g) == 0 for g in grads)


def test_single_source_reverse_is_one_element_list():
    _, rev = build_generators(make_model(1, 8))
    outs, _ = reverse_translate(rev, torch.randn(3, 8, 8))
    assert isinstance(outs, list) and len(outs) == 1


def test_end_to_end_gradients(float64):
    torch.manual_seed(0)
    m = make_model(2, 8, base_width=4, n_res_extract=1, n_res_encoder=1, n_res_decoder=1,
                   n_res_reverse_decoder=1)
    fwd, rev = build_generators(m)
    fwd.double()
    init_weights(fwd, 0.3, torch.Generator().manual_seed(1))
    srcs = [torch.randn(1, 1, 8, 8, requires_grad=True) for _ in range(2)]
    proj = torch.randn(1, 3, 8, 8)
    zproj = torch.randn(1, *m.latent_shape)

    def fn():
        out, z = fwd(srcs)
        return (out * proj).sum() + (z * zproj).sum() * 0.1

    tensors = srcs + list(fwd.parameters())
    err = check_tensor_grads(fn, tensors, h=1e-4, max_entries=4, gen=torch.Generator().manual_seed(2))
    assert err < 1e-3
    assert check_tensor_grads.kinks <= 2
