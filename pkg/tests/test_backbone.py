import numpy as np
import pytest

from eventface import autodiff as ad
from eventface.autodiff import Tensor
from eventface.backbone import (
    Backbone,
    BackboneConfig,
    LoraConvLayer,
    adapter_parameter_count,
    avg_pool2,
    backbone_forward,
    lora_forward,
    lora_merge,
)

SMALL = BackboneConfig(stage_channels=(8, 16), blocks_per_stage=1, input_hw=8, embed_dim=8)


def _layer(rng, c_in=4, c_out=5, k=3, rank=2):
    layer = LoraConvLayer(Tensor(rng.normal(size=(c_out, c_in, k, k))), padding=(k - 1) // 2)
    layer.attach(rank, rng)
    layer.w_b.data[:] = rng.normal(size=layer.w_b.shape)
    return layer


@pytest.mark.parametrize("k,rank", [(1, 1), (3, 2), (3, 3), (5, 1)])
def test_merge_equals_adapted_forward(rng, k, rank):
    layer = _layer(rng, k=k, rank=rank)
    x = Tensor(rng.normal(size=(2, 4, 6, 6)))
    adapted = lora_forward(x, layer, 1, layer.padding).data
    merged = ad.conv2d(x, Tensor(lora_merge(layer)), padding=layer.padding).data
    np.testing.assert_allclose(merged, adapted, atol=1e-10)


def test_zero_b_is_identity_at_init(rng):
    layer = LoraConvLayer(Tensor(rng.normal(size=(5, 4, 3, 3))))
    layer.attach(2, rng)
    assert np.array_equal(lora_merge(layer), layer.w0.data)


def test_merge_drops_adapters(rng):
    layer = _layer(rng)
    want = lora_merge(layer)
    layer.merge()
    assert not layer.has_adapters and np.array_equal(layer.w0.data, want)


def test_rank_bounds(rng):
    layer = LoraConvLayer(Tensor(rng.normal(size=(5, 4, 3, 3))))
    for bad in (0, 4, 7):
        with pytest.raises(ValueError):
            layer.attach(bad, rng)


def test_parameter_count(rng):
    layer = _layer(rng, c_in=4, c_out=5, k=3, rank=2)
    assert adapter_parameter_count(layer) == 2 * 4 * 9 + 5 * 2


def test_inconsistent_adapter_shapes(rng):
    layer = _layer(rng)
    layer.w_b = Tensor(np.zeros((5, 3, 1, 1)))
    with pytest.raises(ad.ShapeError):
        lora_forward(Tensor(rng.normal(size=(1, 4, 4, 4))), layer, 1, 1)


def test_rank_capped_per_layer(rng):
    bb = Backbone(SMALL, rng)
    used = bb.attach_lora(6, rng)
    assert used == {"stage0.conv0": 2, "stage1.conv0": 6}


def test_frozen_weights_bit_identical_after_step(rng):
    bb = Backbone(SMALL, rng)
    for t in bb.base_parameters():
        t.requires_grad = False
    bb.attach_lora(2, rng)
    before = [t.data.copy() for t in bb.base_parameters()]
    out = backbone_forward(rng.normal(size=(2, 2, 8, 8, 3)), bb)
    ad.tsum(out.embedding * out.embedding).backward()
    assert all(t.grad is None for t in bb.base_parameters())
    assert any(np.abs(p.grad).sum() > 0 for p in bb.adapter_parameters())
    for p in bb.adapter_parameters():
        p.data -= 0.1 * p.grad
    assert all(np.array_equal(b, t.data) for b, t in zip(before, bb.base_parameters()))


def test_forward_shapes(rng):
    bb = Backbone(SMALL, rng)
    out = backbone_forward(rng.normal(size=(3, 2, 8, 8, 3)), bb)
    assert [f.shape for f in out.stage_features] == [(6, 8, 4, 4), (6, 16, 2, 2)]
    assert out.embedding.shape == (3, 8)
    with pytest.raises(ad.ShapeError):
        backbone_forward(rng.normal(size=(1, 2, 16, 16, 3)), bb)


def test_plain_and_lora_modes_agree_at_init(rng):
    bb = Backbone(SMALL, rng)
    x = rng.normal(size=(1, 2, 8, 8, 3))
    plain = backbone_forward(x, bb, "plain").embedding.data
    bb.attach_lora(2, rng)
    np.testing.assert_array_equal(backbone_forward(x, bb, "lora").embedding.data, plain)


def test_batch_norm_modes(rng):
    bb = Backbone(SMALL, rng)
    x = rng.normal(size=(6, 1, 8, 8, 3))
    bb.training = True
    z = backbone_forward(x, bb).embedding.data
    np.testing.assert_allclose(z.mean(0), 0.0, atol=1e-12)
    assert not np.array_equal(bb.bn_mean, np.zeros(8))
    bb.training = False
    a = backbone_forward(x[:1], bb).embedding.data
    b = backbone_forward(x[:1], bb).embedding.data
    assert np.array_equal(a, b)


def test_avg_pool(rng):
    x = rng.normal(size=(1, 1, 4, 4))
    got = avg_pool2(Tensor(x)).data
    assert got[0, 0, 1, 0] == pytest.approx(x[0, 0, 2:4, 0:2].mean())
    with pytest.raises(ad.ShapeError):
        avg_pool2(Tensor(np.zeros((1, 1, 3, 4))))


def test_config_validation():
    with pytest.raises(ValueError):
        BackboneConfig(stage_channels=(8, 12))
    with pytest.raises(ValueError):
        BackboneConfig(stage_channels=(8, 16, 32), input_hw=20)
