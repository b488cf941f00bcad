import dataclasses

import numpy as np
import pytest

from csattn.block import CSAttnConfig
from csattn.config import LossWeights, desk_net
from csattn.errors import ConfigError, ShapeError
from csattn.losses import multiscale_loss
from csattn.net import (
    NetConfig,
    build,
    count_params,
    downsample_image,
    forward_multiscale,
    infer_image,
    pad_to_multiple,
)
from csattn.nn_ops import iter_named_tensors
from csattn.tensor import Tensor, grad_check, precision


def tiny_config(**changes) -> NetConfig:
    cfg = NetConfig(base_channels=4, blocks_per_level=(1, 1, 1), csattn=CSAttnConfig(channels=4))
    return dataclasses.replace(cfg, **changes)


def test_level_channels():
    assert NetConfig(base_channels=32).level_channels() == (32, 64, 128)
    assert NetConfig(base_channels=8).block_config(3).channels == 32


def test_config_validation():
    with pytest.raises(ConfigError):
        tiny_config(blocks_per_level=(1, 0, 1)).validate()
    with pytest.raises(ConfigError):
        tiny_config(base_channels=0).validate()


def test_build_is_deterministic():
    a = dict(iter_named_tensors(build(tiny_config(), seed=5)))
    b = dict(iter_named_tensors(build(tiny_config(), seed=5)))
    c = dict(iter_named_tensors(build(tiny_config(), seed=6)))
    assert a.keys() == b.keys()
    assert all(a[k].data.tobytes() == b[k].data.tobytes() for k in a)
    assert any(a[k].data.tobytes() != c[k].data.tobytes() for k in a)


def test_desk_network_forward_shapes(rng):
    params = build(desk_net(), seed=0)
    out1, out2, out4 = forward_multiscale(params, Tensor(rng.random((1, 3, 32, 32))))
    assert out1.shape == (1, 3, 32, 32)
    assert out2.shape == (1, 3, 16, 16)
    assert out4.shape == (1, 3, 8, 8)


def test_forward_shapes_64(rng):
    params = build(tiny_config(), seed=0)
    outs = forward_multiscale(params, Tensor(rng.random((2, 3, 64, 64))))
    assert [o.shape for o in outs] == [(2, 3, 64, 64), (2, 3, 32, 32), (2, 3, 16, 16)]


def test_forward_rejects_indivisible_input():
    params = build(tiny_config(), seed=0)
    with pytest.raises(ShapeError):
        forward_multiscale(params, Tensor(np.zeros((1, 3, 24, 32))))
    with pytest.raises(ShapeError):
        forward_multiscale(params, Tensor(np.zeros((1, 4, 32, 32))))


def test_zero_heads_return_downsampled_input(rng):
    params = build(tiny_config(), seed=0)
    for head in (params.head1, params.head2, params.head3):
        assert not head.weight.data.any() and not head.bias.data.any()
    img = Tensor(rng.random((1, 3, 32, 32)))
    out1, out2, out4 = forward_multiscale(params, img)
    np.testing.assert_array_equal(out1.data, img.data)
    np.testing.assert_array_equal(out2.data, downsample_image(img, 2).data)
    np.testing.assert_array_equal(out4.data, downsample_image(img, 4).data)


def test_downsample_image(rng):
    const = Tensor(np.full((1, 3, 8, 8), 0.25))
    np.testing.assert_allclose(downsample_image(const, 4).data, 0.25)
    block = Tensor(np.array([[0.0, 0.0], [1.0, 1.0]]).reshape(1, 1, 2, 2))
    assert downsample_image(block, 2).data.item() == 0.5
    with precision(np.float64):
        x = Tensor(rng.random((2, 3, 16, 8)))
        assert abs(downsample_image(x, 4).data.mean() - x.data.mean()) < 1e-6
    with pytest.raises(ShapeError):
        downsample_image(Tensor(np.ones((1, 3, 6, 6))), 4)


def test_param_count_grows_with_blocks():
    base = count_params(build(tiny_config(), seed=0))
    for level in range(3):
        blocks = [1, 1, 1]
        blocks[level] = 2
        assert count_params(build(tiny_config(blocks_per_level=tuple(blocks)), seed=0)) > base


def test_pad_to_multiple_shapes():
    padded, (h, w) = pad_to_multiple(np.zeros((3, 37, 41)))
    assert padded.shape == (3, 48, 48) and (h, w) == (37, 41)
    thin, _ = pad_to_multiple(np.zeros((3, 1, 5)))
    assert thin.shape == (3, 16, 16)


def test_infer_image_preserves_size(rng):
    params = build(tiny_config(), seed=0)
    out = infer_image(params, rng.random((3, 37, 41)).astype(np.float32))
    assert out.shape == (3, 37, 41)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_network_loss_gradient(rng):
    with precision(np.float64):
        params = build(tiny_config(zero_heads=False), seed=1)
        clean = Tensor(rng.random((1, 3, 16, 16)))
        gts = (clean, downsample_image(clean, 2), downsample_image(clean, 4))
    weights = LossWeights(lambda_freq=0.0)
    report = grad_check(
        lambda x: multiscale_loss(forward_multiscale(params, x), gts, weights),
        rng.random((1, 3, 16, 16)),
        max_coords=12,
        name="network loss",
    )
    assert report.passed, str(report)


def test_random_heads_draw_the_same_body(rng):
    zeroed = dict(iter_named_tensors(build(tiny_config(), seed=3)))
    drawn = dict(iter_named_tensors(build(tiny_config(zero_heads=False), seed=3)))
    assert zeroed.keys() == drawn.keys()
    for name, tensor in zeroed.items():
        if name.startswith("head"):
            assert drawn[name].data.any()
        else:
            assert tensor.data.tobytes() == drawn[name].data.tobytes()
    img = Tensor(rng.random((1, 3, 16, 16)))
    out1 = forward_multiscale(build(tiny_config(zero_heads=False), seed=3), img)[0]
    assert not np.array_equal(out1.data, img.data)
