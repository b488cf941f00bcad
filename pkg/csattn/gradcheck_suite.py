"""
csattn/gradcheck_suite.py

Finite-difference verification of every backward rule, grouped by module:

    tensor   elementwise, matmul, softmax, shape ops, reductions
    nn       convolutions, layer norm, L2 norm, activations, pixel shuffles
    block    channel attention, qkv split, scaling path, full block variants
    net      losses and the full network

Each check reduces the op output with fixed random weights so gradients are
O(1) everywhere, then compares against central differences in 64-bit mode.
Scalar losses additionally get a random linear readout of their input: the
L1 spectrum loss has exactly zero gradient at some coordinates of real inputs,
where a relative error would only measure rounding noise.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Callable, Iterator

import numpy as np

from csattn.block import (
    CSAttnConfig,
    channel_attention,
    csattn_forward,
    init_block_params,
    qkv_split,
    spatial_scaling,
    stacked_attention_baseline,
)
from csattn.config import LossWeights
from csattn.losses import frequency_loss, l1_loss, multiscale_loss
from csattn.net import NetConfig, build, downsample_image, forward_multiscale
from csattn.nn_ops import (
    activation,
    conv3x3,
    depthwise_conv3x3,
    init_conv3x3,
    init_depthwise,
    init_layer_norm,
    init_pointwise,
    iter_named_tensors,
    l2_normalize_lastdim,
    layer_norm_channel,
    pixel_shuffle,
    pixel_unshuffle,
    pointwise_conv,
    swap_tensor,
)
from csattn.tensor import (
    GradCheckReport,
    Tensor,
    concat_channel,
    grad_check,
    matmul,
    mul,
    permute,
    precision,
    reduce,
    reshape,
    softmax_lastdim,
    split_channel,
    sum_all,
)

log = logging.getLogger(__name__)

MODULES = ("tensor", "nn", "block", "net")
STEP = 1e-5
TOL = 1e-4


class _Checker:
    """Shared RNG plus helpers for building weighted scalar objectives."""

    def __init__(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def randn(self, *shape) -> np.ndarray:
        return self.rng.standard_normal(shape)

    def scalar(self, fn: Callable[[Tensor], Tensor], shape: tuple) -> Callable[[Tensor], Tensor]:
        """Objective x -> sum(fn(x) * w) with w drawn once for fn's output shape."""
        with precision(np.float64):
            out_shape = fn(Tensor(self.randn(*shape))).shape
        w = Tensor(self.randn(*out_shape), dtype=np.float64)
        return lambda x: sum_all(mul(fn(x), w))

    def with_readout(self, loss: Callable[[Tensor], Tensor], shape: tuple) -> Callable[[Tensor], Tensor]:
        """Scalar loss plus sum(x * w) for a fixed random w, so every coordinate has an O(1) gradient."""
        w = Tensor(self.randn(*shape), dtype=np.float64)
        return lambda x: loss(x) + sum_all(mul(x, w))

    def check(self, name: str, fn: Callable[[Tensor], Tensor], shape: tuple, max_coords=None, at=None) -> GradCheckReport:
        f = self.scalar(fn, shape)
        x = self.randn(*shape) if at is None else at
        return grad_check(f, x, step=STEP, tol=TOL, name=name, max_coords=max_coords)

    def check_param(self, name: str, owner, attr: str, objective: Callable[[], Tensor], max_coords=None) -> GradCheckReport:
        """Gradient with respect to the tensor stored in owner.<attr>."""
        original = getattr(owner, attr)

        def f(w: Tensor) -> Tensor:
            setattr(owner, attr, w)
            try:
                return objective()
            finally:
                setattr(owner, attr, original)

        return grad_check(f, original.data, step=STEP, tol=TOL, name=name, max_coords=max_coords)

    def check_tree(self, label: str, tree, objective: Callable[[], Tensor], max_coords=None) -> Iterator[GradCheckReport]:
        """One report per tensor of a parameter tree, each sampled at up to max_coords coordinates."""
        for name, original in list(iter_named_tensors(tree)):

            def f(w: Tensor, name=name, original=original) -> Tensor:
                swap_tensor(tree, name, w)
                try:
                    return objective()
                finally:
                    swap_tensor(tree, name, original)

            yield grad_check(f, original.data, step=STEP, tol=TOL, name=f"{label} {name}", max_coords=max_coords)


# ---------------------------------------------------------------------- tensor

def _tensor_checks(p: _Checker) -> Iterator[GradCheckReport]:
    for shape in ((2, 3), (4,), (2, 3, 5)):
        other = Tensor(p.randn(*shape), dtype=np.float64)
        tag = "x".join(map(str, shape))
        yield p.check(f"add {tag}", lambda x: x + other, shape)
        yield p.check(f"sub {tag}", lambda x: other - x, shape)
        yield p.check(f"mul {tag}", lambda x: x * other, shape)
        yield p.check(f"scale {tag}", lambda x: x * 2.5, shape)

    for a_shape, b_shape in (((3, 4), (4, 2)), ((2, 3, 4), (2, 4, 5)), ((2, 2, 3, 3), (2, 2, 3, 1))):
        b = Tensor(p.randn(*b_shape), dtype=np.float64)
        a = Tensor(p.randn(*a_shape), dtype=np.float64)
        yield p.check(f"matmul lhs {a_shape}", lambda x: matmul(x, b), a_shape)
        yield p.check(f"matmul rhs {b_shape}", lambda x: matmul(a, x), b_shape)

    for shape in ((5,), (3, 4), (2, 2, 6)):
        yield p.check(f"softmax {shape}", softmax_lastdim, shape)

    yield p.check("reshape", lambda x: reshape(x, (3, 8)), (2, 3, 4))
    yield p.check("permute", lambda x: permute(x, (0, 2, 3, 1)), (1, 2, 3, 4))
    tail = Tensor(p.randn(1, 3, 2, 2), dtype=np.float64)
    yield p.check("concat_channel", lambda x: concat_channel([x, tail]), (1, 2, 2, 2))
    yield p.check("split_channel", lambda x: split_channel(x, [1, 3])[1], (1, 4, 2, 2))
    for axes in ((0,), (1, 2), None):
        yield p.check(f"sum axes={axes}", lambda x: reduce("sum", x, axes), (2, 3, 4))
        yield p.check(f"mean axes={axes}", lambda x: reduce("mean", x, axes), (2, 3, 4))


# ---------------------------------------------------------------------- nn

def _nn_checks(p: _Checker) -> Iterator[GradCheckReport]:
    for shape in ((1, 3, 4, 4), (2, 2, 3, 5), (1, 4, 2, 2)):
        c = shape[1]
        pw = init_pointwise(p.rng, c, 3)
        dw = init_depthwise(p.rng, c)
        full = init_conv3x3(p.rng, c, 2)
        norm = init_layer_norm(c, 1e-5)
        norm.gain = Tensor(p.randn(c), requires_grad=True)
        norm.offset = Tensor(p.randn(c), requires_grad=True)
        tag = "x".join(map(str, shape))
        yield p.check(f"pointwise_conv {tag}", lambda x: pointwise_conv(x, pw), shape)
        yield p.check(f"depthwise_conv3x3 {tag}", lambda x: depthwise_conv3x3(x, dw), shape)
        yield p.check(f"conv3x3 s1 {tag}", lambda x: conv3x3(x, full), shape)
        yield p.check(f"conv3x3 s2 {tag}", lambda x: conv3x3(x, full, stride=2), shape)
        yield p.check(f"layer_norm {tag}", lambda x: layer_norm_channel(x, norm), shape)

        x0 = Tensor(p.randn(*shape))
        obj = p.scalar(lambda x: pointwise_conv(x, pw), shape)
        yield p.check_param(f"pointwise_conv weight {tag}", pw, "weight", lambda: obj(x0))
        obj = p.scalar(lambda x: depthwise_conv3x3(x, dw), shape)
        yield p.check_param(f"depthwise_conv3x3 weight {tag}", dw, "weight", lambda: obj(x0))
        yield p.check_param(f"depthwise_conv3x3 bias {tag}", dw, "bias", lambda: obj(x0))
        obj = p.scalar(lambda x: conv3x3(x, full, stride=2), shape)
        yield p.check_param(f"conv3x3 weight {tag}", full, "weight", lambda: obj(x0))
        obj = p.scalar(lambda x: layer_norm_channel(x, norm), shape)
        yield p.check_param(f"layer_norm gain {tag}", norm, "gain", lambda: obj(x0))

    for shape in ((3, 5), (2, 2, 4), (6,)):
        yield p.check(f"l2_normalize {shape}", l2_normalize_lastdim, shape)
    for kind in ("gelu", "relu", "leakyrelu", "silu"):
        for shape in ((2, 3), (1, 2, 3, 3), (7,)):
            yield p.check(f"{kind} {shape}", lambda x, k=kind: activation(k, x), shape)
    for r, shape in ((2, (1, 2, 4, 4)), (4, (1, 1, 8, 4)), (2, (2, 3, 2, 6))):
        yield p.check(f"pixel_unshuffle r={r}", lambda x: pixel_unshuffle(x, r), shape)
        c = shape[1] * r * r
        yield p.check(f"pixel_shuffle r={r}", lambda x: pixel_shuffle(x, r), (shape[0], c, shape[2] // r, shape[3] // r))


# ---------------------------------------------------------------------- block

def _block_checks(p: _Checker) -> Iterator[GradCheckReport]:
    for heads, d, t_qk, t_v in ((1, 3, 5, 5), (2, 2, 4, 16), (3, 1, 2, 3)):
        q = Tensor(p.randn(1, heads, d, t_qk))
        k = Tensor(p.randn(1, heads, d, t_qk))
        v = Tensor(p.randn(1, heads, d, t_v))
        alpha = Tensor(p.rng.uniform(0.5, 2.0, heads))
        tag = f"h={heads} d={d}"
        yield p.check(f"attention q {tag}", lambda x: channel_attention(x, k, v, alpha), q.shape)
        yield p.check(f"attention k {tag}", lambda x: channel_attention(q, x, v, alpha), k.shape)
        yield p.check(f"attention v {tag}", lambda x: channel_attention(q, k, x, alpha), v.shape)
        at = alpha.data
        yield p.check(f"attention alpha {tag}", lambda x: channel_attention(q, k, v, x), alpha.shape, at=at)
        yield p.check(f"attention alpha/ {tag}", lambda x: channel_attention(q, k, v, x, alpha_divides=True), alpha.shape, at=at)

    base = CSAttnConfig(channels=8, base_heads=2)
    params = init_block_params(base, p.rng)
    yield p.check("qkv_split", lambda x: concat_channel(qkv_split(x, params, base)), (1, 8, 4, 4))
    for i, r in enumerate((2, 4)):
        scaling = params.stages[i].scaling
        yield p.check(f"spatial_scaling r={r}", lambda x: concat_channel(list(spatial_scaling(x, r, scaling, base))), (1, 8, 8, 8))

    variants = {
        "full": base,
        "count=1": dataclasses.replace(base, attention_count=1),
        "count=2": dataclasses.replace(base, attention_count=2),
        "no scaling": dataclasses.replace(base, use_spatial_scaling=False),
        "no residual/agg": dataclasses.replace(base, intra_residual=False, use_aggregation=False),
        "silu no nta": dataclasses.replace(base, activation="silu", use_value_nta=False),
    }
    for label, cfg in variants.items():
        bp = init_block_params(cfg, p.rng)
        coords = None if label == "full" else 96
        yield p.check(f"csattn_forward {label}", lambda x: csattn_forward(x, bp, cfg), (1, 8, 8, 8), max_coords=coords)

    normalized = dataclasses.replace(base, residual_source="normalized")
    for label, cfg in (("csattn", base), ("csattn normalized residual", normalized)):
        bp = init_block_params(cfg, p.rng)
        x0 = Tensor(p.randn(1, 8, 8, 8))
        obj = p.scalar(lambda x: csattn_forward(x, bp, cfg), (1, 8, 8, 8))
        yield from p.check_tree(label, bp, lambda: obj(x0), max_coords=16)

    stacked_cfg = dataclasses.replace(base, baseline_stacked=True)
    sp = init_block_params(stacked_cfg, p.rng)
    yield p.check("stacked baseline", lambda x: stacked_attention_baseline(x, sp, stacked_cfg), (1, 8, 4, 4), max_coords=64)
    x0 = Tensor(p.randn(1, 8, 4, 4))
    obj = p.scalar(lambda x: stacked_attention_baseline(x, sp, stacked_cfg), (1, 8, 4, 4))
    yield from p.check_tree("stacked baseline", sp, lambda: obj(x0), max_coords=8)


# ---------------------------------------------------------------------- net

def _net_checks(p: _Checker) -> Iterator[GradCheckReport]:
    for shape in ((1, 3, 5, 7), (2, 1, 3, 5), (1, 2, 7, 9), (1, 2, 8, 8)):
        gt = Tensor(p.randn(*shape))
        yield p.check(f"l1_loss {shape}", p.with_readout(lambda x: l1_loss(x, gt), shape), shape)
        for method in ("direct", "fft"):
            loss = p.with_readout(lambda x, m=method: frequency_loss(x, gt, m), shape)
            yield p.check(f"frequency_loss {method} {shape}", loss, shape)
    for factor, shape in ((2, (1, 3, 4, 8)), (4, (2, 1, 8, 4)), (2, (1, 2, 6, 2))):
        yield p.check(f"downsample x{factor} {shape}", lambda x: downsample_image(x, factor), shape)

    cfg = NetConfig(base_channels=4, blocks_per_level=(1, 1, 1), csattn=CSAttnConfig(channels=4, base_heads=1), zero_heads=False)
    params = build(cfg, seed=int(p.rng.integers(1 << 31)))
    clean = Tensor(p.rng.random((1, 3, 16, 16)))
    gts = (clean, downsample_image(clean, 2), downsample_image(clean, 4))
    weights = LossWeights(lambda_freq=0.1)

    def net_loss(x: Tensor) -> Tensor:
        return multiscale_loss(forward_multiscale(params, x), gts, weights)

    yield grad_check(net_loss, p.rng.random((1, 3, 16, 16)), step=STEP, tol=TOL, name="network multiscale loss", max_coords=24)
    yield p.check("network out1", lambda x: forward_multiscale(params, x)[0], (1, 3, 16, 16), max_coords=16)
    yield p.check("network out4", lambda x: forward_multiscale(params, x)[2], (1, 3, 16, 16), max_coords=16)

    x0 = Tensor(p.rng.random((1, 3, 16, 16)))
    yield p.check_param("network head1 weight", params.head1, "weight", lambda: net_loss(x0), max_coords=16)
    yield p.check_param("network enc3 stage3 alpha", params.enc3[0].stages[1], "alpha", lambda: net_loss(x0))


_CHECKS = {"tensor": _tensor_checks, "nn": _nn_checks, "block": _block_checks, "net": _net_checks}


def run_suite(module: str = "all", seed: int = 0) -> list[GradCheckReport]:
    """Run the checks of one module (or all); parameters are built in 64-bit mode."""
    names = MODULES if module == "all" else (module,)
    reports = []
    with precision(np.float64):
        for name in names:
            if name not in _CHECKS:
                raise ValueError(f"unknown gradcheck module {name!r}; expected one of {('all',) + MODULES}")
            for report in _CHECKS[name](_Checker(seed)):
                log.info("%s", report)
                reports.append(report)
    return reports
