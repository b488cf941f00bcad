"""
csattn/nn_ops.py

Neural layers on top of csattn.tensor:
    - 1x1 point-wise and 3x3 depth-wise convolutions (plus the full 3x3
      convolution used by the network stem, embeddings, downsampling and heads)
    - channel layer normalization
    - GELU / ReLU / LeakyReLU / SiLU
    - pixel shuffle / unshuffle
    - L2 normalization along the last axis

Parameter containers are dataclasses; iter_named_tensors() walks any tree of
them and yields stable dotted names used by checkpoints and counters.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.special import erf, expit

from csattn.errors import ShapeError
from csattn.tensor import Tensor, default_dtype, permute, record_op, reshape

ACTIVATIONS = ("gelu", "relu", "leakyrelu", "silu", "identity")

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _einsum(spec: str, *operands: np.ndarray) -> np.ndarray:
    return np.einsum(spec, *operands, optimize=False)


# ---------------------------------------------------------------------- Parameters

@dataclass
class ConvParams:
    """weight: (Cout, Cin/groups, k, k); bias: (Cout,) or None."""

    weight: Tensor
    bias: Optional[Tensor] = None

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]


@dataclass
class LayerNormParams:
    gain: Tensor
    offset: Tensor
    epsilon: float = 1e-5

    def __post_init__(self) -> None:
        if self.gain.shape != self.offset.shape or self.gain.ndim != 1:
            raise ShapeError(f"layer norm gain {self.gain.shape!r} / offset {self.offset.shape!r} mismatch")
        if self.epsilon <= 0:
            raise ShapeError(f"layer norm epsilon must be > 0, got {self.epsilon!r}")


def iter_named_tensors(tree, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Yield (dotted_name, Tensor) for every tensor in a dataclass/list tree."""
    if isinstance(tree, Tensor):
        yield prefix, tree
    elif dataclasses.is_dataclass(tree):
        for f in dataclasses.fields(tree):
            value = getattr(tree, f.name)
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from iter_named_tensors(value, name)
    elif isinstance(tree, (list, tuple)):
        for i, item in enumerate(tree):
            yield from iter_named_tensors(item, f"{prefix}.{i}" if prefix else str(i))


def swap_tensor(tree, name: str, tensor: Tensor) -> Tensor:
    """Store tensor under a dotted name from iter_named_tensors; returns the tensor it replaced."""
    *path, last = name.split(".")
    owner = tree
    for part in path:
        owner = owner[int(part)] if isinstance(owner, (list, tuple)) else getattr(owner, part)
    old = owner[int(last)] if isinstance(owner, list) else getattr(owner, last)
    if not isinstance(old, Tensor):
        raise KeyError(f"{name!r} does not name a tensor")
    if isinstance(owner, list):
        owner[int(last)] = tensor
    else:
        setattr(owner, last, tensor)
    return old


def count_elements(tree) -> int:
    return sum(t.size for _, t in iter_named_tensors(tree))


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], bound: float) -> Tensor:
    values = rng.uniform(-bound, bound, size=shape)
    return Tensor(values.astype(default_dtype()), requires_grad=True)


def init_conv(
    rng: np.random.Generator,
    in_channels: int,
    out_channels: int,
    kernel: int = 1,
    groups: int = 1,
    bias: bool = True,
) -> ConvParams:
    """Fan-in scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if in_channels % groups or out_channels % groups:
        raise ShapeError(f"groups={groups} does not divide {in_channels}->{out_channels}")
    fan_in = (in_channels // groups) * kernel * kernel
    bound = 1.0 / math.sqrt(fan_in)
    weight = _uniform(rng, (out_channels, in_channels // groups, kernel, kernel), bound)
    b = _uniform(rng, (out_channels,), bound) if bias else None
    return ConvParams(weight, b)


def init_pointwise(rng: np.random.Generator, in_channels: int, out_channels: int, bias: bool = True) -> ConvParams:
    return init_conv(rng, in_channels, out_channels, 1, 1, bias)


def init_depthwise(rng: np.random.Generator, channels: int, bias: bool = True) -> ConvParams:
    return init_conv(rng, channels, channels, 3, channels, bias)


def init_conv3x3(rng: np.random.Generator, in_channels: int, out_channels: int, bias: bool = True) -> ConvParams:
    return init_conv(rng, in_channels, out_channels, 3, 1, bias)


def init_layer_norm(channels: int, epsilon: float = 1e-5) -> LayerNormParams:
    dtype = default_dtype()
    return LayerNormParams(
        gain=Tensor(np.ones(channels, dtype=dtype), requires_grad=True),
        offset=Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
        epsilon=epsilon,
    )


def _conv_inputs(x: Tensor, p: ConvParams) -> tuple[Tensor, ...]:
    return (x, p.weight) if p.bias is None else (x, p.weight, p.bias)


def _bias_nchw(p: ConvParams) -> np.ndarray:
    return p.bias.data[None, :, None, None]


# ---------------------------------------------------------------------- Convolutions

def pointwise_conv(x: Tensor, p: ConvParams) -> Tensor:
    """1x1 convolution: a per-pixel linear map across channels."""
    if x.ndim != 4 or p.weight.shape[2:] != (1, 1):
        raise ShapeError(f"pointwise_conv expects NCHW input and 1x1 kernel, got {x.shape!r} / {p.weight.shape!r}")
    if x.shape[1] != p.in_channels:
        raise ShapeError(f"pointwise_conv: input has {x.shape[1]} channels, weight expects {p.in_channels}")

    w = p.weight.data[:, :, 0, 0]
    out = _einsum("oc,nchw->nohw", w, x.data)
    if p.bias is not None:
        out = out + _bias_nchw(p)

    def backward(g: np.ndarray):
        gx = _einsum("oc,nohw->nchw", w, g)
        gw = _einsum("nohw,nchw->oc", g, x.data)[:, :, None, None]
        if p.bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return record_op("pointwise_conv", out, _conv_inputs(x, p), backward)


def depthwise_conv3x3(x: Tensor, p: ConvParams) -> Tensor:
    """3x3 depth-wise convolution, stride 1, zero padding 1, groups == channels."""
    if x.ndim != 4:
        raise ShapeError(f"depthwise_conv3x3 expects NCHW input, got {x.shape!r}")
    n, c, h, w = x.shape
    if h < 1 or w < 1:
        raise ShapeError(f"depthwise_conv3x3: empty spatial extent {x.shape!r}")
    if p.weight.shape != (c, 1, 3, 3):
        raise ShapeError(f"depthwise_conv3x3: weight {p.weight.shape!r} does not match {c} channels")

    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    k = p.weight.data[:, 0]
    out = np.zeros_like(x.data)
    for dy in range(3):
        for dx in range(3):
            out = out + k[None, :, dy, dx, None, None] * xp[:, :, dy:dy + h, dx:dx + w]
    if p.bias is not None:
        out = out + _bias_nchw(p)

    def backward(g: np.ndarray):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(p.weight.data)
        for dy in range(3):
            for dx in range(3):
                gxp[:, :, dy:dy + h, dx:dx + w] += k[None, :, dy, dx, None, None] * g
                gk[:, 0, dy, dx] = np.sum(g * xp[:, :, dy:dy + h, dx:dx + w], axis=(0, 2, 3))
        gx = gxp[:, :, 1:-1, 1:-1]
        if p.bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2, 3))

    return record_op("depthwise_conv3x3", out, _conv_inputs(x, p), backward)


def conv3x3(x: Tensor, p: ConvParams, stride: int = 1) -> Tensor:
    """Full 3x3 convolution with zero padding 1 and stride 1 or 2."""
    if x.ndim != 4 or p.weight.shape[2:] != (3, 3):
        raise ShapeError(f"conv3x3 expects NCHW input and 3x3 kernel, got {x.shape!r} / {p.weight.shape!r}")
    n, c, h, w = x.shape
    if c != p.in_channels:
        raise ShapeError(f"conv3x3: input has {c} channels, weight expects {p.in_channels}")
    if stride not in (1, 2):
        raise ShapeError(f"conv3x3: unsupported stride {stride!r}")

    ho = (h - 1) // stride + 1
    wo = (w - 1) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    kern = p.weight.data

    def window(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
        return arr[:, :, dy:dy + stride * (ho - 1) + 1:stride, dx:dx + stride * (wo - 1) + 1:stride]

    out = np.zeros((n, p.out_channels, ho, wo), dtype=x.dtype)
    for dy in range(3):
        for dx in range(3):
            out = out + _einsum("oc,nchw->nohw", kern[:, :, dy, dx], window(xp, dy, dx))
    if p.bias is not None:
        out = out + _bias_nchw(p)

    def backward(g: np.ndarray):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kern)
        for dy in range(3):
            for dx in range(3):
                window(gxp, dy, dx)[...] += _einsum("oc,nohw->nchw", kern[:, :, dy, dx], g)
                gk[:, :, dy, dx] = _einsum("nohw,nchw->oc", g, window(xp, dy, dx))
        gx = gxp[:, :, 1:-1, 1:-1]
        if p.bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2, 3))

    return record_op(f"conv3x3_s{stride}", out, _conv_inputs(x, p), backward)


# ---------------------------------------------------------------------- Normalization

def layer_norm_channel(x: Tensor, p: LayerNormParams) -> Tensor:
    """Normalize across channels at every (n, h, w), then apply gain and offset."""
    if x.ndim != 4 or x.shape[1] != p.gain.shape[0]:
        raise ShapeError(f"layer_norm_channel: input {x.shape!r} vs {p.gain.shape[0]} channels")

    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + p.epsilon)
    xhat = xc * inv
    gain = p.gain.data[None, :, None, None]
    out = gain * xhat + p.offset.data[None, :, None, None]

    def backward(g: np.ndarray):
        gxhat = g * gain
        gx = inv * (
            gxhat
            - gxhat.mean(axis=1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=1, keepdims=True)
        )
        return gx, np.sum(g * xhat, axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return record_op("layer_norm_channel", out, (x, p.gain, p.offset), backward)


def l2_normalize_lastdim(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Divide each last-axis slice by max(||slice||_2, eps)."""
    norm = np.sqrt(np.sum(x.data * x.data, axis=-1, keepdims=True))
    denom = np.maximum(norm, eps)
    y = x.data / denom
    live = norm > eps

    def backward(g: np.ndarray):
        projected = (g - y * np.sum(g * y, axis=-1, keepdims=True)) / denom
        return (np.where(live, projected, g / eps),)

    return record_op("l2_normalize", y, (x,), backward)


# ---------------------------------------------------------------------- Activations

def activation(kind: str, x: Tensor, slope: float = 0.2) -> Tensor:
    """
    Pointwise nonlinearity.

    gelu uses the exact Gaussian CDF form 0.5*x*(1+erf(x/sqrt(2))).
    identity returns x itself and records nothing.
    """
    if kind == "identity":
        return x
    v = x.data

    if kind == "gelu":
        cdf = 0.5 * (1.0 + erf(v / _SQRT2))
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * v * v)
        return record_op("gelu", v * cdf, (x,), lambda g: (g * (cdf + v * pdf),))
    if kind == "relu":
        mask = v > 0
        return record_op("relu", np.where(mask, v, 0.0).astype(v.dtype), (x,), lambda g: (g * mask,))
    if kind == "leakyrelu":
        mask = v > 0
        out = np.where(mask, v, slope * v).astype(v.dtype)
        return record_op("leakyrelu", out, (x,), lambda g: (np.where(mask, g, slope * g),))
    if kind == "silu":
        sig = expit(v)
        return record_op("silu", v * sig, (x,), lambda g: (g * sig * (1.0 + v * (1.0 - sig)),))
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# ---------------------------------------------------------------------- Pixel shuffle

def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """
    Space-to-depth: N,C,H,W -> N,r*r*C,H/r,W/r.

    Output channel c*r*r + dy*r + dx holds source offset (dy, dx) of each
    r x r block of channel c.
    """
    if x.ndim != 4:
        raise ShapeError(f"pixel_unshuffle expects NCHW input, got {x.shape!r}")
    n, c, h, w = x.shape
    if r < 1 or h % r or w % r:
        raise ShapeError(f"pixel_unshuffle: factor {r} does not divide {h}x{w}")
    y = reshape(x, (n, c, h // r, r, w // r, r))
    y = permute(y, (0, 1, 3, 5, 2, 4))
    return reshape(y, (n, c * r * r, h // r, w // r))


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Depth-to-space, the exact inverse of pixel_unshuffle."""
    if x.ndim != 4:
        raise ShapeError(f"pixel_shuffle expects NCHW input, got {x.shape!r}")
    n, c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise ShapeError(f"pixel_shuffle: {c} channels not divisible by {r * r}")
    oc = c // (r * r)
    y = reshape(x, (n, oc, r, r, h, w))
    y = permute(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (n, oc, h * r, w * r))
