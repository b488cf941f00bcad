"""
csattn/block.py

Continuous Scaling Attention block: three chained channel attentions with no
feed-forward network.

    X^ = LayerNorm(x)
    Q, K, V, V2, V3 = Split(DW(PW(X^)))
    X1 = Attn(Q, K, V)                                   N heads, full res
    X2 = Attn(Scaling_r2(X1 + X^), NTA(V2))              2N heads, Q/K at 1/2
    X3 = Attn(Scaling_r4(X2 + X^), NTA(V3))              2N heads, Q/K at 1/4
    Y  = PW(Concat[X1, X2, X3]) + x                       (+ X^ with residual_source="normalized")

Attention is channel-wise: the score matrix is d x d per head (d = C/heads),
so Q/K may live at a lower resolution than V. Every component can be switched
off through CSAttnConfig for ablation, and the stacked single-attention
baseline lives here as well.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from csattn.errors import ConfigError, ShapeError
from csattn.nn_ops import (
    ACTIVATIONS,
    ConvParams,
    LayerNormParams,
    activation,
    depthwise_conv3x3,
    init_depthwise,
    init_layer_norm,
    init_pointwise,
    l2_normalize_lastdim,
    layer_norm_channel,
    pixel_unshuffle,
    pointwise_conv,
)
from csattn.tensor import (
    Tensor,
    concat_channel,
    default_dtype,
    matmul,
    permute,
    record_op,
    reshape,
    softmax_lastdim,
    split_channel,
)

log = logging.getLogger(__name__)

SCALE_FACTORS = (2, 4)
RESIDUAL_SOURCES = ("input", "normalized")


@dataclass
class CSAttnConfig:
    """
    Block hyperparameters and the ablation surface.

    stage_heads overrides the (N, 2N, 2N) schedule when given. residual_source
    picks what the block output adds back: the raw block input ("input") or
    its layer-normalized form ("normalized"). The stage residuals always add
    the normalized input.
    """

    channels: int = 32
    base_heads: int = 1
    activation: str = "gelu"
    leaky_slope: float = 0.2
    alpha_init: float = 1.0
    alpha_divides: bool = False
    use_bias: bool = True
    norm_eps: float = 1e-5
    use_nonlinear_activation: bool = True
    use_value_nta: bool = True
    use_aggregation: bool = True
    progressive_heads: bool = True
    intra_residual: bool = True
    use_spatial_scaling: bool = True
    attention_count: int = 3
    baseline_stacked: bool = False
    stage_heads: Optional[tuple[int, int, int]] = None
    residual_source: str = "input"

    @property
    def act_kind(self) -> str:
        return self.activation if self.use_nonlinear_activation else "identity"

    def heads(self) -> tuple[int, int, int]:
        if self.stage_heads is not None:
            return tuple(int(h) for h in self.stage_heads)
        n = self.base_heads
        later = 2 * n if self.progressive_heads else n
        return (n, later, later)

    def active_heads(self) -> tuple[int, ...]:
        if self.baseline_stacked:
            return (self.base_heads,)
        return self.heads()[: self.attention_count]

    def spatial_multiple(self) -> int:
        """H and W of the block input must be divisible by this."""
        if self.baseline_stacked or not self.use_spatial_scaling or self.attention_count < 2:
            return 1
        return SCALE_FACTORS[self.attention_count - 2]

    def single_attention(self) -> "CSAttnConfig":
        """Configuration of one unit of the stacked baseline."""
        return dataclasses.replace(self, attention_count=1, baseline_stacked=False)

    def validate(self) -> None:
        if self.channels <= 0 or self.base_heads <= 0:
            raise ConfigError(f"channels ({self.channels!r}) and base_heads ({self.base_heads!r}) must be positive")
        if self.attention_count not in (1, 2, 3):
            raise ConfigError(f"attention_count must be 1, 2 or 3, got {self.attention_count!r}")
        if self.activation not in ACTIVATIONS or self.activation == "identity":
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.stage_heads is not None and (len(self.stage_heads) != 3 or min(self.stage_heads) <= 0):
            raise ConfigError(f"stage_heads must be three positive ints, got {self.stage_heads!r}")
        if self.norm_eps <= 0:
            raise ConfigError(f"norm_eps must be > 0, got {self.norm_eps!r}")
        if self.residual_source not in RESIDUAL_SOURCES:
            raise ConfigError(f"residual_source must be one of {RESIDUAL_SOURCES}, got {self.residual_source!r}")
        for heads in self.active_heads():
            if self.channels % heads:
                raise ConfigError(f"{self.channels} channels not divisible by {heads} heads")


# ---------------------------------------------------------------------- Parameters

@dataclass
class ScalingParams:
    proj_in: ConvParams
    dw: ConvParams
    proj_out: ConvParams


@dataclass
class StageParams:
    """Parameters of attention stage 2 or 3."""

    alpha: Tensor
    scaling: ScalingParams
    nta: Optional[ConvParams] = None


@dataclass
class BlockParams:
    norm: LayerNormParams
    qkv: ConvParams
    qkv_dw: ConvParams
    alpha: Tensor
    stages: list[StageParams] = field(default_factory=list)
    aggregate: Optional[ConvParams] = None


@dataclass
class StackedParams:
    units: list[BlockParams]


AnyBlockParams = Union[BlockParams, StackedParams]


def _alpha(cfg: CSAttnConfig, heads: int) -> Tensor:
    return Tensor(np.full(heads, cfg.alpha_init, dtype=default_dtype()), requires_grad=True)


def _init_scaling(cfg: CSAttnConfig, r: int, rng: np.random.Generator) -> ScalingParams:
    c = cfg.channels
    inner = c * r * r if cfg.use_spatial_scaling else c
    return ScalingParams(
        proj_in=init_pointwise(rng, c, c, cfg.use_bias),
        dw=init_depthwise(rng, inner, cfg.use_bias),
        proj_out=init_pointwise(rng, inner, 2 * c, cfg.use_bias),
    )


def init_block_params(cfg: CSAttnConfig, rng: np.random.Generator) -> AnyBlockParams:
    """Parameter shapes follow entirely from cfg; values are fan-in uniform."""
    cfg.validate()
    if cfg.baseline_stacked:
        unit = cfg.single_attention()
        return StackedParams(units=[init_block_params(unit, rng) for _ in range(3)])

    c = cfg.channels
    heads = cfg.heads()
    width = (2 + cfg.attention_count) * c
    params = BlockParams(
        norm=init_layer_norm(c, cfg.norm_eps),
        qkv=init_pointwise(rng, c, width, cfg.use_bias),
        qkv_dw=init_depthwise(rng, width, cfg.use_bias),
        alpha=_alpha(cfg, heads[0]),
    )
    for stage in range(1, cfg.attention_count):
        params.stages.append(
            StageParams(
                alpha=_alpha(cfg, heads[stage]),
                scaling=_init_scaling(cfg, SCALE_FACTORS[stage - 1], rng),
                nta=init_pointwise(rng, c, c, cfg.use_bias) if cfg.use_value_nta else None,
            )
        )
    if cfg.use_aggregation and cfg.attention_count > 1:
        params.aggregate = init_pointwise(rng, cfg.attention_count * c, c, cfg.use_bias)
    return params


# ---------------------------------------------------------------------- Attention

def scale_heads(scores: Tensor, alpha: Tensor, divides: bool = False) -> Tensor:
    """Multiply (or divide) each head's d x d score block by its temperature."""
    if scores.ndim != 4 or alpha.shape != (scores.shape[1],):
        raise ShapeError(f"temperature {alpha.shape!r} does not match scores {scores.shape!r}")
    a = alpha.data[None, :, None, None]
    s = scores.data

    if divides:
        def backward(g: np.ndarray):
            return g / a, -np.sum(g * s, axis=(0, 2, 3)) / (alpha.data * alpha.data)

        return record_op("scale_heads_div", s / a, (scores, alpha), backward)

    def backward(g: np.ndarray):
        return g * a, np.sum(g * s, axis=(0, 2, 3))

    return record_op("scale_heads", s * a, (scores, alpha), backward)


def channel_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    alpha: Tensor,
    alpha_divides: bool = False,
    maps: Optional[list] = None,
) -> Tensor:
    """
    Transposed (channel) attention.

    q, k: (N, h, d, T_qk); v: (N, h, d, T_v); the leading N may be omitted.
    Q and K are L2-normalized along tokens, S = (Q K^T) * alpha is d x d per
    head, A = softmax(S) over the last axis and the result is A V.
    """
    squeeze = q.ndim == 3
    if squeeze:
        q, k, v = (reshape(t, (1,) + t.shape) for t in (q, k, v))
    if q.ndim != 4 or q.shape != k.shape:
        raise ShapeError(f"query {q.shape!r} and key {k.shape!r} must share (N, heads, d, T)")
    if v.ndim != 4 or v.shape[:3] != q.shape[:3]:
        raise ShapeError(f"value {v.shape!r} head layout differs from query {q.shape!r}")
    if q.shape[3] == 0 or v.shape[3] == 0:
        raise ShapeError("attention needs at least one token")

    qn = l2_normalize_lastdim(q)
    kn = l2_normalize_lastdim(k)
    scores = scale_heads(matmul(qn, permute(kn, (0, 1, 3, 2))), alpha, alpha_divides)
    attn = softmax_lastdim(scores)
    if maps is not None:
        maps.append(attn)
    out = matmul(attn, v)
    if squeeze:
        out = reshape(out, out.shape[1:])
    return out


def _to_heads(x: Tensor, heads: int) -> Tensor:
    n, c, h, w = x.shape
    return reshape(x, (n, heads, c // heads, h * w))


def attend(
    q_map: Tensor,
    k_map: Tensor,
    v_map: Tensor,
    heads: int,
    alpha: Tensor,
    cfg: CSAttnConfig,
    maps: Optional[list] = None,
) -> Tensor:
    """Channel attention on NCHW maps; Q/K resolution may differ from V's."""
    out = channel_attention(
        _to_heads(q_map, heads),
        _to_heads(k_map, heads),
        _to_heads(v_map, heads),
        alpha,
        cfg.alpha_divides,
        maps,
    )
    return reshape(out, v_map.shape)


# ---------------------------------------------------------------------- Block pieces

def qkv_split(x_norm: Tensor, params: BlockParams, cfg: CSAttnConfig) -> list[Tensor]:
    """PW C -> (2+count)C, DW, split in the fixed order Q, K, V, V2, V3."""
    c = cfg.channels
    if x_norm.ndim != 4 or x_norm.shape[1] != c:
        raise ShapeError(f"qkv_split: expected {c} channels, got {x_norm.shape!r}")
    projected = depthwise_conv3x3(pointwise_conv(x_norm, params.qkv), params.qkv_dw)
    pieces = projected.shape[1] // c
    return split_channel(projected, [c] * pieces)


def value_nta(v: Tensor, params: Optional[ConvParams], cfg: CSAttnConfig) -> Tensor:
    """Value nonlinear transformation adjustment: PW C -> C then activation."""
    if not cfg.use_value_nta or params is None:
        return v
    return activation(cfg.act_kind, pointwise_conv(v, params), cfg.leaky_slope)


def spatial_scaling(x: Tensor, r: int, params: ScalingParams, cfg: CSAttnConfig) -> tuple[Tensor, Tensor]:
    """
    PW C -> C, shuffle-down by r, DW 3x3, activation, PW r^2 C -> 2C, split.

    With use_spatial_scaling off the shuffle is skipped and Q/K stay at full
    resolution (PW, DW, activation, PW C -> 2C).
    """
    if cfg.use_spatial_scaling and (x.shape[2] % r or x.shape[3] % r):
        raise ShapeError(f"spatial_scaling: factor {r} does not divide {x.shape[2]}x{x.shape[3]}")
    y = pointwise_conv(x, params.proj_in)
    if cfg.use_spatial_scaling:
        y = pixel_unshuffle(y, r)
    y = depthwise_conv3x3(y, params.dw)
    y = activation(cfg.act_kind, y, cfg.leaky_slope)
    y = pointwise_conv(y, params.proj_out)
    q, k = split_channel(y, [cfg.channels, cfg.channels])
    return q, k


def _check_block_input(x: Tensor, cfg: CSAttnConfig) -> None:
    if x.ndim != 4 or x.shape[1] != cfg.channels:
        raise ShapeError(f"block expects (N, {cfg.channels}, H, W), got {x.shape!r}")
    m = cfg.spatial_multiple()
    if x.shape[2] % m or x.shape[3] % m:
        raise ShapeError(f"block input {x.shape[2]}x{x.shape[3]} not divisible by {m}")


def csattn_forward(x: Tensor, params: BlockParams, cfg: CSAttnConfig, maps: Optional[list] = None) -> Tensor:
    """One CSAttn block. Output shape always equals input shape."""
    _check_block_input(x, cfg)
    heads = cfg.heads()

    x_hat = layer_norm_channel(x, params.norm)
    q, k, v, *values = qkv_split(x_hat, params, cfg)

    prev = attend(q, k, v, heads[0], params.alpha, cfg, maps)
    outputs = [prev]
    for i, stage in enumerate(params.stages):
        stage_in = prev + x_hat if cfg.intra_residual else prev
        q_i, k_i = spatial_scaling(stage_in, SCALE_FACTORS[i], stage.scaling, cfg)
        v_i = value_nta(values[i], stage.nta, cfg)
        prev = attend(q_i, k_i, v_i, heads[i + 1], stage.alpha, cfg, maps)
        outputs.append(prev)

    if params.aggregate is not None:
        y = pointwise_conv(concat_channel(outputs), params.aggregate)
    else:
        y = prev
    return y + (x if cfg.residual_source == "input" else x_hat)


def stacked_attention_baseline(
    x: Tensor, params: StackedParams, cfg: CSAttnConfig, maps: Optional[list] = None
) -> Tensor:
    """Three plain (norm -> single attention -> residual) units in sequence."""
    unit = cfg.single_attention()
    for unit_params in params.units:
        x = csattn_forward(x, unit_params, unit, maps)
    return x


def block_forward(x: Tensor, params: AnyBlockParams, cfg: CSAttnConfig, maps: Optional[list] = None) -> Tensor:
    if isinstance(params, StackedParams):
        return stacked_attention_baseline(x, params, cfg, maps)
    return csattn_forward(x, params, cfg, maps)
