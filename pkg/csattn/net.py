"""
csattn/net.py

Three-level multi-input multi-output encoder/decoder hosting CSAttn blocks.

Level l runs at channels C * 2**(l-1) and resolution 1/2**(l-1). Levels 2 and
3 also ingest the 1/2 and 1/4 scale input images; every decoder level emits a
3-channel residual added to the same-scale input image, so the network
produces restored estimates at scales 1, 1/2 and 1/4.
With zero_heads the residual heads start at zero and the untrained network
is the identity at every scale.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from csattn.block import AnyBlockParams, CSAttnConfig, block_forward, init_block_params
from csattn.errors import ConfigError, ShapeError
from csattn.nn_ops import (
    ConvParams,
    conv3x3,
    count_elements,
    init_conv3x3,
    init_pointwise,
    pixel_shuffle,
    pointwise_conv,
)
from csattn.tensor import Tensor, concat_channel, precision, reduce, reshape

log = logging.getLogger(__name__)

LEVELS = 3
SIZE_MULTIPLE = 16


@dataclass
class NetConfig:
    base_channels: int = 32
    blocks_per_level: tuple[int, int, int] = (6, 6, 12)
    csattn: CSAttnConfig = field(default_factory=CSAttnConfig)
    zero_heads: bool = True

    def level_channels(self) -> tuple[int, int, int]:
        c = self.base_channels
        return (c, 2 * c, 4 * c)

    def block_config(self, level: int) -> CSAttnConfig:
        """CSAttn template with channels set for level 1, 2 or 3."""
        return dataclasses.replace(self.csattn, channels=self.level_channels()[level - 1])

    def validate(self) -> None:
        if self.base_channels <= 0:
            raise ConfigError(f"base_channels must be positive, got {self.base_channels!r}")
        if len(self.blocks_per_level) != LEVELS or min(self.blocks_per_level) < 1:
            raise ConfigError(f"blocks_per_level must be three ints >= 1, got {self.blocks_per_level!r}")
        for level in range(1, LEVELS + 1):
            self.block_config(level).validate()


@dataclass
class NetParams:
    config: NetConfig
    stem: ConvParams
    enc1: list[AnyBlockParams]
    down12: ConvParams
    embed2: ConvParams
    fuse_in2: ConvParams
    enc2: list[AnyBlockParams]
    down23: ConvParams
    embed3: ConvParams
    fuse_in3: ConvParams
    enc3: list[AnyBlockParams]
    head3: ConvParams
    up32: ConvParams
    fuse_skip2: ConvParams
    dec2: list[AnyBlockParams]
    head2: ConvParams
    up21: ConvParams
    fuse_skip1: ConvParams
    dec1: list[AnyBlockParams]
    head1: ConvParams


def build(cfg: NetConfig, seed: int = 0) -> NetParams:
    """Deterministic initialization: same (cfg, seed) gives bitwise-equal parameters."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    c1, c2, c3 = cfg.level_channels()
    b1, b2, b3 = cfg.blocks_per_level
    bias = cfg.csattn.use_bias

    def blocks(level: int, count: int) -> list[AnyBlockParams]:
        bcfg = cfg.block_config(level)
        return [init_block_params(bcfg, rng) for _ in range(count)]

    def head(in_channels: int) -> ConvParams:
        conv = init_conv3x3(rng, in_channels, 3, bias)
        if cfg.zero_heads:
            for t in (conv.weight, conv.bias):
                if t is not None:
                    t.data[...] = 0
        return conv

    params = NetParams(
        config=cfg,
        stem=init_conv3x3(rng, 3, c1, bias),
        enc1=blocks(1, b1),
        down12=init_conv3x3(rng, c1, c2, bias),
        embed2=init_conv3x3(rng, 3, c2, bias),
        fuse_in2=init_pointwise(rng, 2 * c2, c2, bias),
        enc2=blocks(2, b2),
        down23=init_conv3x3(rng, c2, c3, bias),
        embed3=init_conv3x3(rng, 3, c3, bias),
        fuse_in3=init_pointwise(rng, 2 * c3, c3, bias),
        enc3=blocks(3, b3),
        head3=head(c3),
        up32=init_pointwise(rng, c3, 4 * c2, bias),
        fuse_skip2=init_pointwise(rng, 2 * c2, c2, bias),
        dec2=blocks(2, b2),
        head2=head(c2),
        up21=init_pointwise(rng, c2, 4 * c1, bias),
        fuse_skip1=init_pointwise(rng, 2 * c1, c1, bias),
        dec1=blocks(1, b1),
        head1=head(c1),
    )
    log.debug("built network C=%d blocks=%s: %d parameters", cfg.base_channels, cfg.blocks_per_level, count_params(params))
    return params


def count_params(params) -> int:
    """Exact number of scalar parameters in any parameter tree."""
    return count_elements(params)


# ---------------------------------------------------------------------- Forward

def downsample_image(img: Tensor, factor: int) -> Tensor:
    """Area average over factor x factor blocks."""
    if img.ndim != 4:
        raise ShapeError(f"downsample_image expects NCHW input, got {img.shape!r}")
    n, c, h, w = img.shape
    if factor < 1 or h % factor or w % factor:
        raise ShapeError(f"downsample_image: factor {factor!r} does not divide {h}x{w}")
    if factor == 1:
        return img
    blocks = reshape(img, (n, c, h // factor, factor, w // factor, factor))
    return reduce("mean", blocks, (3, 5))


def _run_blocks(x: Tensor, blocks: list[AnyBlockParams], cfg: CSAttnConfig, maps) -> Tensor:
    for params in blocks:
        x = block_forward(x, params, cfg, maps)
    return x


def forward_multiscale(params: NetParams, img: Tensor, maps: list | None = None) -> tuple[Tensor, Tensor, Tensor]:
    """Returns restored estimates (out1, out2, out4) at scales 1, 1/2 and 1/4."""
    cfg = params.config
    if img.ndim != 4 or img.shape[1] != 3:
        raise ShapeError(f"network expects (N, 3, H, W) input, got {img.shape!r}")
    if img.shape[2] % SIZE_MULTIPLE or img.shape[3] % SIZE_MULTIPLE:
        raise ShapeError(f"input {img.shape[2]}x{img.shape[3]} not divisible by {SIZE_MULTIPLE}")
    bcfg = [cfg.block_config(level) for level in range(1, LEVELS + 1)]

    img2 = downsample_image(img, 2)
    img4 = downsample_image(img, 4)

    # ----- Encoder
    f1 = _run_blocks(conv3x3(img, params.stem), params.enc1, bcfg[0], maps)

    f2 = conv3x3(f1, params.down12, stride=2)
    f2 = pointwise_conv(concat_channel([f2, conv3x3(img2, params.embed2)]), params.fuse_in2)
    f2 = _run_blocks(f2, params.enc2, bcfg[1], maps)

    f3 = conv3x3(f2, params.down23, stride=2)
    f3 = pointwise_conv(concat_channel([f3, conv3x3(img4, params.embed3)]), params.fuse_in3)
    f3 = _run_blocks(f3, params.enc3, bcfg[2], maps)
    out4 = conv3x3(f3, params.head3) + img4

    # ----- Decoder
    d2 = pixel_shuffle(pointwise_conv(f3, params.up32), 2)
    d2 = pointwise_conv(concat_channel([d2, f2]), params.fuse_skip2)
    d2 = _run_blocks(d2, params.dec2, bcfg[1], maps)
    out2 = conv3x3(d2, params.head2) + img2

    d1 = pixel_shuffle(pointwise_conv(d2, params.up21), 2)
    d1 = pointwise_conv(concat_channel([d1, f1]), params.fuse_skip1)
    d1 = _run_blocks(d1, params.dec1, bcfg[0], maps)
    out1 = conv3x3(d1, params.head1) + img

    return out1, out2, out4


def pad_to_multiple(image: np.ndarray, multiple: int = SIZE_MULTIPLE) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad a (3, H, W) image at the bottom/right; returns (padded, (H, W))."""
    _, h, w = image.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    mode = "reflect" if min(h, w) > 1 else "edge"
    padded = np.pad(image, ((0, 0), (0, ph), (0, pw)), mode=mode)
    return padded, (h, w)


def infer_image(params: NetParams, image: np.ndarray) -> np.ndarray:
    """
    Restore a single (3, H, W) image of any size.

    The input is reflect-padded to a multiple of 16, the full-scale output is
    cropped back to H x W and clipped to [0, 1].
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"infer_image expects a (3, H, W) array, got {image.shape!r}")
    dtype = params.stem.weight.dtype.type
    padded, (h, w) = pad_to_multiple(np.asarray(image, dtype=dtype))
    with precision(dtype):
        out1, _, _ = forward_multiscale(params, Tensor(padded[None]))
    return np.clip(out1.data[0, :, :h, :w], 0.0, 1.0)
