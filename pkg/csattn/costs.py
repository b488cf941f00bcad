"""
csattn/costs.py

Analytic parameter / multiply-add / activation-memory accounting.

Formula sheet (per image, MACs):
    conv        Cout * Cin * k^2 * Ho * Wo / groups
    attn score  heads * d^2 * T_qk
    attn apply  heads * d^2 * T_v
    softmax     heads * d^2        (reported separately, see CostReport)
    norm, activation, residual add, reshuffles: 0

Activation memory is the sum of all retained intermediate elements times the
element size. Rows mirror the layers built by csattn.block / csattn.net so the
parameter total equals count_params(build(cfg)).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from csattn.block import SCALE_FACTORS, CSAttnConfig
from csattn.net import SIZE_MULTIPLE, NetConfig
from csattn.errors import ShapeError

BYTES_PER_ELEMENT = 4
CSV_COLUMNS = ("name", "kind", "params", "macs", "activations")


@dataclass
class CostRow:
    name: str
    kind: str
    params: int = 0
    macs: int = 0
    activations: int = 0


@dataclass
class CostReport:
    """
    Totals at a stated input size.

    flops counts multiply-adds of convolutions and of the attention score and
    apply products, all linear in H*W. The per-head softmax normalization term
    does not scale with H*W and is kept apart in softmax_ops.
    """

    height: int
    width: int
    rows: list[CostRow] = field(default_factory=list)

    @property
    def params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def flops(self) -> int:
        return sum(r.macs for r in self.rows if r.kind != "softmax")

    @property
    def softmax_ops(self) -> int:
        return sum(r.macs for r in self.rows if r.kind == "softmax")

    @property
    def peak_activation_bytes(self) -> int:
        return BYTES_PER_ELEMENT * sum(r.activations for r in self.rows)

    def by_kind(self, kind: str) -> CostRow:
        total = CostRow(name=f"*{kind}", kind=kind)
        for r in self.rows:
            if r.kind == kind:
                total.params += r.params
                total.macs += r.macs
                total.activations += r.activations
        return total

    def row(self, name: str) -> CostRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def summary(self) -> str:
        return (
            f"input {self.height}x{self.width}: params={self.params:,} "
            f"({self.params / 1e6:.3f} M)  flops={self.flops:,} ({self.flops / 1e9:.3f} G MACs)  "
            f"softmax_ops={self.softmax_ops:,}  activations={self.peak_activation_bytes / 2**20:.2f} MiB"
        )

    def to_text(self, per_layer: bool = False) -> str:
        out = io.StringIO()
        out.write(self.summary() + "\n")
        if per_layer:
            width = max((len(r.name) for r in self.rows), default=4)
            out.write(f"{'name':<{width}}  {'kind':<12} {'params':>12} {'macs':>16} {'activations':>14}\n")
            for r in self.rows:
                out.write(f"{r.name:<{width}}  {r.kind:<12} {r.params:>12,} {r.macs:>16,} {r.activations:>14,}\n")
        return out.getvalue()

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow([r.name, r.kind, r.params, r.macs, r.activations])


# ---------------------------------------------------------------------- Layer rows

def _conv(name: str, cin: int, cout: int, k: int, ho: int, wo: int, groups: int = 1, bias: bool = True) -> CostRow:
    params = cout * (cin // groups) * k * k + (cout if bias else 0)
    macs = cout * cin * k * k * ho * wo // groups
    return CostRow(name, f"conv{k}x{k}" if groups == 1 else "depthwise", params, macs, cout * ho * wo)


def _elementwise(name: str, kind: str, elements: int) -> CostRow:
    return CostRow(name, kind, 0, 0, elements)


def _attention(prefix: str, c: int, heads: int, t_qk: int, t_v: int) -> list[CostRow]:
    d = c // heads
    hd2 = heads * d * d
    return [
        CostRow(f"{prefix}.alpha", "alpha", heads, 0, 0),
        _elementwise(f"{prefix}.l2norm", "normalize", 2 * c * t_qk),
        CostRow(f"{prefix}.score", "attn_score", 0, hd2 * t_qk, hd2),
        CostRow(f"{prefix}.softmax", "softmax", 0, hd2, hd2),
        CostRow(f"{prefix}.apply", "attn_apply", 0, hd2 * t_v, c * t_v),
    ]


def _activation(name: str, cfg: CSAttnConfig, elements: int) -> list[CostRow]:
    if cfg.act_kind == "identity":
        return []
    return [_elementwise(name, "activation", elements)]


def _single_block_rows(prefix: str, cfg: CSAttnConfig, h: int, w: int) -> list[CostRow]:
    c = cfg.channels
    t = h * w
    bias = cfg.use_bias
    heads = cfg.heads()
    width = (2 + cfg.attention_count) * c

    rows = [
        CostRow(f"{prefix}.norm", "norm", 2 * c, 0, c * t),
        _conv(f"{prefix}.qkv", c, width, 1, h, w, bias=bias),
        _conv(f"{prefix}.qkv_dw", width, width, 3, h, w, groups=width, bias=bias),
    ]
    rows += _attention(f"{prefix}.stage1", c, heads[0], t, t)

    for i in range(1, cfg.attention_count):
        stage = f"{prefix}.stage{i + 1}"
        r = SCALE_FACTORS[i - 1] if cfg.use_spatial_scaling else 1
        hr, wr = h // r, w // r
        inner = c * r * r
        if cfg.intra_residual:
            rows.append(_elementwise(f"{stage}.residual", "add", c * t))
        rows.append(_conv(f"{stage}.scale_in", c, c, 1, h, w, bias=bias))
        if r > 1:
            rows.append(_elementwise(f"{stage}.unshuffle", "reshuffle", c * t))
        rows.append(_conv(f"{stage}.scale_dw", inner, inner, 3, hr, wr, groups=inner, bias=bias))
        rows += _activation(f"{stage}.scale_act", cfg, inner * hr * wr)
        rows.append(_conv(f"{stage}.scale_out", inner, 2 * c, 1, hr, wr, bias=bias))
        if cfg.use_value_nta:
            rows.append(_conv(f"{stage}.nta", c, c, 1, h, w, bias=bias))
            rows += _activation(f"{stage}.nta_act", cfg, c * t)
        rows += _attention(stage, c, heads[i], hr * wr, t)

    if cfg.use_aggregation and cfg.attention_count > 1:
        count = cfg.attention_count
        rows.append(_elementwise(f"{prefix}.concat", "reshuffle", count * c * t))
        rows.append(_conv(f"{prefix}.aggregate", count * c, c, 1, h, w, bias=bias))
    rows.append(_elementwise(f"{prefix}.residual", "add", c * t))
    return rows


def block_rows(prefix: str, cfg: CSAttnConfig, h: int, w: int) -> list[CostRow]:
    """Cost rows of one CSAttn block (or one stacked baseline) at H x W."""
    m = cfg.spatial_multiple()
    if h % m or w % m:
        raise ShapeError(f"block input {h}x{w} not divisible by {m}")
    if cfg.baseline_stacked:
        unit = cfg.single_attention()
        rows: list[CostRow] = []
        for i in range(3):
            rows += _single_block_rows(f"{prefix}.units.{i}", unit, h, w)
        return rows
    return _single_block_rows(prefix, cfg, h, w)


def count_block_flops(cfg: CSAttnConfig, h: int, w: int) -> CostReport:
    cfg.validate()
    return CostReport(height=h, width=w, rows=block_rows("block", cfg, h, w))


def count_flops(cfg: NetConfig, h: int, w: int) -> CostReport:
    """Per-layer costs of the full network for one H x W input image."""
    cfg.validate()
    if h % SIZE_MULTIPLE or w % SIZE_MULTIPLE or h <= 0 or w <= 0:
        raise ShapeError(f"input {h}x{w} not divisible by {SIZE_MULTIPLE}")
    c1, c2, c3 = cfg.level_channels()
    b1, b2, b3 = cfg.blocks_per_level
    bias = cfg.csattn.use_bias
    h2, w2, h4, w4 = h // 2, w // 2, h // 4, w // 4

    def blocks(name: str, level: int, count: int, bh: int, bw: int) -> Iterable[CostRow]:
        bcfg = cfg.block_config(level)
        for i in range(count):
            yield from block_rows(f"{name}.{i}", bcfg, bh, bw)

    rows = [
        _elementwise("img2", "resample", 3 * h2 * w2),
        _elementwise("img4", "resample", 3 * h4 * w4),
        _conv("stem", 3, c1, 3, h, w, bias=bias),
        *blocks("enc1", 1, b1, h, w),
        _conv("down12", c1, c2, 3, h2, w2, bias=bias),
        _conv("embed2", 3, c2, 3, h2, w2, bias=bias),
        _elementwise("concat2", "reshuffle", 2 * c2 * h2 * w2),
        _conv("fuse_in2", 2 * c2, c2, 1, h2, w2, bias=bias),
        *blocks("enc2", 2, b2, h2, w2),
        _conv("down23", c2, c3, 3, h4, w4, bias=bias),
        _conv("embed3", 3, c3, 3, h4, w4, bias=bias),
        _elementwise("concat3", "reshuffle", 2 * c3 * h4 * w4),
        _conv("fuse_in3", 2 * c3, c3, 1, h4, w4, bias=bias),
        *blocks("enc3", 3, b3, h4, w4),
        _conv("head3", c3, 3, 3, h4, w4, bias=bias),
        _elementwise("out4", "add", 3 * h4 * w4),
        _conv("up32", c3, 4 * c2, 1, h4, w4, bias=bias),
        _elementwise("shuffle32", "reshuffle", 4 * c2 * h4 * w4),
        _elementwise("skip2", "reshuffle", 2 * c2 * h2 * w2),
        _conv("fuse_skip2", 2 * c2, c2, 1, h2, w2, bias=bias),
        *blocks("dec2", 2, b2, h2, w2),
        _conv("head2", c2, 3, 3, h2, w2, bias=bias),
        _elementwise("out2", "add", 3 * h2 * w2),
        _conv("up21", c2, 4 * c1, 1, h2, w2, bias=bias),
        _elementwise("shuffle21", "reshuffle", 4 * c1 * h2 * w2),
        _elementwise("skip1", "reshuffle", 2 * c1 * h * w),
        _conv("fuse_skip1", 2 * c1, c1, 1, h, w, bias=bias),
        *blocks("dec1", 1, b1, h, w),
        _conv("head1", c1, 3, 3, h, w, bias=bias),
        _elementwise("out1", "add", 3 * h * w),
    ]
    return CostReport(height=h, width=w, rows=rows)
