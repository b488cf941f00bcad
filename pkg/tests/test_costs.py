import dataclasses

import numpy as np
import pytest

from csattn.block import CSAttnConfig, init_block_params
from csattn.config import desk_net
from csattn.costs import count_block_flops, count_flops
from csattn.errors import ShapeError
from csattn.net import NetConfig, build, count_params
from csattn.nn_ops import count_elements


@pytest.mark.parametrize(
    "cfg",
    [
        desk_net(),
        NetConfig(base_channels=4, blocks_per_level=(1, 2, 1), csattn=CSAttnConfig(channels=4, use_value_nta=False)),
        NetConfig(base_channels=4, blocks_per_level=(1, 1, 1), csattn=CSAttnConfig(channels=4, baseline_stacked=True)),
        NetConfig(base_channels=4, blocks_per_level=(1, 1, 1), csattn=CSAttnConfig(channels=4, attention_count=2, use_bias=False)),
    ],
)
def test_analytic_params_match_built_network(cfg):
    assert count_flops(cfg, 32, 32).params == count_params(build(cfg, seed=0))


def test_block_params_match_built_block():
    for cfg in (
        CSAttnConfig(channels=8, base_heads=2),
        CSAttnConfig(channels=8, use_spatial_scaling=False),
        CSAttnConfig(channels=8, attention_count=1),
        CSAttnConfig(channels=8, use_aggregation=False, use_value_nta=False),
    ):
        params = init_block_params(cfg, np.random.default_rng(0))
        assert count_block_flops(cfg, 16, 16).params == count_elements(params)


def test_flops_linear_in_area():
    cfg = desk_net()
    base = count_flops(cfg, 32, 32)
    assert count_flops(cfg, 64, 32).flops == 2 * base.flops
    assert count_flops(cfg, 64, 64).flops == 4 * base.flops


def test_stage_score_ratio_from_scaling():
    cfg = CSAttnConfig(channels=8)
    scaled = count_block_flops(cfg, 16, 16)
    full = count_block_flops(dataclasses.replace(cfg, use_spatial_scaling=False), 16, 16)
    assert full.row("block.stage2.score").macs == 4 * scaled.row("block.stage2.score").macs
    assert full.row("block.stage3.score").macs == 16 * scaled.row("block.stage3.score").macs
    # values stay at full resolution
    assert full.row("block.stage2.apply").macs == scaled.row("block.stage2.apply").macs


def test_scaling_saves_activation_memory():
    cfg = desk_net()
    off = dataclasses.replace(cfg, csattn=dataclasses.replace(cfg.csattn, use_spatial_scaling=False))
    assert count_flops(cfg, 32, 32).peak_activation_bytes < count_flops(off, 32, 32).peak_activation_bytes


def test_component_cost_signs():
    full = CSAttnConfig(channels=8, base_heads=2)
    ref = count_block_flops(full, 16, 16)

    def cost(**changes):
        return count_block_flops(dataclasses.replace(full, **changes), 16, 16)

    for changes in ({"use_nonlinear_activation": False}, {"intra_residual": False}):
        row = cost(**changes)
        assert (row.params, row.flops) == (ref.params, ref.flops)
    for changes in ({"use_value_nta": False}, {"use_aggregation": False}):
        row = cost(**changes)
        assert row.params < ref.params and row.flops < ref.flops

    flat = cost(progressive_heads=False)
    for kind in ("conv1x1", "depthwise"):
        assert flat.by_kind(kind).macs == ref.by_kind(kind).macs
        assert flat.by_kind(kind).params == ref.by_kind(kind).params


def test_flat_heads_differ_only_in_alpha_and_attention_products():
    full = CSAttnConfig(channels=8, base_heads=2)
    ref = count_block_flops(full, 16, 16)
    flat = count_block_flops(dataclasses.replace(full, progressive_heads=False), 16, 16)
    assert [r.name for r in flat.rows] == [r.name for r in ref.rows]
    for a, b in zip(ref.rows, flat.rows):
        if a.kind in ("alpha", "attn_score", "attn_apply", "softmax") and not a.name.startswith("block.stage1"):
            continue
        assert (a.params, a.macs, a.activations) == (b.params, b.macs, b.activations), a.name

    # heads (2, 4, 4) against (2, 2, 2): one alpha per head, d*d*heads = C*C/heads per token
    assert ref.params - flat.params == 2 * (4 - 2)
    for stage, t_qk in (("stage2", 8 * 8), ("stage3", 4 * 4)):
        assert flat.row(f"block.{stage}.score").macs == 2 * ref.row(f"block.{stage}.score").macs == 32 * t_qk
        assert flat.row(f"block.{stage}.apply").macs == 2 * ref.row(f"block.{stage}.apply").macs == 32 * 256
    assert flat.flops - ref.flops == 16 * (64 + 256) + 16 * (16 + 256)


def test_flat_heads_desk_network_deltas():
    full = desk_net()
    flat = dataclasses.replace(full, csattn=dataclasses.replace(full.csattn, progressive_heads=False))
    ref, row = count_flops(full, 32, 32), count_flops(flat, 32, 32)
    assert (ref.params, row.params) == (184_423, 184_411)
    assert (ref.flops, row.flops) == (11_489_280, 11_943_936)
    # six blocks, each one extra alpha in stages 2 and 3 and C*C/2 more MACs per attended token
    assert ref.params - row.params == 6 * 2
    assert row.flops - ref.flops == 3 * 2 * (40_960 + 34_816)


def test_softmax_kept_out_of_flops():
    report = count_block_flops(CSAttnConfig(channels=8), 16, 16)
    assert report.softmax_ops > 0
    assert report.flops == sum(r.macs for r in report.rows if r.kind != "softmax")


def test_report_text_and_csv(tmp_path):
    report = count_flops(desk_net(), 32, 32)
    text = report.to_text(per_layer=True)
    assert "params=" in text and "enc1.0.stage2.score" in text
    path = tmp_path / "cost.csv"
    report.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "name,kind,params,macs,activations"
    assert len(lines) == len(report.rows) + 1


def test_indivisible_size_rejected():
    with pytest.raises(ShapeError):
        count_flops(desk_net(), 30, 32)
