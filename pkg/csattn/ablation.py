"""
csattn/ablation.py

Component ablation matrix. Each row switches one part of the CSAttn block off
(or swaps it) relative to the full model "f", trains at the same budget and
reports costs next to the learned result.

    a          no nonlinear activation (identity in NTA and scaling paths)
    b          no value nonlinear transformation adjustment
    c          no intra attention aggregation
    d          no progressive heads (N, N, N)
    e          no intra residual connection
    f          full model
    stacked    three stacked single attentions
    att1/att2  one or two continuous attentions
    noscale    Q/K kept at full resolution
    relu, leakyrelu, silu   GELU replaced by that activation
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from csattn.block import CSAttnConfig
from csattn.config import TrainConfig
from csattn.costs import CostReport, count_flops
from csattn.errors import ConfigError
from csattn.trainer import train

log = logging.getLogger(__name__)

Modifier = Callable[[CSAttnConfig], CSAttnConfig]


def _set(**changes) -> Modifier:
    return lambda cfg: dataclasses.replace(cfg, **changes)


ROWS: dict[str, tuple[str, Modifier]] = {
    "a": ("w/o nonlinear activation", _set(use_nonlinear_activation=False)),
    "b": ("w/o value NTA", _set(use_value_nta=False)),
    "c": ("w/o intra aggregation", _set(use_aggregation=False)),
    "d": ("w/o progressive heads", _set(progressive_heads=False)),
    "e": ("w/o intra residual", _set(intra_residual=False)),
    "f": ("full model", _set()),
    "stacked": ("stacked 3 attentions", _set(baseline_stacked=True)),
    "att1": ("1 continuous attention", _set(attention_count=1)),
    "att2": ("2 continuous attentions", _set(attention_count=2)),
    "noscale": ("w/o spatial scaling", _set(use_spatial_scaling=False)),
    "relu": ("ReLU activation", _set(activation="relu")),
    "leakyrelu": ("LeakyReLU activation", _set(activation="leakyrelu")),
    "silu": ("SiLU activation", _set(activation="silu")),
}
DEFAULT_ROWS = ("a", "b", "c", "d", "e", "f", "stacked")
SUMMARY_COLUMNS = ("row", "label", "params", "flops", "activation_bytes", "final_loss", "psnr", "ssim", "mae")


@dataclass
class AblationResult:
    row: str
    label: str
    config: TrainConfig
    cost: CostReport
    final_loss: Optional[float] = None
    metrics: Optional[dict] = None

    def summary_row(self) -> list:
        m = self.metrics or {}
        return [
            self.row, self.label, self.cost.params, self.cost.flops, self.cost.peak_activation_bytes,
            "" if self.final_loss is None else self.final_loss,
            m.get("psnr", ""), m.get("ssim", ""), m.get("mae", ""),
        ]


def parse_rows(text: str) -> list[str]:
    rows = [r.strip() for r in text.split(",") if r.strip()]
    unknown = [r for r in rows if r not in ROWS]
    if unknown or not rows:
        raise ConfigError(f"unknown ablation row(s) {unknown!r}; choose from {sorted(ROWS)}")
    return rows


def row_config(cfg: TrainConfig, row: str, out_dir: Path) -> TrainConfig:
    if row not in ROWS:
        raise ConfigError(f"unknown ablation row {row!r}")
    _, modify = ROWS[row]
    net = dataclasses.replace(cfg.net, csattn=modify(cfg.net.csattn))
    return dataclasses.replace(cfg, net=net, out_dir=str(out_dir / row))


def run_ablation(
    cfg: TrainConfig,
    rows: Sequence[str] = DEFAULT_ROWS,
    out_dir: Optional[Path] = None,
    train_rows: bool = True,
    progress: bool = True,
) -> list[AblationResult]:
    """
    Cost every row at the training patch size and, unless train_rows is off,
    train it. Writes <out>/<row>.csv learning curves and <out>/summary.csv.
    """
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for row in rows:
        rcfg = row_config(cfg, row, out)
        rcfg.validate()
        cost = count_flops(rcfg.net, cfg.patch, cfg.patch)
        result = AblationResult(row=row, label=ROWS[row][0], config=rcfg, cost=cost)
        log.info("row %s (%s): %s", row, result.label, cost.summary())
        if train_rows:
            run = train(rcfg, progress=progress)
            shutil.copyfile(run.metrics_csv, out / f"{row}.csv")
            result.final_loss = run.final_loss
            result.metrics = run.train_metrics
        results.append(result)

    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for result in results:
            writer.writerow(result.summary_row())
    return results
