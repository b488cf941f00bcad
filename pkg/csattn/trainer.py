"""
csattn/trainer.py

Training loop and dataset evaluation.

Each step: forward_multiscale -> multiscale_loss -> backward -> AdamW with
the cosine learning rate. A run directory receives:

    config.json          resolved TrainConfig
    ckpt_init.csat       parameters before the first update
    ckpt_<step>.csat     every checkpoint_every steps
    ckpt_final.csat      after the last step
    ckpt_abort.csat      last good parameters if a non-finite value aborts the run
    metrics.csv          one row per step: step, lr, loss, l1, freq, psnr, ssim, mae

Every checkpoint has a <name>.json sidecar with the NetConfig.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from tqdm import tqdm

from csattn.checkpoint import save_checkpoint
from csattn.config import LossWeights, TrainConfig, save_config
from csattn.data import BatchPrefetcher, PairDataset, dataset_for
from csattn.errors import NonFiniteError
from csattn.losses import multiscale_loss
from csattn.metrics import image_metrics
from csattn.net import NetParams, build, downsample_image, forward_multiscale, infer_image
from csattn.optim import AdamW, cosine_lr
from csattn.tensor import Tape, Tensor, precision

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "lr", "loss", "l1", "freq", "psnr", "ssim", "mae")


@dataclass
class TrainResult:
    out_dir: Path
    final_checkpoint: Path
    metrics_csv: Path
    losses: list[float] = field(default_factory=list)
    train_metrics: dict[str, float] = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        """Mean loss over the last 5% of steps (at least one)."""
        tail = max(1, len(self.losses) // 20)
        return float(np.mean(self.losses[-tail:]))


def compute_loss(
    params: NetParams,
    degraded: np.ndarray,
    clean: np.ndarray,
    weights: LossWeights,
    terms: Optional[dict] = None,
) -> tuple[Tensor, Tensor]:
    """Scalar multiscale loss and the full-scale output for one batch."""
    with precision(params.stem.weight.dtype.type):
        x = Tensor(degraded)
        gt1 = Tensor(clean)
        gts = (gt1, downsample_image(gt1, 2), downsample_image(gt1, 4))
        outs = forward_multiscale(params, x)
        return multiscale_loss(outs, gts, weights, terms), outs[0]


def training_step(
    params: NetParams,
    optimizer: AdamW,
    degraded: np.ndarray,
    clean: np.ndarray,
    weights: LossWeights,
    lr: float,
) -> tuple[float, dict, np.ndarray]:
    terms: dict = {}
    optimizer.zero_grad()
    with Tape() as tape:
        loss, out1 = compute_loss(params, degraded, clean, weights, terms)
    tape.backward(loss)
    optimizer.step(lr)
    return loss.item(), terms, out1.data


def evaluate(params: NetParams, dataset: PairDataset, y_channel: bool = False) -> dict[str, float]:
    """PSNR / SSIM / MAE of full-image restorations, averaged over the dataset."""
    rows = [image_metrics(infer_image(params, d), c, y_channel=y_channel) for d, c in zip(dataset.degraded, dataset.clean)]
    return {key: float(np.mean([r[key] for r in rows])) for key in ("psnr", "ssim", "mae")}


def train(cfg: TrainConfig, progress: bool = True) -> TrainResult:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")

    params = build(cfg.net, seed=cfg.seed)
    save_checkpoint(out / "ckpt_init.csat", params, cfg.net)
    dataset = dataset_for(cfg)
    optimizer = AdamW.from_config(params, cfg)
    metrics_path = out / "metrics.csv"
    result = TrainResult(out_dir=out, final_checkpoint=out / "ckpt_final.csat", metrics_csv=metrics_path)

    log.info(
        "training %d steps, batch %d, patch %d on %d pairs -> %s",
        cfg.total_steps, cfg.batch, cfg.patch, len(dataset), out,
    )
    with open(metrics_path, "w", newline="", encoding="utf-8") as fh, \
            BatchPrefetcher(dataset, cfg, 0, cfg.total_steps) as batches, \
            tqdm(total=cfg.total_steps, desc="train", unit="step", disable=not progress) as bar:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for step, (degraded, clean) in batches:
            lr = cosine_lr(step, cfg)
            try:
                loss, terms, out1 = training_step(params, optimizer, degraded, clean, cfg.loss, lr)
            except NonFiniteError:
                save_checkpoint(out / "ckpt_abort.csat", params, cfg.net)
                log.error("non-finite value at step %d; last good parameters saved to %s", step, out / "ckpt_abort.csat")
                raise
            m = image_metrics(out1, clean)
            writer.writerow([step, lr, loss, terms["l1"], terms["freq"], m["psnr"], m["ssim"], m["mae"]])
            result.losses.append(loss)

            done = step + 1
            if done % cfg.log_every == 0 or done == cfg.total_steps:
                fh.flush()
                log.info("step %d/%d lr=%.3e loss=%.5f psnr=%.2f", done, cfg.total_steps, lr, loss, m["psnr"])
            if done % cfg.checkpoint_every == 0 and done < cfg.total_steps:
                save_checkpoint(out / f"ckpt_{done:06d}.csat", params, cfg.net)
            bar.set_postfix(loss=f"{loss:.4f}")
            bar.update(1)

    save_checkpoint(result.final_checkpoint, params, cfg.net)
    result.train_metrics = evaluate(params, dataset)
    log.info(
        "finished: final loss %.5f, train PSNR %.2f dB, SSIM %.4f, MAE %.4f",
        result.final_loss, result.train_metrics["psnr"], result.train_metrics["ssim"], result.train_metrics["mae"],
    )
    return result
