import csv
import dataclasses
from pathlib import Path

import numpy as np
import pytest

from csattn import trainer
from csattn.checkpoint import load_network
from csattn.config import load_config
from csattn.data import batch_for_step, dataset_for
from csattn.errors import NonFiniteError
from csattn.trainer import METRIC_COLUMNS, TrainResult, compute_loss, evaluate, train


def test_train_writes_run_directory(tiny_train_config):
    result = train(tiny_train_config, progress=False)
    out = result.out_dir
    for name in ("config.json", "ckpt_init.csat", "ckpt_000005.csat", "ckpt_final.csat", "metrics.csv"):
        assert (out / name).exists(), name
        if name.endswith(".csat"):
            assert (out / f"{name}.json").exists()
    assert not (out / "ckpt_000010.csat").exists()
    assert load_config(out / "config.json") == tiny_train_config

    with open(result.metrics_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == METRIC_COLUMNS
    assert [int(r[0]) for r in rows[1:]] == list(range(10))
    assert float(rows[1][1]) == tiny_train_config.lr_init
    assert [float(r[2]) for r in rows[1:]] == pytest.approx(result.losses)

    assert len(result.losses) == 10 and all(np.isfinite(result.losses))
    assert set(result.train_metrics) == {"psnr", "ssim", "mae"}


def test_training_is_deterministic(tiny_train_config, tmp_path):
    first = train(tiny_train_config, progress=False)
    second = train(dataclasses.replace(tiny_train_config, out_dir=str(tmp_path / "again")), progress=False)
    assert first.losses == second.losses
    assert (first.out_dir / "ckpt_final.csat").read_bytes() == (second.out_dir / "ckpt_final.csat").read_bytes()


def test_first_loss_matches_initial_checkpoint(tiny_train_config):
    cfg = tiny_train_config
    result = train(cfg, progress=False)
    params = load_network(result.out_dir / "ckpt_init.csat")
    degraded, clean = batch_for_step(dataset_for(cfg), cfg, 0)
    loss, out1 = compute_loss(params, degraded, clean, cfg.loss)
    assert loss.item() == pytest.approx(result.losses[0], rel=1e-6)
    assert out1.shape == (cfg.batch, 3, cfg.patch, cfg.patch)


def test_non_finite_step_saves_abort_checkpoint(tiny_train_config, monkeypatch):
    def explode(*args, **kwargs):
        raise NonFiniteError("boom")

    monkeypatch.setattr(trainer, "training_step", explode)
    with pytest.raises(NonFiniteError):
        train(tiny_train_config, progress=False)
    out = Path(tiny_train_config.out_dir)
    assert (out / "ckpt_abort.csat").exists()
    assert not (out / "ckpt_final.csat").exists()


def test_final_loss_averages_the_tail():
    result = TrainResult(out_dir=None, final_checkpoint=None, metrics_csv=None, losses=[10.0] * 38 + [1.0, 3.0])
    assert result.final_loss == 2.0
    assert TrainResult(None, None, None, [4.0]).final_loss == 4.0


def test_evaluate_reports_metrics(tiny_train_config):
    result = train(tiny_train_config, progress=False)
    params = load_network(result.final_checkpoint)
    scores = evaluate(params, dataset_for(tiny_train_config))
    assert scores == pytest.approx(result.train_metrics)
    assert 0.0 <= scores["mae"] <= 1.0
