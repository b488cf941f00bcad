import json

import numpy as np
import pytest

from csattn.cli import main
from csattn.config import save_config
from csattn.net import build, count_params


@pytest.fixture
def config_file(tiny_train_config, tmp_path):
    path = tmp_path / "tiny.json"
    save_config(tiny_train_config, path)
    return path


@pytest.mark.parametrize("argv", [[], ["bogus"], ["count", "--hw", "16"], ["gradcheck", "--module", "conv"]])
def test_usage_errors_exit_with_two(argv):
    assert main(argv) == 2


def test_bad_config_exits_with_one(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"total_steps": -3}))
    assert main(["count", "--config", str(path)]) == 1
    assert main(["count", "--config", str(tmp_path / "missing.json")]) == 1


def test_count_verify_matches_built_network(config_file, tiny_train_config, capsys, tmp_path):
    csv_path = tmp_path / "rows.csv"
    assert main(["count", "--config", str(config_file), "--hw", "32", "48", "--verify", "--csv", str(csv_path)]) == 0
    out = capsys.readouterr().out
    built = count_params(build(tiny_train_config.net, seed=tiny_train_config.seed))
    assert f"built network parameters: {built:,}" in out
    assert csv_path.read_text().startswith("name,kind,params,macs,activations")


def test_count_rejects_indivisible_size(config_file):
    assert main(["count", "--config", str(config_file), "--hw", "30", "32"]) == 1


def test_gradcheck_tensor_module(capsys):
    assert main(["gradcheck", "--module", "tensor"]) == 0
    assert "checks passed" in capsys.readouterr().out


def test_train_then_evaluate(config_file, tmp_path, capsys):
    out_dir = tmp_path / "cli_run"
    assert main(["-q", "train", "--config", str(config_file), "--out", str(out_dir), "--steps", "4", "--no-progress"]) == 0
    assert "final loss" in capsys.readouterr().out
    ckpt = out_dir / "ckpt_final.csat"
    assert ckpt.exists()

    metrics_csv = tmp_path / "eval.csv"
    assert main(["-q", "evaluate", "--ckpt", str(ckpt), "--config", str(config_file), "--synth", "2", "--csv", str(metrics_csv)]) == 0
    assert "PSNR" in capsys.readouterr().out
    assert metrics_csv.read_text().splitlines()[0] == "images,mode,psnr,ssim,mae"


def test_corrupt_checkpoint_exits_with_one(tmp_path):
    bad = tmp_path / "bad.csat"
    bad.write_bytes(b"CSAT" + b"\0" * 20)
    assert main(["evaluate", "--ckpt", str(bad), "--synth", "1"]) == 1


def test_infer_keeps_image_size(tmp_path, tiny_train_config):
    pytest.importorskip("PySide6")
    from csattn.checkpoint import save_checkpoint
    from csattn.imageio import read_png, write_png

    ckpt = save_checkpoint(tmp_path / "net.csat", build(tiny_train_config.net, seed=0), tiny_train_config.net)
    src = tmp_path / "in.png"
    dst = tmp_path / "out.png"
    write_png(src, np.random.default_rng(0).random((3, 37, 41)))
    assert main(["infer", "--ckpt", str(ckpt), "--in", str(src), "--out", str(dst)]) == 0
    assert read_png(dst).shape == (3, 37, 41)


def test_plot_writes_svg(tmp_path):
    pytest.importorskip("PySide6")
    curve = tmp_path / "m.csv"
    curve.write_text("step,loss\n0,1.0\n1,0.5\n2,0.25\n")
    out = tmp_path / "loss.svg"
    assert main(["plot", "--csv", str(curve), "--out", str(out), "--log-y"]) == 0
    assert "<svg" in out.read_text()
