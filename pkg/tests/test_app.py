import csv
import json

import pytest

pytest.importorskip("PySide6")

from app.state import RunState
from csattn.ablation import run_ablation
from csattn.errors import CSAttnError


def test_state_loads_training_run(run_dir, tmp_path):
    state = RunState()
    state.load(run_dir)
    assert not state.is_ablation
    assert list(state.curves) == [run_dir.name]
    assert state.config is not None and state.config.total_steps == 4
    names = [p.name for p in state.checkpoints]
    assert "ckpt_init.csat" in names and "ckpt_final.csat" in names

    (series,) = state.series("loss")
    assert series.label == run_dir.name and len(series.y) == 4
    report = state.cost_report()
    assert report.params > 0 and report.flops > 0

    digest = tmp_path / "digest.json"
    state.save(digest)
    doc = json.loads(digest.read_text())
    assert doc["run_dir"] == str(run_dir)
    assert doc["config"]["total_steps"] == 4


def test_state_loads_ablation_directory(tiny_train_config, tmp_path):
    out = tmp_path / "abl"
    run_ablation(tiny_train_config, ["a", "f"], out, train_rows=False)
    with open(out / "a.csv", "w", newline="") as fh:
        csv.writer(fh).writerows([["step", "loss"], [0, 1.0], [1, 0.5]])
    state = RunState()
    state.load(out)
    assert state.is_ablation
    assert [r["row"] for r in state.summary] == ["a", "f"]
    assert list(state.curves) == ["a"]
    assert state.cost_report() is None


def test_state_rejects_unusable_directories(tmp_path):
    state = RunState()
    with pytest.raises(CSAttnError):
        state.load(tmp_path / "missing")
    with pytest.raises(CSAttnError):
        state.load(tmp_path)
    assert state.run_dir is None


def test_main_window_shows_run(qapp, run_dir):
    from app.main_window import MainWindow

    window = MainWindow(run_dir)
    assert window.state.run_dir == run_dir
    assert run_dir.name in window.windowTitle()
    assert not window.curves_tab.isHidden()
    assert window.costs_tab.isHidden()

    window.btn_costs.click()
    assert not window.costs_tab.isHidden()
    assert "params=" in window.costs_tab.text.toPlainText()
    window.close()


def test_main_window_ablation_table(qapp, tiny_train_config, tmp_path):
    from app.main_window import MainWindow

    out = tmp_path / "abl"
    run_ablation(tiny_train_config, ["b", "f"], out, train_rows=False)
    window = MainWindow(out)
    assert not window.ablation_tab.isHidden()
    table = window.ablation_tab.table
    assert table.rowCount() == 2
    assert table.item(1, 0).text() == "f"
    window.close()


def test_main_window_without_run(qapp):
    from app.main_window import MainWindow

    window = MainWindow()
    assert window.state.run_dir is None
    assert "no run" in window.windowTitle()
    assert "No config.json" in window.costs_tab.text.toPlainText()
    window.close()
