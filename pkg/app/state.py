"""
app/state.py

RunState holds what the viewer shows for one directory on disk:
- a training run (config.json, metrics.csv, ckpt_*.csat), or
- an ablation directory (summary.csv plus one <row>.csv curve per row)

No widgets here; tabs read from it and redraw.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Union

from csattn.config import TrainConfig, load_config
from csattn.costs import CostReport, count_flops
from csattn.errors import CSAttnError
from csattn.plot import Series, read_csv_column


class RunState:
    """
    Viewer state.

    Structure:
        run_dir      directory that was opened (None when empty)
        config       TrainConfig from config.json, if present
        curves       {label: path of a metrics CSV}
        summary      rows of summary.csv as dicts
        checkpoints  ckpt_*.csat files, sorted by name
    """

    def __init__(self) -> None:
        self.clear()

    def clear(self) -> None:
        self.run_dir: Optional[Path] = None
        self.config: Optional[TrainConfig] = None
        self.curves: dict[str, Path] = {}
        self.summary: list[dict[str, str]] = []
        self.checkpoints: list[Path] = []

    @property
    def is_ablation(self) -> bool:
        return bool(self.summary)

    def load(self, run_dir: Union[str, Path]) -> None:
        run_dir = Path(run_dir)
        if not run_dir.is_dir():
            raise CSAttnError(f"{str(run_dir)!r} is not a directory")
        self.clear()
        self.run_dir = run_dir

        config_path = run_dir / "config.json"
        if config_path.exists():
            self.config = load_config(config_path)

        summary_path = run_dir / "summary.csv"
        if summary_path.exists():
            with summary_path.open("r", newline="", encoding="utf-8") as f:
                self.summary = list(csv.DictReader(f))
            for row in self.summary:
                curve = run_dir / f"{row['row']}.csv"
                if curve.exists():
                    self.curves[row["row"]] = curve

        metrics_path = run_dir / "metrics.csv"
        if metrics_path.exists():
            self.curves[run_dir.name] = metrics_path

        self.checkpoints = sorted(run_dir.glob("ckpt_*.csat"))
        if not self.curves and not self.summary and self.config is None:
            self.clear()
            raise CSAttnError(f"{str(run_dir)!r} holds no metrics.csv, summary.csv or config.json")

    def series(self, column: str) -> list[Series]:
        out = []
        for label, path in self.curves.items():
            s = read_csv_column(path, column)
            s.label = label
            out.append(s)
        return out

    def cost_report(self, height: Optional[int] = None, width: Optional[int] = None) -> Optional[CostReport]:
        if self.config is None:
            return None
        h = height or self.config.patch
        w = width or self.config.patch
        return count_flops(self.config.net, h, w)

    def save(self, path: Union[str, Path]) -> None:
        """Write a JSON digest of the loaded run (paths, config, summary rows)."""
        digest = {
            "run_dir": str(self.run_dir) if self.run_dir else None,
            "config": self.config.to_dict() if self.config else None,
            "curves": {k: str(v) for k, v in self.curves.items()},
            "summary": self.summary,
            "checkpoints": [str(p) for p in self.checkpoints],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(digest, f, indent=2)
