"""
csattn/plot.py

Line charts of metric CSVs, drawn with QPainter (no matplotlib).

paint_curves() draws onto any QPaintDevice: QSvgGenerator for files written
by the `plot` subcommand, QPixmap for the results viewer.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

from PySide6.QtCore import QPointF, QRectF, QSize, Qt
from PySide6.QtGui import QColor, QFont, QPainter, QPen, QPolygonF
from PySide6.QtSvg import QSvgGenerator
from PySide6.QtWidgets import QApplication

from csattn.errors import CSAttnError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf")
_APP = None


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]


def ensure_gui_app() -> QApplication:
    """Text rendering needs a Qt application; start an offscreen one if none exists."""
    global _APP
    app = QApplication.instance()
    if app is None:
        os.environ.setdefault("QT_QPA_PLATFORM", "offscreen")
        app = _APP = QApplication([])
    return app


def read_csv_column(path: Union[str, Path], column: str, x_column: str = "step") -> Series:
    """Finite values of one column; x is the step column or the row index."""
    xs, ys = [], []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise CSAttnError(f"{str(path)!r} has no column {column!r}")
        for i, row in enumerate(reader):
            try:
                y = float(row[column])
                x = float(row[x_column]) if x_column in row else float(i)
            except (TypeError, ValueError):
                continue
            if math.isfinite(y):
                xs.append(x)
                ys.append(y)
    return Series(Path(path).stem, xs, ys)


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=mag * 10)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step) + 1)]


def paint_curves(
    painter: QPainter,
    rect: QRectF,
    series: Sequence[Series],
    title: str = "",
    y_label: str = "",
    log_y: bool = False,
) -> None:
    painter.fillRect(rect, Qt.white)
    painter.setRenderHint(QPainter.Antialiasing)
    series = [s for s in series if s.x]
    if not series:
        painter.drawText(rect, Qt.AlignCenter, "No data")
        return

    def ty(v: float) -> float:
        return math.log10(v) if log_y else v

    if log_y:
        series = [Series(s.label, [x for x, y in zip(s.x, s.y) if y > 0], [y for y in s.y if y > 0]) for s in series]
    xs = [x for s in series for x in s.x]
    ys = [ty(y) for s in series for y in s.y]
    if not xs:
        painter.drawText(rect, Qt.AlignCenter, "No positive data")
        return
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    plot = rect.adjusted(70, 40, -20, -50)

    def px(x: float) -> float:
        return plot.left() + (x - x_lo) / (x_hi - x_lo) * plot.width()

    def py(v: float) -> float:
        return plot.bottom() - (v - y_lo) / (y_hi - y_lo) * plot.height()

    # ----- Axes and ticks
    font = QFont()
    font.setPointSize(9)
    painter.setFont(font)
    painter.setPen(QPen(QColor("#444444"), 1))
    painter.drawRect(plot)
    for tick in _nice_ticks(x_lo, x_hi):
        painter.drawLine(QPointF(px(tick), plot.bottom()), QPointF(px(tick), plot.bottom() + 4))
        painter.drawText(QRectF(px(tick) - 40, plot.bottom() + 6, 80, 16), Qt.AlignHCenter, f"{tick:g}")
    for tick in _nice_ticks(y_lo, y_hi):
        label = f"{10 ** tick:.3g}" if log_y else f"{tick:.3g}"
        painter.drawLine(QPointF(plot.left() - 4, py(tick)), QPointF(plot.left(), py(tick)))
        painter.drawText(QRectF(plot.left() - 68, py(tick) - 8, 62, 16), Qt.AlignRight | Qt.AlignVCenter, label)
    painter.drawText(QRectF(plot.left(), plot.bottom() + 24, plot.width(), 18), Qt.AlignHCenter, "step")
    painter.drawText(QRectF(rect.left(), rect.top() + 4, rect.width(), 20), Qt.AlignHCenter, title)
    if y_label:
        painter.drawText(QRectF(rect.left() + 4, rect.top() + 20, 120, 16), Qt.AlignLeft, y_label)

    # ----- Curves and legend
    for i, s in enumerate(series):
        color = QColor(PALETTE[i % len(PALETTE)])
        painter.setPen(QPen(color, 1.5))
        painter.drawPolyline(QPolygonF([QPointF(px(x), py(ty(y))) for x, y in zip(s.x, s.y)]))
        ly = plot.top() + 8 + 16 * i
        painter.drawLine(QPointF(plot.right() - 140, ly), QPointF(plot.right() - 120, ly))
        painter.setPen(QColor("#222222"))
        painter.drawText(QRectF(plot.right() - 115, ly - 8, 110, 16), Qt.AlignLeft | Qt.AlignVCenter, s.label)


def write_svg(
    path: Union[str, Path],
    series: Sequence[Series],
    title: str = "",
    y_label: str = "",
    log_y: bool = False,
    size: tuple[int, int] = (800, 480),
) -> Path:
    ensure_gui_app()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    generator = QSvgGenerator()
    generator.setFileName(str(path))
    generator.setSize(QSize(*size))
    generator.setViewBox(QRectF(0, 0, *size))
    generator.setTitle(title)
    painter = QPainter(generator)
    try:
        paint_curves(painter, QRectF(0, 0, *size), series, title, y_label, log_y)
    finally:
        painter.end()
    return path


def plot_csvs(
    paths: Sequence[Union[str, Path]],
    column: str,
    out: Union[str, Path],
    log_y: bool = False,
) -> Path:
    """One curve per CSV file, labelled by file stem."""
    series = [read_csv_column(p, column) for p in paths]
    return write_svg(out, series, title=column, y_label=column, log_y=log_y)
