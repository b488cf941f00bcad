"""
app/widgets/curve_widget.py

CurveWidget:
- Pure PySide6 (no matplotlib)
- Draws metric curves into a QPixmap with csattn.plot.paint_curves,
  the same painter code that writes SVG files.
"""

from __future__ import annotations

from typing import Sequence

from PySide6.QtCore import QRectF, Qt
from PySide6.QtGui import QPainter, QPixmap
from PySide6.QtWidgets import QLabel, QSizePolicy

from csattn.plot import Series, paint_curves


class CurveWidget(QLabel):
    """
    Usage:
        curves.update_curves(state.series("loss"), title="loss", log_y=True)
    """

    def __init__(self, parent=None):
        super().__init__(parent)
        self.setAlignment(Qt.AlignCenter)
        self.setMinimumSize(480, 300)
        self.setSizePolicy(QSizePolicy.Ignored, QSizePolicy.Ignored)
        self._series: list[Series] = []
        self._title = ""
        self._log_y = False

    def update_curves(self, series: Sequence[Series], title: str = "", log_y: bool = False) -> None:
        self._series = list(series)
        self._title = title
        self._log_y = log_y
        self._redraw()

    def _redraw(self) -> None:
        width, height = max(self.width(), 480), max(self.height(), 300)
        pix = QPixmap(width, height)
        pix.fill(Qt.white)
        painter = QPainter(pix)
        try:
            paint_curves(painter, QRectF(0, 0, width, height), self._series, self._title, self._title, self._log_y)
        finally:
            painter.end()
        self.setPixmap(pix)

    def resizeEvent(self, event) -> None:
        super().resizeEvent(event)
        if self._series:
            self._redraw()
