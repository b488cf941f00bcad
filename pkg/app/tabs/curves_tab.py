# app/tabs/curves_tab.py

from __future__ import annotations

from PySide6.QtCore import Qt
from PySide6.QtWidgets import QCheckBox, QComboBox, QHBoxLayout, QLabel, QVBoxLayout, QWidget

from app.state import RunState
from app.widgets.curve_widget import CurveWidget
from csattn.trainer import METRIC_COLUMNS


class CurvesTab(QWidget):
    """
    Learning curves of the loaded run: one line per metrics CSV
    (a single run, or every row of an ablation directory).
    """

    def __init__(self, state: RunState):
        super().__init__()
        self.state = state

        layout = QVBoxLayout(self)
        layout.setContentsMargins(12, 12, 12, 12)

        title = QLabel("Learning Curves")
        title.setStyleSheet("font-size: 18px; font-weight: bold;")
        layout.addWidget(title)

        controls = QHBoxLayout()
        layout.addLayout(controls)
        controls.addWidget(QLabel("Column:"))
        self.column = QComboBox()
        self.column.addItems([c for c in METRIC_COLUMNS if c != "step"])
        self.column.setCurrentText("loss")
        controls.addWidget(self.column)
        self.log_y = QCheckBox("log y")
        self.log_y.setChecked(True)
        controls.addWidget(self.log_y)
        controls.addStretch(1)

        self.curves = CurveWidget()
        layout.addWidget(self.curves, 1)

        self.empty = QLabel("Open a run directory (File > Open Run...).")
        self.empty.setAlignment(Qt.AlignCenter)
        layout.addWidget(self.empty)

        self.column.currentTextChanged.connect(lambda _: self.refresh_from_state())
        self.log_y.toggled.connect(lambda _: self.refresh_from_state())

    def refresh_from_state(self):
        has_curves = bool(self.state.curves)
        self.empty.setVisible(not has_curves)
        self.curves.setVisible(has_curves)
        if has_curves:
            column = self.column.currentText()
            self.curves.update_curves(self.state.series(column), title=column, log_y=self.log_y.isChecked())
