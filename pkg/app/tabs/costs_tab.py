# app/tabs/costs_tab.py

from __future__ import annotations

from PySide6.QtCore import Qt
from PySide6.QtWidgets import QHBoxLayout, QLabel, QPushButton, QSpinBox, QTextEdit, QVBoxLayout, QWidget

from app.state import RunState
from csattn.net import SIZE_MULTIPLE


class CostsTab(QWidget):
    """
    Analytic parameter / FLOPs / activation-memory report for the loaded
    configuration at a chosen input size.
    """

    def __init__(self, state: RunState):
        super().__init__()
        self.state = state

        layout = QVBoxLayout(self)
        layout.setContentsMargins(12, 12, 12, 12)
        layout.setAlignment(Qt.AlignTop)

        title = QLabel("Costs")
        title.setStyleSheet("font-size: 18px; font-weight: bold;")
        layout.addWidget(title)

        controls = QHBoxLayout()
        layout.addLayout(controls)
        self.height_box = self._size_box()
        self.width_box = self._size_box()
        controls.addWidget(QLabel("H:"))
        controls.addWidget(self.height_box)
        controls.addWidget(QLabel("W:"))
        controls.addWidget(self.width_box)
        self.btn_count = QPushButton("Count")
        controls.addWidget(self.btn_count)
        controls.addStretch(1)

        self.text = QTextEdit()
        self.text.setReadOnly(True)
        self.text.setLineWrapMode(QTextEdit.NoWrap)
        self.text.setStyleSheet("font-family: monospace; font-size: 13px;")
        layout.addWidget(self.text)

        self.btn_count.clicked.connect(self._count)

    @staticmethod
    def _size_box() -> QSpinBox:
        box = QSpinBox()
        box.setRange(SIZE_MULTIPLE, 4096)
        box.setSingleStep(SIZE_MULTIPLE)
        box.setValue(256)
        return box

    def _count(self):
        report = self.state.cost_report(self.height_box.value(), self.width_box.value())
        if report is None:
            self.text.setPlainText("No config.json in the loaded directory.")
            return
        self.text.setPlainText(report.to_text(per_layer=True))

    def refresh_from_state(self):
        if self.state.config is not None:
            self.height_box.setValue(self.state.config.patch)
            self.width_box.setValue(self.state.config.patch)
        self._count()
