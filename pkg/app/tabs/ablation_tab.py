# app/tabs/ablation_tab.py

from __future__ import annotations

from PySide6.QtCore import Qt
from PySide6.QtWidgets import QHeaderView, QLabel, QTableWidget, QTableWidgetItem, QVBoxLayout, QWidget

from app.state import RunState
from csattn.ablation import SUMMARY_COLUMNS


class AblationTab(QWidget):
    """
    summary.csv of an ablation directory as a table.
    """

    def __init__(self, state: RunState):
        super().__init__()
        self.state = state

        layout = QVBoxLayout(self)
        layout.setContentsMargins(12, 12, 12, 12)
        layout.setAlignment(Qt.AlignTop)

        title = QLabel("Ablation Summary")
        title.setStyleSheet("font-size: 18px; font-weight: bold;")
        layout.addWidget(title)

        self.info = QLabel("")
        layout.addWidget(self.info)

        self.table = QTableWidget(0, len(SUMMARY_COLUMNS))
        self.table.setHorizontalHeaderLabels(list(SUMMARY_COLUMNS))
        self.table.horizontalHeader().setSectionResizeMode(QHeaderView.ResizeToContents)
        self.table.setEditTriggers(QTableWidget.NoEditTriggers)
        layout.addWidget(self.table)

    def refresh_from_state(self):
        rows = self.state.summary
        self.info.setText("" if rows else "The loaded directory has no summary.csv.")
        self.table.setRowCount(len(rows))
        for i, row in enumerate(rows):
            for j, column in enumerate(SUMMARY_COLUMNS):
                item = QTableWidgetItem(_fmt(row.get(column, "")))
                if j >= 2:
                    item.setTextAlignment(Qt.AlignRight | Qt.AlignVCenter)
                self.table.setItem(i, j, item)


def _fmt(text: str) -> str:
    try:
        value = float(text)
    except ValueError:
        return text
    if value.is_integer() and abs(value) >= 1:
        return f"{int(value):,}"
    return f"{value:.4g}"
