# app/main_window.py

from pathlib import Path

from PySide6.QtCore import Qt
from PySide6.QtWidgets import (
    QMainWindow,
    QWidget,
    QVBoxLayout,
    QHBoxLayout,
    QPushButton,
    QFileDialog,
    QMessageBox,
    QLabel,
)

from app.state import RunState
from app.tabs.ablation_tab import AblationTab
from app.tabs.costs_tab import CostsTab
from app.tabs.curves_tab import CurvesTab
from csattn.errors import CSAttnError


class MainWindow(QMainWindow):
    """
    Top-level results viewer.

    Layout:
        [ Curves | Costs | Ablation ] (button bar)
        -----------------------------------------
        [ stacked tab widgets                 ]
    """

    def __init__(self, run_dir: str | Path | None = None):
        super().__init__()
        self.state = RunState()

        self.setWindowTitle("CSAttn Runs")
        self.resize(1000, 700)

        central = QWidget(self)
        self.setCentralWidget(central)
        self.main_layout = QVBoxLayout(central)
        self.main_layout.setContentsMargins(6, 6, 6, 6)

        nav_layout = QHBoxLayout()
        self.main_layout.addLayout(nav_layout)

        self.btn_curves = QPushButton("Curves")
        self.btn_costs = QPushButton("Costs")
        self.btn_ablation = QPushButton("Ablation")

        for btn in (self.btn_curves, self.btn_costs, self.btn_ablation):
            btn.setFixedHeight(30)
            nav_layout.addWidget(btn)

        nav_layout.addStretch(1)

        # Shows the opened directory
        self.run_label = QLabel("")
        self.run_label.setAlignment(Qt.AlignRight | Qt.AlignVCenter)
        self.run_label.setStyleSheet("font-weight: bold; padding-right: 8px;")
        nav_layout.addWidget(self.run_label)

        self.stack = QWidget()
        self.stack_layout = QVBoxLayout(self.stack)
        self.stack_layout.setContentsMargins(0, 6, 0, 0)
        self.main_layout.addWidget(self.stack)

        self.curves_tab = CurvesTab(self.state)
        self.costs_tab = CostsTab(self.state)
        self.ablation_tab = AblationTab(self.state)

        # Manual "stack": show/hide tab widgets
        for tab in self.tabs():
            self.stack_layout.addWidget(tab)
        self._show_only(self.curves_tab)

        self.btn_curves.clicked.connect(lambda: self._switch_to(self.curves_tab))
        self.btn_costs.clicked.connect(lambda: self._switch_to(self.costs_tab))
        self.btn_ablation.clicked.connect(lambda: self._switch_to(self.ablation_tab))

        self._build_menu_bar()

        if run_dir is not None:
            self.open_run(run_dir)
        else:
            self.refresh_all_tabs()

    def tabs(self) -> tuple[QWidget, ...]:
        return (self.curves_tab, self.costs_tab, self.ablation_tab)

    # ------------------------------------------------------------------ Utils

    def _show_only(self, widget: QWidget):
        for tab in self.tabs():
            tab.setVisible(tab is widget)

    def _switch_to(self, widget: QWidget):
        self._show_only(widget)
        widget.refresh_from_state()

    # ------------------------------------------------------------------ Menus

    def _build_menu_bar(self):
        menubar = self.menuBar()

        file_menu = menubar.addMenu("&File")

        act_open = file_menu.addAction("Open Run...")
        act_save = file_menu.addAction("Save Digest...")
        file_menu.addSeparator()
        act_quit = file_menu.addAction("Quit")

        act_open.triggered.connect(self._open_run_dialog)
        act_save.triggered.connect(self._save_digest_dialog)
        act_quit.triggered.connect(self.close)

    # ------------------------------------------------------------------ State helpers

    def refresh_all_tabs(self):
        name = self.state.run_dir.name if self.state.run_dir else "no run"
        self.setWindowTitle(f"CSAttn Runs - {name}")
        self.run_label.setText(f"Run: {name}")
        for tab in self.tabs():
            tab.refresh_from_state()

    def open_run(self, run_dir: str | Path) -> bool:
        try:
            self.state.load(run_dir)
        except (CSAttnError, OSError) as e:
            QMessageBox.critical(self, "Error Loading", str(e))
            self.state.clear()
            self.refresh_all_tabs()
            return False
        self.refresh_all_tabs()
        self._switch_to(self.ablation_tab if self.state.is_ablation else self.curves_tab)
        return True

    # ---------------------------- Open / Save --------------------

    def _open_run_dialog(self):
        path_str = QFileDialog.getExistingDirectory(self, "Open Run")
        if path_str:
            self.open_run(path_str)

    def _save_digest_dialog(self):
        if self.state.run_dir is None:
            QMessageBox.information(self, "Nothing to save", "Open a run directory first.")
            return

        path_str, _ = QFileDialog.getSaveFileName(
            self,
            "Save Digest",
            f"{self.state.run_dir.name}.json",
            "JSON Files (*.json)",
        )
        if not path_str:
            return

        path = Path(path_str)
        if path.suffix.lower() != ".json":
            path = path.with_suffix(".json")

        try:
            self.state.save(path)
            QMessageBox.information(self, "Saved", f"Digest saved to:\n{path}")
        except OSError as e:
            QMessageBox.critical(self, "Error Saving", str(e))
