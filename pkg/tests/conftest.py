import os
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

# PNG, SVG and viewer tests run without a display
os.environ.setdefault("QT_QPA_PLATFORM", "offscreen")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_train_config(tmp_path):
    """Smallest configuration that exercises every stage of the trainer."""
    import dataclasses

    from csattn.block import CSAttnConfig
    from csattn.config import RainSynthSpec, TrainConfig
    from csattn.net import NetConfig

    return TrainConfig(
        total_steps=10,
        patch=16,
        batch=2,
        seed=3,
        net=NetConfig(base_channels=4, blocks_per_level=(1, 1, 1), csattn=CSAttnConfig(channels=4)),
        synth=dataclasses.replace(RainSynthSpec(), size=16, streak_count=(4, 8)),
        num_pairs=2,
        out_dir=str(tmp_path / "run"),
        checkpoint_every=5,
        log_every=5,
        prefetch=2,
    )


@pytest.fixture
def qapp():
    pytest.importorskip("PySide6")
    from csattn.plot import ensure_gui_app

    return ensure_gui_app()


@pytest.fixture
def run_dir(tiny_train_config):
    """A finished four-step training run."""
    import dataclasses

    from csattn.trainer import train

    return train(dataclasses.replace(tiny_train_config, total_steps=4), progress=False).out_dir
