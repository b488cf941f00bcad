"""
csattn/data.py

Training data: synthetic degradation pairs, paired PNG folders, seeded
patch sampling and a bounded-queue prefetcher.

Randomness is keyed, never shared:
    image i of a synthetic set   default_rng([spec.seed, i])
    batch for training step s    default_rng([cfg.seed, s])
so samples do not depend on the order or timing in which they are produced.
"""

from __future__ import annotations

import logging
import math
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np
from scipy.ndimage import zoom

from csattn.config import RainSynthSpec, TrainConfig
from csattn.errors import DatasetError

log = logging.getLogger(__name__)

Seed = Union[int, Sequence[int]]


# ---------------------------------------------------------------------- Synthesis

def _value_noise(rng: np.random.Generator, channels: int, size: int, cells: int) -> np.ndarray:
    """Smooth noise: a (cells+1)^2 random lattice upsampled by cubic spline, cropped to size."""
    up = math.ceil(size / cells)
    lattice = rng.random((channels, cells + 1, cells + 1))
    smooth = zoom(lattice, (1, up, up), order=3, mode="nearest")
    return smooth[:, :size, :size]


def clean_background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Procedural RGB scene in [0.05, 0.95]: two octaves of value noise plus a tint."""
    base = 0.65 * _value_noise(rng, 3, size, 4) + 0.35 * _value_noise(rng, 3, size, 8)
    shade = _value_noise(rng, 1, size, 2)
    tint = rng.uniform(0.6, 1.0, size=(3, 1, 1))
    img = (0.7 * base + 0.3 * shade) * tint
    lo, hi = img.min(), img.max()
    img = (img - lo) / max(hi - lo, 1e-6)
    return 0.05 + 0.9 * img


def _streak_layer(rng: np.random.Generator, spec: RainSynthSpec, size: int) -> np.ndarray:
    """Sum of soft oriented line segments; always >= 0."""
    layer = np.zeros((size, size))
    count = int(rng.integers(spec.streak_count[0], spec.streak_count[1] + 1))
    if count == 0:
        return layer
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = math.radians(rng.uniform(*spec.angle_deg))
    for _ in range(count):
        angle = theta + math.radians(rng.normal(0.0, 2.0))
        dy, dx = math.cos(angle), math.sin(angle)
        cy, cx = rng.uniform(0, size, size=2)
        half = 0.5 * rng.uniform(*spec.length)
        width = rng.uniform(*spec.width)
        strength = rng.uniform(*spec.intensity)
        t = np.clip((yy - cy) * dy + (xx - cx) * dx, -half, half)
        dist2 = (yy - cy - t * dy) ** 2 + (xx - cx - t * dx) ** 2
        layer += strength * np.exp(-0.5 * dist2 / (width * width))
    return layer


def synth_rain_pair(spec: RainSynthSpec, seed: Seed) -> tuple[np.ndarray, np.ndarray]:
    """(degraded, clean) with degraded = clip(clean + streaks, 0, 1)."""
    rng = np.random.default_rng(seed)
    clean = clean_background(rng, spec.size)
    rain = _streak_layer(rng, spec, spec.size)
    tint = rng.uniform(0.9, 1.0, size=(3, 1, 1))
    degraded = np.clip(clean + rain[None] * tint, 0.0, 1.0)
    return degraded.astype(np.float32), clean.astype(np.float32)


def synth_haze_pair(spec: RainSynthSpec, seed: Seed) -> tuple[np.ndarray, np.ndarray]:
    """Atmospheric scattering I = J*t + A*(1 - t) with t = exp(-beta * depth)."""
    rng = np.random.default_rng(seed)
    clean = clean_background(rng, spec.size)
    ramp = np.linspace(1.0, 0.2, spec.size)[None, :, None]
    depth = 0.6 * ramp + 0.4 * _value_noise(rng, 1, spec.size, 3)
    beta = rng.uniform(*spec.haze_beta)
    airlight = rng.uniform(*spec.airlight)
    transmission = np.exp(-beta * depth)
    degraded = np.clip(clean * transmission + airlight * (1.0 - transmission), 0.0, 1.0)
    return degraded.astype(np.float32), clean.astype(np.float32)


def synth_lowlight_pair(spec: RainSynthSpec, seed: Seed) -> tuple[np.ndarray, np.ndarray]:
    """Gamma darkening plus Gaussian sensor noise."""
    rng = np.random.default_rng(seed)
    clean = clean_background(rng, spec.size)
    gamma = rng.uniform(*spec.gamma)
    sigma = rng.uniform(*spec.noise_sigma)
    dark = 0.8 * clean ** gamma
    degraded = np.clip(dark + rng.normal(0.0, sigma, size=clean.shape), 0.0, 1.0)
    return degraded.astype(np.float32), clean.astype(np.float32)


_SYNTH = {"rain": synth_rain_pair, "haze": synth_haze_pair, "lowlight": synth_lowlight_pair}


def synth_pair(spec: RainSynthSpec, seed: Seed) -> tuple[np.ndarray, np.ndarray]:
    spec.validate()
    return _SYNTH[spec.kind](spec, seed)


# ---------------------------------------------------------------------- Datasets

@dataclass
class PairDataset:
    """In-memory (degraded, clean) pairs of float32 (3, H, W) arrays."""

    degraded: list[np.ndarray]
    clean: list[np.ndarray]
    names: list[str]

    def __post_init__(self) -> None:
        if not self.degraded:
            raise DatasetError("dataset is empty")
        for name, d, c in zip(self.names, self.degraded, self.clean):
            if d.shape != c.shape:
                raise DatasetError(f"{name!r}: degraded {d.shape!r} and clean {c.shape!r} differ")

    def __len__(self) -> int:
        return len(self.degraded)

    def __getitem__(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        return self.degraded[index], self.clean[index]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All pairs as (N, 3, H, W) arrays; images must share a size."""
        if len({d.shape for d in self.degraded}) != 1:
            raise DatasetError("images differ in size; cannot stack")
        return np.stack(self.degraded), np.stack(self.clean)

    def sample_batch(
        self, rng: np.random.Generator, batch: int, patch: int, flip: bool = True
    ) -> tuple[np.ndarray, np.ndarray]:
        """Random pairs, random patch crops and optional horizontal flips."""
        degs, cleans = [], []
        for _ in range(batch):
            i = int(rng.integers(len(self)))
            d, c = self[i]
            _, h, w = d.shape
            if h < patch or w < patch:
                raise DatasetError(f"{self.names[i]!r} is {h}x{w}, smaller than patch {patch}")
            y = int(rng.integers(h - patch + 1))
            x = int(rng.integers(w - patch + 1))
            d = d[:, y:y + patch, x:x + patch]
            c = c[:, y:y + patch, x:x + patch]
            if flip and rng.random() < 0.5:
                d, c = d[:, :, ::-1], c[:, :, ::-1]
            degs.append(d)
            cleans.append(c)
        return np.ascontiguousarray(np.stack(degs)), np.ascontiguousarray(np.stack(cleans))


def synthetic_dataset(spec: RainSynthSpec, count: int) -> PairDataset:
    pairs = [synth_pair(spec, [spec.seed, i]) for i in range(count)]
    return PairDataset(
        degraded=[p[0] for p in pairs],
        clean=[p[1] for p in pairs],
        names=[f"{spec.kind}_{i:04d}" for i in range(count)],
    )


def load_pairs(dir_degraded: Union[str, Path], dir_clean: Union[str, Path]) -> PairDataset:
    """Pair PNG files by filename across two directories."""
    from csattn.imageio import read_png

    deg_dir, clean_dir = Path(dir_degraded), Path(dir_clean)
    for d in (deg_dir, clean_dir):
        if not d.is_dir():
            raise DatasetError(f"{str(d)!r} is not a directory")
    deg_names = sorted(p.name for p in deg_dir.glob("*.png"))
    clean_names = sorted(p.name for p in clean_dir.glob("*.png"))
    if not deg_names:
        raise DatasetError(f"no PNG images in {str(deg_dir)!r}")
    unmatched = sorted(set(deg_names) ^ set(clean_names))
    if unmatched:
        raise DatasetError(f"unmatched filenames: {unmatched[:5]!r}")

    degraded = [read_png(deg_dir / n) for n in deg_names]
    clean = [read_png(clean_dir / n) for n in deg_names]
    log.info("loaded %d image pairs from %s", len(deg_names), deg_dir)
    return PairDataset(degraded, clean, deg_names)


def dataset_for(cfg: TrainConfig) -> PairDataset:
    if cfg.uses_pairs:
        return load_pairs(cfg.degraded_dir, cfg.clean_dir)
    return synthetic_dataset(cfg.synth, cfg.num_pairs)


def batch_for_step(dataset: PairDataset, cfg: TrainConfig, step: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, step])
    return dataset.sample_batch(rng, cfg.batch, cfg.patch, cfg.flip)


# ---------------------------------------------------------------------- Prefetch

class BatchPrefetcher:
    """
    One background producer filling a bounded queue with batches for steps
    [start, stop). Consumption order is step order.

        with BatchPrefetcher(dataset, cfg, 0, cfg.total_steps) as batches:
            for step, (degraded, clean) in batches:
                ...
    """

    _DONE = object()

    def __init__(self, dataset: PairDataset, cfg: TrainConfig, start: int, stop: int, depth: Optional[int] = None) -> None:
        self.dataset = dataset
        self.cfg = cfg
        self.start = start
        self.stop = stop
        self.depth = cfg.prefetch if depth is None else depth
        self._queue: queue.Queue = queue.Queue(maxsize=max(self.depth, 1))
        self._halt = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _put(self, item) -> bool:
        while not self._halt.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self) -> None:
        try:
            for step in range(self.start, self.stop):
                if not self._put((step, batch_for_step(self.dataset, self.cfg, step))):
                    return
        except BaseException as exc:  # forwarded to the consumer
            self._put(exc)
            return
        self._put(self._DONE)

    def __enter__(self) -> "BatchPrefetcher":
        if self.depth > 0:
            self._thread = threading.Thread(target=self._produce, name="csattn-prefetch", daemon=True)
            self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._halt.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def __iter__(self) -> Iterator[tuple[int, tuple[np.ndarray, np.ndarray]]]:
        if self._thread is None:
            for step in range(self.start, self.stop):
                yield step, batch_for_step(self.dataset, self.cfg, step)
            return
        while True:
            item = self._queue.get()
            if item is self._DONE:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
