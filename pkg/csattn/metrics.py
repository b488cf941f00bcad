"""
csattn/metrics.py

Evaluation metrics on numpy images in [0, 1]: PSNR, SSIM, MAE, plus the
BT.601 luma conversion used by the Y-channel protocol.

Images are (3, H, W), (N, 3, H, W) or single-channel (H, W). Inputs are
clamped to [0, max_val] before comparison.
"""

from __future__ import annotations

import math

import numpy as np
from skimage.metrics import structural_similarity

from csattn.errors import ShapeError

LUMA_BT601 = (0.299, 0.587, 0.114)
SSIM_WINDOW = 11


def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """Full-range BT.601 luma; the channel axis (third from last) is removed."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim < 3 or img.shape[-3] != 3:
        raise ShapeError(f"rgb_to_y expects 3 channels on axis -3, got {img.shape!r}")
    r, g, b = img[..., 0, :, :], img[..., 1, :, :], img[..., 2, :, :]
    return LUMA_BT601[0] * r + LUMA_BT601[1] * g + LUMA_BT601[2] * b


def _prepare(a, b, max_val: float, y_channel: bool) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"metric inputs differ in shape: {a.shape!r} vs {b.shape!r}")
    a = np.clip(a, 0.0, max_val)
    b = np.clip(b, 0.0, max_val)
    if y_channel:
        a, b = rgb_to_y(a), rgb_to_y(b)
    return a, b


def psnr(a, b, max_val: float = 1.0, y_channel: bool = False) -> float:
    """10*log10(max^2 / MSE); identical inputs give math.inf."""
    a, b = _prepare(a, b, max_val, y_channel)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / mse)


def mae(a, b, max_val: float = 1.0, y_channel: bool = False) -> float:
    a, b = _prepare(a, b, max_val, y_channel)
    return float(np.mean(np.abs(a - b)))


def ssim(a, b, max_val: float = 1.0, y_channel: bool = False) -> float:
    """
    Single-scale SSIM, Gaussian window 11 / sigma 1.5, K1=0.01, K2=0.03.

    Computed per 2-D plane (channel and batch entry) and averaged.
    """
    a, b = _prepare(a, b, max_val, y_channel)
    if a.ndim < 2 or min(a.shape[-2:]) < SSIM_WINDOW:
        raise ShapeError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape!r}")
    planes_a = a.reshape(-1, *a.shape[-2:])
    planes_b = b.reshape(-1, *b.shape[-2:])
    scores = [
        structural_similarity(
            pa,
            pb,
            data_range=max_val,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
            K1=0.01,
            K2=0.03,
        )
        for pa, pb in zip(planes_a, planes_b)
    ]
    return float(np.mean(scores))


def image_metrics(pred, gt, y_channel: bool = False) -> dict[str, float]:
    """PSNR / SSIM / MAE averaged over the images of an (N, 3, H, W) batch."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.ndim == 3:
        pred, gt = pred[None], gt[None]
    rows = [
        (psnr(p, g, y_channel=y_channel), ssim(p, g, y_channel=y_channel), mae(p, g, y_channel=y_channel))
        for p, g in zip(pred, gt)
    ]
    psnrs, ssims, maes = zip(*rows)
    return {"psnr": float(np.mean(psnrs)), "ssim": float(np.mean(ssims)), "mae": float(np.mean(maes))}
