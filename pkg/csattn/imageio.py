"""
csattn/imageio.py

PNG decode/encode through QImage.

Arrays are float32 (3, H, W) in [0, 1]. 8-bit files go through
Format_RGB888, 16-bit files through Format_RGBX64.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np
from PySide6.QtGui import QImage

from csattn.errors import DatasetError, ShapeError

_SIXTEEN_BIT = (
    QImage.Format_RGBX64,
    QImage.Format_RGBA64,
    QImage.Format_RGBA64_Premultiplied,
    QImage.Format_Grayscale16,
)


def _rows(img: QImage, dtype) -> np.ndarray:
    itemsize = np.dtype(dtype).itemsize
    buf = np.frombuffer(img.constBits(), dtype=dtype, count=img.sizeInBytes() // itemsize)
    return buf.reshape(img.height(), img.bytesPerLine() // itemsize)


def read_png(path: Union[str, Path]) -> np.ndarray:
    img = QImage(str(path))
    if img.isNull():
        raise DatasetError(f"cannot decode image {str(path)!r}")
    w, h = img.width(), img.height()
    if img.format() in _SIXTEEN_BIT:
        img = img.convertToFormat(QImage.Format_RGBX64)
        pixels = _rows(img, np.uint16)[:, : 4 * w].reshape(h, w, 4)[..., :3]
        scale = 65535.0
    else:
        img = img.convertToFormat(QImage.Format_RGB888)
        pixels = _rows(img, np.uint8)[:, : 3 * w].reshape(h, w, 3)
        scale = 255.0
    return (np.transpose(pixels, (2, 0, 1)).astype(np.float32) / np.float32(scale)).copy()


def write_png(path: Union[str, Path], image: np.ndarray, bits: int = 8) -> None:
    """Write a (3, H, W) array in [0, 1] (values are clipped) as an 8- or 16-bit PNG."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"write_png expects a (3, H, W) array, got {image.shape!r}")
    _, h, w = image.shape
    hwc = np.transpose(np.clip(image, 0.0, 1.0), (1, 2, 0))
    if bits == 8:
        raw = np.round(hwc * 255.0).astype(np.uint8).tobytes()
        img = QImage(raw, w, h, 3 * w, QImage.Format_RGB888)
    elif bits == 16:
        rgbx = np.full((h, w, 4), 65535, dtype=np.uint16)
        rgbx[..., :3] = np.round(hwc * 65535.0).astype(np.uint16)
        raw = rgbx.tobytes()
        img = QImage(raw, w, h, 8 * w, QImage.Format_RGBX64)
    else:
        raise ValueError(f"bits must be 8 or 16, got {bits!r}")
    # QImage borrows the buffer; copy() detaches before it goes away.
    if not img.copy().save(str(path), "PNG"):
        raise OSError(f"failed to write {str(path)!r}")
