"""
csattn/losses.py

Training objectives: L1 and frequency (DFT) loss, summed over the three
output scales of the network.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from csattn.config import LossWeights
from csattn.errors import ShapeError
from csattn.tensor import Tensor, mean_all, record_op, sub


def _same_shape(name: str, pred: Tensor, gt: Tensor) -> None:
    if pred.shape != gt.shape:
        raise ShapeError(f"{name}: prediction {pred.shape!r} vs target {gt.shape!r}")


def abs_op(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return record_op("abs", np.abs(x.data), (x,), lambda g: (g * sign,))


def l1_loss(pred: Tensor, gt: Tensor) -> Tensor:
    """Mean absolute difference."""
    _same_shape("l1_loss", pred, gt)
    return mean_all(abs_op(sub(pred, gt)))


# ---------------------------------------------------------------------- Frequency

def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def _dft2(x: np.ndarray, method: str) -> np.ndarray:
    """Unnormalized 2-D DFT over the last two axes."""
    if method == "fft":
        return np.fft.fft2(x, axes=(-2, -1))
    if method == "direct":
        fh = _dft_matrix(x.shape[-2])
        fw = _dft_matrix(x.shape[-1])
        return np.einsum("ky,...yx,lx->...kl", fh, x, fw, optimize=False)
    raise ValueError(f"unknown DFT method {method!r}; expected 'fft' or 'direct'")


def frequency_loss(pred: Tensor, gt: Tensor, method: str = "fft") -> Tensor:
    """
    Mean over all bins and channels of |Re D| + |Im D|, D = DFT(pred) - DFT(gt).

    The DFT is linear so D is taken as DFT(pred - gt). method="direct" uses
    explicit DFT matrices and works for any H, W; "fft" uses numpy's FFT.
    """
    _same_shape("frequency_loss", pred, gt)
    delta = pred.data - gt.data
    spectrum = _dft2(delta, method)
    count = delta.size
    value = (np.abs(spectrum.real).sum() + np.abs(spectrum.imag).sum()) / count

    def backward(g: np.ndarray):
        # d/d(delta) of sum |Re| + |Im| is Re(DFT(sign Re - i sign Im)); DFT matrices are symmetric.
        weights = np.sign(spectrum.real) - 1j * np.sign(spectrum.imag)
        grad = (_dft2(weights, method).real / count).astype(delta.dtype)
        return g * grad, -g * grad

    return record_op("frequency_loss", np.asarray(value, dtype=delta.dtype), (pred, gt), backward)


def multiscale_loss(
    preds: Sequence[Tensor],
    gts: Sequence[Tensor],
    weights: Optional[LossWeights] = None,
    terms: Optional[dict] = None,
) -> Tensor:
    """
    Sum over scales of w_s * (l1 + lambda_freq * freq).

    When terms is given it receives the weighted l1 and freq totals as floats.
    """
    weights = weights or LossWeights()
    if len(preds) != len(gts) or len(preds) != len(weights.scale_weights):
        raise ShapeError(
            f"multiscale_loss: {len(preds)} predictions, {len(gts)} targets, "
            f"{len(weights.scale_weights)} scale weights"
        )
    total = None
    l1_total = 0.0
    freq_total = 0.0
    for pred, gt, w in zip(preds, gts, weights.scale_weights):
        term = l1_loss(pred, gt)
        l1_total += w * term.item()
        if weights.lambda_freq > 0:
            freq = frequency_loss(pred, gt, weights.freq_method)
            freq_total += w * freq.item()
            term = term + freq * weights.lambda_freq
        term = term * float(w)
        total = term if total is None else total + term
    if terms is not None:
        terms["l1"] = l1_total
        terms["freq"] = freq_total
    return total
