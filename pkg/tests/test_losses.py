import numpy as np
import pytest

from csattn.config import LossWeights
from csattn.errors import ShapeError
from csattn.losses import frequency_loss, l1_loss, multiscale_loss
from csattn.tensor import Tape, Tensor, grad_check, mul, precision, sum_all


def test_l1_loss_values():
    a = Tensor(np.zeros((1, 3, 4, 4)))
    assert l1_loss(a, a).item() == 0.0
    assert l1_loss(Tensor(np.full((1, 3, 4, 4), 0.5)), a).item() == pytest.approx(0.5)
    with pytest.raises(ShapeError):
        l1_loss(a, Tensor(np.zeros((1, 3, 4, 5))))


def test_l1_gradient_is_sign_over_n():
    pred = Tensor([[0.3, -0.2], [0.1, 0.9]], requires_grad=True)
    with Tape() as tape:
        loss = l1_loss(pred, Tensor(np.zeros((2, 2))))
    tape.backward(loss)
    np.testing.assert_allclose(pred.grad, np.sign(pred.data) / 4)


def test_frequency_loss_constant_offset():
    with precision(np.float64):
        gt = Tensor(np.zeros((1, 1, 2, 2)))
        for method in ("fft", "direct"):
            assert frequency_loss(Tensor(np.ones((1, 1, 2, 2))), gt, method).item() == pytest.approx(1.0)
            assert frequency_loss(gt, gt, method).item() == 0.0


@pytest.mark.parametrize("shape", [(1, 3, 8, 8), (2, 1, 4, 16)])
def test_frequency_loss_direct_matches_fft(rng, shape):
    with precision(np.float64):
        a, b = Tensor(rng.random(shape)), Tensor(rng.random(shape))
        direct = frequency_loss(a, b, "direct").item()
        fast = frequency_loss(a, b, "fft").item()
    assert abs(direct - fast) < 1e-6


def test_frequency_loss_any_size(rng):
    with precision(np.float64):
        value = frequency_loss(Tensor(rng.random((1, 2, 5, 7))), Tensor(rng.random((1, 2, 5, 7))), "direct")
    assert value.item() > 0.0


def test_shifted_difference_keeps_magnitude_spectrum(rng):
    delta = rng.standard_normal((6, 6))
    shifted = np.roll(delta, (2, 3), axis=(0, 1))
    np.testing.assert_allclose(np.abs(np.fft.fft2(shifted)), np.abs(np.fft.fft2(delta)), atol=1e-6)


@pytest.mark.parametrize("method", ["fft", "direct"])
@pytest.mark.parametrize("shape", [(1, 2, 5, 7), (1, 3, 4, 4), (1, 2, 8, 8)])
def test_frequency_loss_gradient(rng, method, shape):
    # The linear readout keeps every coordinate gradient O(1); on its own the
    # loss has exactly zero gradient at some coordinates of small even grids.
    gt = Tensor(rng.standard_normal(shape), dtype=np.float64)
    readout = Tensor(rng.standard_normal(shape), dtype=np.float64)
    report = grad_check(lambda x: frequency_loss(x, gt, method) + sum_all(mul(x, readout)), rng.standard_normal(shape))
    assert report.passed, str(report)


def test_frequency_loss_gradient_matches_spectrum_signs(rng):
    with precision(np.float64):
        delta = rng.standard_normal((1, 1, 5, 7))
        pred = Tensor(delta, requires_grad=True)
        with Tape() as tape:
            loss = frequency_loss(pred, Tensor(np.zeros_like(delta)), "fft")
        tape.backward(loss)
    spectrum = np.fft.fft2(delta)
    weights = np.sign(spectrum.real) - 1j * np.sign(spectrum.imag)
    np.testing.assert_allclose(pred.grad, np.fft.fft2(weights).real / delta.size, atol=1e-12)


def test_multiscale_loss(rng):
    gts = [Tensor(rng.random((1, 3, s, s))) for s in (16, 8, 4)]
    assert multiscale_loss(gts, gts).item() == 0.0

    preds = [Tensor(g.data + 0.25) for g in gts]
    terms = {}
    weights = LossWeights(lambda_freq=0.0, scale_weights=(1.0, 2.0, 0.5))
    assert multiscale_loss(preds, gts, weights, terms).item() == pytest.approx(0.25 * 3.5, rel=1e-5)
    assert terms["freq"] == 0.0
    assert terms["l1"] == pytest.approx(0.25 * 3.5, rel=1e-5)

    with pytest.raises(ShapeError):
        multiscale_loss(preds[:2], gts[:2])


def test_losses_are_nonnegative(rng):
    a, b = Tensor(rng.random((1, 3, 8, 8))), Tensor(rng.random((1, 3, 8, 8)))
    assert l1_loss(a, b).item() > 0.0
    assert frequency_loss(a, b).item() > 0.0
    assert multiscale_loss([a, a, a], [b, b, b]).item() > 0.0
