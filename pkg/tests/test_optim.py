import numpy as np
import pytest

from csattn.config import TrainConfig
from csattn.errors import ConfigError, NonFiniteError
from csattn.optim import AdamW, AdamWState, adamw_step, cosine_lr
from csattn.tensor import Tape, Tensor, sum_all


def test_cosine_endpoints_are_exact():
    cfg = TrainConfig(lr_init=5e-4, lr_final=1e-7, total_steps=1000)
    assert cosine_lr(0, cfg) == 5e-4
    assert cosine_lr(1000, cfg) == 1e-7
    assert cosine_lr(500, cfg) == pytest.approx(2.5005e-4, rel=1e-9)


def test_cosine_is_monotone():
    cfg = TrainConfig(total_steps=50)
    values = [cosine_lr(s, cfg) for s in range(51)]
    assert all(a >= b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("step", [-1, 51])
def test_cosine_rejects_out_of_range(step):
    with pytest.raises(ConfigError):
        cosine_lr(step, TrainConfig(total_steps=50))


def _param(value):
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, dtype=np.float64)


def test_first_step_moves_by_lr():
    p = _param([0.5, -2.0])
    adamw_step({"p": p}, {"p": np.array([1.0, 1.0])}, AdamWState(), lr=1e-3)
    expected = np.array([0.5, -2.0]) - 1e-3 / (1.0 + 1e-8)
    np.testing.assert_allclose(p.data, expected, rtol=0, atol=1e-12)


def test_zero_gradient_without_decay_leaves_params():
    p = _param([0.3, 0.7])
    before = p.data.copy()
    adamw_step({"p": p}, {"p": np.zeros(2)}, AdamWState(), lr=1e-2)
    np.testing.assert_array_equal(p.data, before)
    adamw_step({"p": p}, {"p": None}, AdamWState(), lr=1e-2)
    np.testing.assert_array_equal(p.data, before)


def test_decay_alone_shrinks_params():
    p = _param([1.5, -0.5])
    adamw_step({"p": p}, {"p": np.zeros(2)}, AdamWState(), lr=1e-2, weight_decay=0.1)
    np.testing.assert_allclose(p.data, np.array([1.5, -0.5]) * (1.0 - 1e-3), rtol=1e-12)


def test_non_finite_gradient_changes_nothing():
    a, b = _param([1.0]), _param([2.0])
    state = AdamWState()
    with pytest.raises(NonFiniteError):
        adamw_step({"a": a, "b": b}, {"a": np.array([0.5]), "b": np.array([np.nan])}, state, lr=0.1)
    assert a.data[0] == 1.0 and b.data[0] == 2.0
    assert state.step == 0 and not state.m


def test_gradient_shape_mismatch():
    with pytest.raises(ValueError):
        adamw_step({"p": _param([1.0, 2.0])}, {"p": np.ones(3)}, AdamWState(), lr=0.1)


def test_optimizer_descends_a_quadratic():
    target = np.array([1.0, -3.0, 0.5])
    p = _param(np.zeros(3))
    opt = AdamW([p])
    for _ in range(500):
        opt.zero_grad()
        with Tape() as tape:
            diff = p - Tensor(target, dtype=np.float64)
            loss = sum_all(diff * diff)
        tape.backward(loss)
        opt.step(0.05)
    np.testing.assert_allclose(p.data, target, atol=5e-2)
    assert opt.state.step == 500


def test_from_config_reads_hyperparameters():
    cfg = TrainConfig(betas=(0.8, 0.99), eps=1e-6, weight_decay=0.01)
    opt = AdamW.from_config([_param([1.0])], cfg)
    assert opt.betas == (0.8, 0.99) and opt.eps == 1e-6 and opt.weight_decay == 0.01
    assert list(opt.params) == ["0"]
