"""
csattn/optim.py

Cosine-annealed learning rate and AdamW with decoupled weight decay.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from csattn.errors import ConfigError, NonFiniteError
from csattn.nn_ops import iter_named_tensors
from csattn.tensor import Tensor

log = logging.getLogger(__name__)


def cosine_lr(step: int, cfg) -> float:
    """
    lr_final + 0.5 * (lr_init - lr_final) * (1 + cos(pi * step / total_steps)).

    Written as a convex blend of the two endpoints so step 0 and
    step == total_steps return lr_init and lr_final exactly.
    """
    total = cfg.total_steps
    if not 0 <= step <= total:
        raise ConfigError(f"step {step!r} outside schedule [0, {total}]")
    w = 0.5 * (1.0 + math.cos(math.pi * step / total))
    return cfg.lr_init * w + cfg.lr_final * (1.0 - w)


@dataclass
class AdamWState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamWState,
    lr: float,
    betas: Sequence[float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> AdamWState:
    """
    One AdamW update.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta

    Parameter buffers are replaced, not modified in place. A missing gradient
    counts as zero. Any non-finite gradient aborts before anything changes.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
    for name, g in grads.items():
        if g is not None and g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape!r} != parameter {name!r} shape {params[name].shape!r}")

    beta1, beta2 = betas
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        theta = p.data
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(theta)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - beta1) * g if m is None else beta1 * m + (1.0 - beta1) * g
        v = (1.0 - beta2) * g * g if v is None else beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = (theta - lr * update - lr * weight_decay * theta).astype(theta.dtype)
    return state


class AdamW:
    """Optimizer bound to a parameter tree; gradients are read from Tensor.grad."""

    def __init__(self, tree, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0) -> None:
        self.params: dict[str, Tensor] = {n: t for n, t in iter_named_tensors(tree) if t.requires_grad}
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamWState()

    @classmethod
    def from_config(cls, tree, cfg) -> "AdamW":
        return cls(tree, cfg.betas, cfg.eps, cfg.weight_decay)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float) -> None:
        grads = {name: p.grad for name, p in self.params.items()}
        adamw_step(self.params, grads, self.state, lr, self.betas, self.eps, self.weight_decay)
