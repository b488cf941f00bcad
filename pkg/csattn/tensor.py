"""
csattn/tensor.py

Dense tensors with reverse-mode differentiation.

A Tensor owns an immutable numpy buffer (canonical image order N, C, H, W).
Operations executed while a Tape is active are appended to it together with
a backward rule; Tape.backward() replays them in reverse and accumulates
gradients into every leaf tensor created with requires_grad=True.

Two scalar widths are used:
    float64  verification mode (finite-difference gradient checks)
    float32  training mode (the default)

Contractions go through np.einsum(optimize=False) rather than BLAS so the
summation order depends only on the operand shapes, never on thread count.
"""

from __future__ import annotations

import contextlib
import contextvars
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

from csattn.errors import CSAttnError, NonFiniteError, ShapeError

log = logging.getLogger(__name__)

Scalar = Union[int, float]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_DTYPE: contextvars.ContextVar[type] = contextvars.ContextVar("csattn_dtype", default=np.float32)
_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar("csattn_tape", default=None)


def default_dtype() -> type:
    """Scalar type used for newly created tensors in the current context."""
    return _DTYPE.get()


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default scalar width (np.float32 or np.float64)."""
    kind = np.dtype(dtype).type
    if kind not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {dtype!r}")
    token = _DTYPE.set(kind)
    try:
        yield
    finally:
        _DTYPE.reset(token)


class Tensor:
    """
    Dense N-dimensional array plus optional gradient.

    data is never modified in place once the tensor exists; the optimizer
    replaces parameter buffers between tapes instead.
    """

    __slots__ = ("data", "grad", "requires_grad", "node", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None) -> None:
        self.data: np.ndarray = np.array(data, dtype=dtype or default_dtype())
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node: Optional[int] = None
        self._tape: Optional[Tape] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = requires_grad
        out.node = None
        out._tape = None
        return out

    # ------------------------------------------------------------------ Info

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape!r}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Shortcut for active_tape().backward(self)."""
        tape = self._tape or _TAPE.get()
        if tape is None:
            raise CSAttnError("backward() called with no tape recording this tensor")
        tape.backward(self, grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # ------------------------------------------------------------------ Operators

    def __add__(self, other):
        return elementwise("add", self, other)

    def __radd__(self, other):
        return elementwise("add", self, other)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        return elementwise("mul", self, other)

    def __neg__(self):
        return elementwise("scale", self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class _Record:
    name: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """
    Ordered record of executed operations.

    Usage:
        with Tape() as tape:
            loss = f(x)
        tape.backward(loss)

    Records are appended in execution order, so every operation's inputs
    precede it. A tape belongs to one execution context; nesting is refused.
    """

    def __init__(self) -> None:
        self.records: list[_Record] = []
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Tape":
        if _TAPE.get() is not None:
            raise CSAttnError("a tape is already active in this context")
        self._token = _TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        if self._token is not None:
            _TAPE.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, name: str, inputs: tuple[Tensor, ...], output: Tensor, backward: BackwardFn) -> int:
        output.node = len(self.records)
        output._tape = self
        self.records.append(_Record(name, inputs, output, backward))
        return output.node

    def backward(self, loss: Tensor, grad: Optional[np.ndarray] = None) -> None:
        """Propagate d(loss) back to every leaf tensor that requires gradient."""
        seed = np.ones_like(loss.data) if grad is None else np.asarray(grad, dtype=loss.dtype)
        if seed.shape != loss.shape:
            raise ShapeError(f"seed gradient shape {seed.shape!r} != output shape {loss.shape!r}")

        if loss._tape is not self or loss.node is None:
            if loss.requires_grad:
                _accumulate_leaf(loss, seed)
            return

        pending: dict[int, np.ndarray] = {loss.node: seed}
        for index in range(loss.node, -1, -1):
            g = pending.pop(index, None)
            if g is None:
                continue
            rec = self.records[index]
            in_grads = rec.backward(g)
            for tensor, tg in zip(rec.inputs, in_grads):
                if tg is None or not tensor.requires_grad:
                    continue
                if tensor._tape is self and tensor.node is not None:
                    prev = pending.get(tensor.node)
                    pending[tensor.node] = tg if prev is None else prev + tg
                else:
                    _accumulate_leaf(tensor, tg)


def active_tape() -> Optional[Tape]:
    return _TAPE.get()


def _accumulate_leaf(tensor: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=tensor.dtype).reshape(tensor.shape)
    tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g


def check_finite(name: str, data: np.ndarray) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{name}: non-finite values in result of shape {data.shape!r}")


def record_op(name: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """
    Wrap an op result as a Tensor and register its backward rule.

    backward receives the output gradient and returns one gradient (or None)
    per input, in the same order as inputs.
    """
    check_finite(name, data)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires)
    tape = _TAPE.get()
    if requires and tape is not None:
        tape.record(name, tuple(inputs), out, backward)
    return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _einsum(spec: str, *operands: np.ndarray) -> np.ndarray:
    return np.einsum(spec, *operands, optimize=False)


# ---------------------------------------------------------------------- Elementwise

_ELEMENTWISE = ("add", "sub", "mul", "scale")


def elementwise(kind: str, a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    """
    Pointwise add / sub / mul between equal-shape tensors, or with a scalar.

    "scale" multiplies by a scalar and is the only kind that requires one.
    No implicit broadcasting beyond scalars.
    """
    if kind not in _ELEMENTWISE:
        raise ValueError(f"unknown elementwise kind {kind!r}")

    if not isinstance(b, Tensor):
        s = float(b)
        if kind == "add":
            return record_op("add_scalar", a.data + s, (a,), lambda g: (g,))
        if kind == "sub":
            return record_op("sub_scalar", a.data - s, (a,), lambda g: (g,))
        return record_op(f"{kind}_scalar", a.data * s, (a,), lambda g: (g * s,))

    if kind == "scale":
        raise ShapeError("scale-by-scalar needs a scalar right operand")
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shape mismatch {a.shape!r} vs {b.shape!r}")

    if kind == "add":
        return record_op("add", a.data + b.data, (a, b), lambda g: (g, g))
    if kind == "sub":
        return record_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))
    return record_op("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def add(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    return elementwise("mul", a, b)


def scale(a: Tensor, s: Scalar) -> Tensor:
    return elementwise("scale", a, s)


# ---------------------------------------------------------------------- Matmul

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes; leading extents must match."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2, got {a.shape!r} and {b.shape!r}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape!r} x {b.shape!r}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch extents differ: {a.shape!r} x {b.shape!r}")

    def backward(g: np.ndarray):
        ga = _einsum("...mn,...kn->...mk", g, b.data)
        gb = _einsum("...mk,...mn->...kn", a.data, g)
        return ga, gb

    return record_op("matmul", _einsum("...mk,...kn->...mn", a.data, b.data), (a, b), backward)


# ---------------------------------------------------------------------- Softmax

def softmax_lastdim(x: Tensor) -> Tensor:
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError(f"softmax needs a non-empty last axis, got {x.shape!r}")
    check_finite("softmax input", x.data)

    shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=-1, keepdims=True)

    def backward(g: np.ndarray):
        return (s * (g - np.sum(g * s, axis=-1, keepdims=True)),)

    return record_op("softmax", s, (x,), backward)


# ---------------------------------------------------------------------- Shape ops

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(d) for d in shape)
    if math.prod(shape) != x.size:
        raise ShapeError(f"reshape {x.shape!r} -> {shape!r} changes the element count")
    src = x.shape
    return record_op("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute axes {axes!r} invalid for rank {x.ndim}")
    inverse = tuple(int(i) for i in np.argsort(axes))
    data = np.ascontiguousarray(np.transpose(x.data, axes))
    return record_op("permute", data, (x,), lambda g: (np.transpose(g, inverse),))


def concat_channel(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along axis 1 (channels)."""
    if not tensors:
        raise ShapeError("concat_channel needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors:
        if t.ndim != len(ref) or t.shape[:1] + t.shape[2:] != ref[:1] + ref[2:]:
            raise ShapeError(f"concat_channel: incompatible shapes {ref!r} and {t.shape!r}")
    sizes = [t.shape[1] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=1))

    return record_op("concat_channel", np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), backward)


def split_channel(x: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    """Split along axis 1 into consecutive pieces of the given channel counts."""
    sizes = [int(s) for s in sizes]
    if x.ndim < 2 or any(s <= 0 for s in sizes) or sum(sizes) != x.shape[1]:
        raise ShapeError(f"split sizes {sizes!r} do not partition channels of {x.shape!r}")

    outs = []
    start = 0
    for size in sizes:
        stop = start + size

        def backward(g: np.ndarray, lo=start, hi=stop):
            full = np.zeros_like(x.data)
            full[:, lo:hi] = g
            return (full,)

        outs.append(record_op("split_channel", x.data[:, start:stop].copy(), (x,), backward))
        start = stop
    return outs


# ---------------------------------------------------------------------- Reductions

def reduce(kind: str, x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    """
    Sum or mean over axes (all axes when None). The reduced axes are dropped.

    An empty axis set is the identity.
    """
    if kind not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {kind!r}")
    if axes is None:
        axes = tuple(range(x.ndim))
    axes = tuple(sorted(a % x.ndim for a in axes)) if x.ndim else ()
    if len(set(axes)) != len(axes):
        raise ShapeError(f"repeated reduction axes {axes!r}")

    if not axes:
        return record_op(f"{kind}_identity", x.data.copy(), (x,), lambda g: (g,))

    count = math.prod(x.shape[a] for a in axes)
    data = np.sum(x.data, axis=axes)
    if kind == "mean":
        data = data / count
    shape = x.shape

    def backward(g: np.ndarray):
        g = np.expand_dims(g, axes)
        if kind == "mean":
            g = g / count
        return (np.broadcast_to(g, shape).copy(),)

    return record_op(kind, np.asarray(data), (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    return reduce("sum", x)


def mean_all(x: Tensor) -> Tensor:
    return reduce("mean", x)


# ---------------------------------------------------------------------- Gradient check

@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tol: float
    checked: int
    worst_index: tuple[int, ...]
    analytic: np.ndarray
    numeric: np.ndarray

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return (
            f"{self.name:<32} {status:<4} max_rel_err={self.max_rel_error:.3e} "
            f"(tol {self.tol:.0e}, {self.checked} coords, worst {self.worst_index})"
        )


def grad_check(
    f: Callable[[Tensor], Tensor],
    x,
    step: float = 1e-5,
    tol: float = 1e-4,
    name: str = "grad_check",
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare reverse-mode gradient of scalar f at x against central differences.

    Runs in 64-bit mode. Relative error per coordinate uses the denominator
    max(|analytic|, |numeric|, 1e-8). With max_coords set, a seeded random
    subset of coordinates is sampled.
    """
    with precision(np.float64):
        base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

        leaf = Tensor(base, requires_grad=True)
        with Tape() as tape:
            out = f(leaf)
        if out.size != 1:
            raise ShapeError(f"{name}: function must be scalar-valued, got shape {out.shape!r}")
        tape.backward(out)
        analytic_full = leaf.grad if leaf.grad is not None else np.zeros_like(base)

        flat_count = base.size
        if max_coords is not None and max_coords < flat_count:
            rng = np.random.default_rng(seed)
            picks = np.sort(rng.choice(flat_count, size=max_coords, replace=False))
        else:
            picks = np.arange(flat_count)

        analytic = np.empty(len(picks))
        numeric = np.empty(len(picks))
        for i, flat in enumerate(picks):
            index = np.unravel_index(int(flat), base.shape)
            plus = base.copy()
            plus[index] += step
            minus = base.copy()
            minus[index] -= step
            fp = f(Tensor(plus)).item()
            fm = f(Tensor(minus)).item()
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NonFiniteError(f"{name}: non-finite evaluation at {index}")
            numeric[i] = (fp - fm) / (2.0 * step)
            analytic[i] = analytic_full[index]

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel)) if rel.size else 0
    worst_index = tuple(int(i) for i in np.unravel_index(int(picks[worst]), base.shape)) if rel.size else ()
    report = GradCheckReport(
        name=name,
        max_rel_error=float(rel.max()) if rel.size else 0.0,
        tol=tol,
        checked=len(picks),
        worst_index=worst_index,
        analytic=analytic,
        numeric=numeric,
    )
    log.debug("%s", report)
    return report
