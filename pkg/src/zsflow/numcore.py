"""Dense 64-bit arrays with tape-based reverse-mode differentiation.

Every primitive runs eagerly on numpy float64 data and, while recording is
enabled, appends a node to a global tape. ``backward(loss)`` replays the tape
in exact reverse execution order, accumulating d(loss)/d(tensor) into the
``grad`` buffer of every tensor that requires gradients. Repeated calls
without ``zero_grad`` accumulate.

Only what the coupling subnets, the three losses, and the linear classifier
need is implemented: 1-D/2-D arrays, numpy-style broadcasting between them,
and a handful of reductions. No views are created; outputs own their data, so
a tensor's values are immutable once an operation has produced them.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ContractError, DimensionError, NumericError


class Tensor:
    """A float64 array plus an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64, copy=True, order="C")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars and arrays are wrapped as constants.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Tape machinery


_TAPE: list[tuple[Tensor, object]] = []
_RECORDING: bool = True


def reset_tape() -> None:
    """Drop all recorded nodes; gradients already written stay in place."""
    _TAPE.clear()


def tape_size() -> int:
    return len(_TAPE)


@contextmanager
def no_grad():
    """Disable recording; operations executed inside produce constants."""
    global _RECORDING
    previous = _RECORDING
    _RECORDING = False
    try:
        yield
    finally:
        _RECORDING = previous


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    # backward_fn(out_grad) -> iterable of (input_tensor, grad_contribution)
    if _RECORDING and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE.append((out, backward_fn))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into t.grad for every reachable tensor.

    The loss must be scalar-shaped. Each call adds a fresh pass, so calling
    twice doubles the gradients of an unchanged graph.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not _TAPE:
        raise ContractError("backward called on an empty tape")

    flows: dict[int, tuple[Tensor, np.ndarray]] = {
        id(loss): (loss, np.ones_like(loss.data))
    }
    for out, backward_fn in reversed(_TAPE):
        entry = flows.pop(id(out), None)
        if entry is None:
            continue
        out_grad = entry[1]
        if out.requires_grad:
            out.grad = out_grad if out.grad is None else out.grad + out_grad
        for tensor, contribution in backward_fn(out_grad):
            if not tensor.requires_grad:
                continue
            held = flows.get(id(tensor))
            if held is None:
                flows[id(tensor)] = (tensor, contribution)
            else:
                flows[id(tensor)] = (tensor, held[1] + contribution)
    # Whatever remains are leaves (parameters / inputs).
    for tensor, grad in flows.values():
        if tensor.requires_grad:
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad


# ---------------------------------------------------------------------------
# Shared helpers


def _finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {op}")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _elementwise_pair(a: Tensor, b: Tensor, op: str, value: np.ndarray, da, db) -> Tensor:
    with np.errstate(over="ignore", invalid="ignore"):
        out = Tensor(_finite(value, op))

    def backward_fn(g):
        pairs = []
        if a.requires_grad:
            pairs.append((a, _unbroadcast(da(g), a.data.shape)))
        if b.requires_grad:
            pairs.append((b, _unbroadcast(db(g), b.data.shape)))
        return pairs

    return _record(out, (a, b), backward_fn)


# ---------------------------------------------------------------------------
# Elementwise primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    return _elementwise_pair(a, b, "add", a.data + b.data, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _elementwise_pair(a, b, "sub", a.data - b.data, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _elementwise_pair(
        a, b, "mul", a.data * b.data, lambda g: g * b.data, lambda g: g * a.data
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    if np.any(b.data == 0.0):
        raise NumericError("division by zero")
    return _elementwise_pair(
        a,
        b,
        "div",
        a.data / b.data,
        lambda g: g / b.data,
        lambda g: -g * a.data / (b.data * b.data),
    )


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        value = _finite(np.exp(x.data), "exp")
    out = Tensor(value)
    return _record(out, (x,), lambda g: [(x, g * value)])


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise NumericError("log requires strictly positive input")
    out = Tensor(np.log(x.data))
    return _record(out, (x,), lambda g: [(x, g / x.data)])


def tanh(x: Tensor) -> Tensor:
    value = np.tanh(x.data)
    out = Tensor(value)
    return _record(out, (x,), lambda g: [(x, g * (1.0 - value * value))])


def square(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = Tensor(_finite(x.data * x.data, "square"))
    return _record(out, (x,), lambda g: [(x, g * 2.0 * x.data)])


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    """max(x, slope*x); the kink at zero takes the positive branch."""
    if not 0.0 < slope < 1.0:
        raise ContractError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    factor = np.where(x.data >= 0.0, 1.0, slope)
    out = Tensor(x.data * factor)
    return _record(out, (x,), lambda g: [(x, g * factor)])


# ---------------------------------------------------------------------------
# Matrix / structural primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {a.data.ndim}-D and {b.data.ndim}-D"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = Tensor(_finite(a.data @ b.data, "matmul"))

    def backward_fn(g):
        pairs = []
        if a.requires_grad:
            pairs.append((a, g @ b.data.T))
        if b.requires_grad:
            pairs.append((b, a.data.T @ g))
        return pairs

    return _record(out, (a, b), backward_fn)


def sum(t: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    value = t.data.sum(axis=axis, keepdims=keepdims)
    out = Tensor(_finite(np.asarray(value), "sum"))

    def backward_fn(g):
        if axis is None:
            expanded = np.broadcast_to(g, t.data.shape)
        else:
            block = g if keepdims else np.expand_dims(g, axis)
            expanded = np.broadcast_to(block, t.data.shape)
        return [(t, np.ascontiguousarray(expanded))]

    return _record(out, (t,), backward_fn)


def mean(t: Tensor, axis: int | None = None) -> Tensor:
    count = t.data.size if axis is None else t.data.shape[axis]
    return mul(sum(t, axis=axis), Tensor(1.0 / count))


def sqdist(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise squared Euclidean distances between the rows of a and b."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise DimensionError(f"sqdist expects matching row widths: {a.shape}, {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        sq_a = (a.data * a.data).sum(axis=1)[:, None]
        sq_b = (b.data * b.data).sum(axis=1)[None, :]
        value = np.maximum(sq_a + sq_b - 2.0 * (a.data @ b.data.T), 0.0)
        out = Tensor(_finite(value, "sqdist"))

    def backward_fn(g):
        pairs = []
        if a.requires_grad:
            pairs.append((a, 2.0 * (g.sum(axis=1)[:, None] * a.data - g @ b.data)))
        if b.requires_grad:
            pairs.append((b, 2.0 * (g.sum(axis=0)[:, None] * b.data - g.T @ a.data)))
        return pairs

    return _record(out, (a, b), backward_fn)


def transpose(t: Tensor) -> Tensor:
    if t.data.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")
    out = Tensor(t.data.T)
    return _record(out, (t,), lambda g: [(t, g.T)])


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise DimensionError(f"concat_cols expects equal row counts: {a.shape}, {b.shape}")
    na = a.data.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1))

    def backward_fn(g):
        pairs = []
        if a.requires_grad:
            pairs.append((a, np.ascontiguousarray(g[:, :na])))
        if b.requires_grad:
            pairs.append((b, np.ascontiguousarray(g[:, na:])))
        return pairs

    return _record(out, (a, b), backward_fn)


def slice_cols(t: Tensor, start: int, stop: int) -> Tensor:
    if t.data.ndim != 2:
        raise DimensionError("slice_cols expects a 2-D tensor")
    if not 0 <= start <= stop <= t.data.shape[1]:
        raise DimensionError(f"slice [{start}:{stop}] outside width {t.data.shape[1]}")
    out = Tensor(t.data[:, start:stop])

    def backward_fn(g):
        full = np.zeros_like(t.data)
        full[:, start:stop] = g
        return [(t, full)]

    return _record(out, (t,), backward_fn)


def permute_cols(t: Tensor, perm: np.ndarray) -> Tensor:
    """Reorder columns so that output column j is input column perm[j]."""
    if t.data.ndim != 2 or len(perm) != t.data.shape[1]:
        raise DimensionError(f"permutation length {len(perm)} != width {t.data.shape[1]}")
    out = Tensor(t.data[:, perm])

    def backward_fn(g):
        full = np.empty_like(t.data)
        full[:, perm] = g
        return [(t, full)]

    return _record(out, (t,), backward_fn)
