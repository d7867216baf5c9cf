"""Dense tensors with reverse-mode differentiation.

The operation set is exactly what the message-passing encoders need:
matmul, elementwise arithmetic, concat/slice/gather, leaky_relu, elu,
exp/log, (log_)softmax, reductions, segment_sum / segment_softmax over
edge-grouped indices, mask-based dropout, and an affine normalization.

Every operation records its parents and a backward closure on the implicit
tape; ``Tensor.backward()`` walks the recorded graph once in reverse
topological order. All values are float64. Non-finite results are trapped
at creation time (disable via ``set_finite_checks`` for benchmarking only).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .util import NumericError

_CHECK_FINITE = True


def set_finite_checks(enabled: bool) -> None:
    global _CHECK_FINITE
    _CHECK_FINITE = enabled


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


class Tensor:
    """A dense float64 array plus the bookkeeping needed for backprop."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False,
                 _parents: tuple["Tensor", ...] = (),
                 _backward: Callable[[np.ndarray], None] | None = None):
        self.values = _as_array(values)
        if _CHECK_FINITE and not np.all(np.isfinite(self.values)):
            raise NumericError("tensor holds non-finite values")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += grad

    def backward(self) -> None:
        """Reverse-mode pass from a scalar loss to every reachable tensor."""
        if self.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.values)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __pow__(self, exponent):
        return pow_const(self, float(exponent))

    def __getitem__(self, key):
        return tslice(self, key)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes that numpy broadcasting expanded."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _make(values: np.ndarray, parents: tuple[Tensor, ...],
          backward: Callable[[np.ndarray], None]) -> Tensor:
    needs = any(p.requires_grad or p._parents for p in parents)
    return Tensor(values, _parents=parents if needs else (),
                  _backward=backward if needs else None)


# Arithmetic ---------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out_vals = a.values + b.values

    def backward(g: np.ndarray) -> None:
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_vals, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        a._accumulate(-g)

    return _make(-a.values, (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_vals = a.values * b.values

    def backward(g: np.ndarray) -> None:
        a._accumulate(_unbroadcast(g * b.values, a.shape))
        b._accumulate(_unbroadcast(g * a.values, b.shape))

    return _make(out_vals, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out_vals = a.values / b.values

    def backward(g: np.ndarray) -> None:
        a._accumulate(_unbroadcast(g / b.values, a.shape))
        b._accumulate(_unbroadcast(-g * a.values / (b.values ** 2), b.shape))

    return _make(out_vals, (a, b), backward)


def pow_const(a: Tensor, exponent: float) -> Tensor:
    out_vals = a.values ** exponent

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * exponent * a.values ** (exponent - 1.0))

    return _make(out_vals, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.shape[-1] != b.values.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_vals = a.values @ b.values

    def backward(g: np.ndarray) -> None:
        a._accumulate(g @ b.values.T)
        b._accumulate(a.values.T @ g)

    return _make(out_vals, (a, b), backward)


# Nonlinearities -----------------------------------------------------------

def exp(a: Tensor) -> Tensor:
    out_vals = np.exp(a.values)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * out_vals)

    return _make(out_vals, (a,), backward)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out_vals = np.log(a.values)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g / a.values)

    return _make(out_vals, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.values > 0.0
    out_vals = np.where(mask, a.values, slope * a.values)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * np.where(mask, 1.0, slope))

    return _make(out_vals, (a,), backward)


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    mask = a.values > 0.0
    expm1 = alpha * np.expm1(np.minimum(a.values, 0.0))
    out_vals = np.where(mask, a.values, expm1)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * np.where(mask, 1.0, expm1 + alpha))

    return _make(out_vals, (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_vals = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> None:
        dot = (g * out_vals).sum(axis=axis, keepdims=True)
        a._accumulate(out_vals * (g - dot))

    return _make(out_vals, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_vals = shifted - lse

    def backward(g: np.ndarray) -> None:
        soft = np.exp(out_vals)
        a._accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out_vals, (a,), backward)


# Shape manipulation -------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [(_wrap(t)) for t in tensors]
    out_vals = np.concatenate([t.values for t in ts], axis=axis)
    sizes = [t.values.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for t, start, stop in zip(ts, offsets[:-1], offsets[1:]):
            index: list = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            t._accumulate(g[tuple(index)])

    return _make(out_vals, tuple(ts), backward)


def _key_may_repeat(key) -> bool:
    if isinstance(key, (int, slice)) or key is None or key is Ellipsis:
        return False
    if isinstance(key, tuple):
        return any(_key_may_repeat(k) for k in key)
    return True  # array-like fancy index: duplicates possible


def tslice(a: Tensor, key) -> Tensor:
    out_vals = a.values[key]

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(a.values)
        if _key_may_repeat(key):
            np.add.at(full, key, g)
        else:
            full[key] += g
        a._accumulate(full)

    return _make(out_vals, (a,), backward)


def gather_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Select rows by integer index; backward scatter-adds into the source."""
    idx = np.asarray(index, dtype=np.int64)
    out_vals = a.values[idx]

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(a.values)
        np.add.at(full, idx, g)
        a._accumulate(full)

    return _make(out_vals, (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out_vals = a.values.reshape(shape)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g.reshape(a.shape))

    return _make(out_vals, (a,), backward)


# Reductions ---------------------------------------------------------------

def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out_vals = a.values.sum(axis=axis, keepdims=keepdims)

    def backward(g: np.ndarray) -> None:
        if axis is None:
            a._accumulate(np.full_like(a.values, float(g)))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.shape).copy())

    return _make(out_vals, (a,), backward)


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), Tensor(1.0 / count))


# Segment operations over edge-grouped indices ------------------------------

def segment_sum(a: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` grouped by ``segments`` (shape (n_rows,))."""
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape[0] != a.shape[0]:
        raise ValueError(f"segment ids {seg.shape} do not match rows {a.shape}")
    out_vals = np.zeros((num_segments,) + a.values.shape[1:], dtype=np.float64)
    np.add.at(out_vals, seg, a.values)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g[seg])

    return _make(out_vals, (a,), backward)


def segment_max_values(values: np.ndarray, segments: np.ndarray, num_segments: int) -> np.ndarray:
    """Per-segment maximum of raw values (no gradient; used as a stability shift)."""
    seg = np.asarray(segments, dtype=np.int64)
    out = np.full((num_segments,) + values.shape[1:], -np.inf)
    np.maximum.at(out, seg, values)
    return out


def segment_softmax(a: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Softmax over the rows sharing a segment id; empty segments are fine.

    The per-segment max is treated as a constant shift, so gradients match
    the exact softmax while staying numerically stable.
    """
    seg = np.asarray(segments, dtype=np.int64)
    shift = segment_max_values(a.values, seg, num_segments)
    shifted = add(a, Tensor(-shift[seg]))
    e = exp(shifted)
    denom = segment_sum(e, seg, num_segments)
    return div(e, gather_rows(denom, seg))


# Regularization -----------------------------------------------------------

def dropout(a: Tensor, mask: np.ndarray, rate: float) -> Tensor:
    """Mask-based dropout: caller supplies the Bernoulli keep-mask."""
    if rate <= 0.0:
        return a
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    scale = (np.asarray(mask, dtype=np.float64) / (1.0 - rate))
    return mul(a, Tensor(scale))


def affine_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each column over rows, then apply a learnable scale/shift."""
    mean = tmean(a, axis=0, keepdims=True)
    centered = a - mean
    var = tmean(centered * centered, axis=0, keepdims=True)
    inv = pow_const(var + Tensor(eps), -0.5)
    return centered * inv * gamma + beta
