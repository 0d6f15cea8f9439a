"""Minimal dense tensor algebra with reverse-mode differentiation.

Tensors are immutable numpy-backed values (float32 or float64, row-major).
Operations executed while a Tape is active are recorded in order; a backward
pass replays the record exactly once in reverse, accumulating adjoints by
summation, so gradients are deterministic for a fixed op sequence.

A Tape is confined to one logical thread.  Finiteness of every operation's
output is asserted while ``finite_checks`` is enabled (the default), turning
silent NaN/inf propagation into immediate failures.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf as _erf

__all__ = [
    "Tensor", "Tape", "Gradients", "ShapeError", "NonFiniteError", "tensor",
    "add", "sub", "mul", "div", "neg", "sigmoid", "tanh", "relu", "gelu",
    "exp", "log", "sqrt", "absolute", "elementwise", "matmul", "softmax",
    "layer_norm", "reshape", "transpose", "concat", "take", "reduce_sum",
    "reduce_mean", "register", "set_finite_checks", "finite_checks_enabled",
]

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))

_CHECK_FINITE = True


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or infinity while finite checks were on."""


def set_finite_checks(enabled: bool) -> bool:
    """Toggle the per-op output finiteness assertion; returns prior value."""
    global _CHECK_FINITE
    prior = _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)
    return prior


def finite_checks_enabled() -> bool:
    return _CHECK_FINITE


def _checked(arr: np.ndarray, op: str) -> np.ndarray:
    if _CHECK_FINITE and not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    return arr


class Tensor:
    """Immutable n-dimensional array of float32 or float64 scalars."""

    __slots__ = ("data", "_tape", "_node")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        arr = arr.view()
        arr.flags.writeable = False
        self.data = arr
        self._tape = None
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_err(self)

    def numpy(self) -> np.ndarray:
        """The underlying (read-only) array."""
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    # arithmetic operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    # shape / reduction methods
    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def min(self, axis=None, keepdims=False):
        return reduce_extremum(self, axis, keepdims, np.argmin, np.minimum.reduce)

    def max(self, axis=None, keepdims=False):
        return reduce_extremum(self, axis, keepdims, np.argmax, np.maximum.reduce)


def _scalar_err(t):
    raise ShapeError(f"item() needs a single-element tensor, got shape {t.shape}")


def tensor(data, dtype=None) -> Tensor:
    return data if isinstance(data, Tensor) and dtype is None else Tensor(data, dtype=dtype)


class Gradients:
    """Per-leaf adjoints from one backward pass."""

    def __init__(self, tape, adjoints):
        self._tape = tape
        self._adj = adjoints

    def wrt(self, t: Tensor) -> np.ndarray:
        """Gradient of the loss w.r.t. ``t``; zeros if no path reached it."""
        node = t._node if t._tape is self._tape else None
        g = self._adj.get(node) if node is not None else None
        if g is None:
            return np.zeros_like(t.data)
        return np.broadcast_to(g, t.shape).astype(t.dtype, copy=False) if g.shape != t.shape else g


class Tape:
    """Ordered record of primitive operations for reverse-mode differentiation."""

    _active = None

    def __init__(self):
        self._ops = []  # (out_node, in_nodes, backward_fn)
        self._next = 0
        self._prev = None

    def __enter__(self):
        self._prev = Tape._active
        Tape._active = self
        return self

    def __exit__(self, *exc):
        Tape._active = self._prev
        self._prev = None
        return False

    def _node_of(self, t: Tensor) -> int:
        if t._tape is not self:
            t._tape = self
            t._node = self._next
            self._next += 1
        return t._node

    def record(self, out: Tensor, inputs, backward_fn) -> None:
        """Append one primitive: inputs are read before the output node is
        assigned, preserving topological order."""
        in_nodes = [self._node_of(t) for t in inputs]
        out._tape = self
        out._node = self._next
        self._next += 1
        self._ops.append((out._node, in_nodes, backward_fn))

    def backward(self, loss: Tensor) -> Gradients:
        """Reverse sweep from a scalar loss; visits each node exactly once."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ValueError("loss tensor was not computed on this tape")
        adj = {loss._node: np.ones_like(loss.data)}
        for out_node, in_nodes, backward_fn in reversed(self._ops):
            g = adj.pop(out_node, None)
            if g is None:
                continue
            for node, gin in zip(in_nodes, backward_fn(g)):
                if gin is None:
                    continue
                acc = adj.get(node)
                adj[node] = gin if acc is None else acc + gin
        return Gradients(self, adj)


def register(out: Tensor, inputs, backward_fn) -> Tensor:
    """Record a primitive on the active tape (if any) and return its output.

    ``backward_fn(g)`` must return one adjoint per input (None for no flow).
    Modules defining their own primitives (e.g. convolutions) use this hook.
    """
    t = Tape._active
    if t is not None:
        t.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape, dtype) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape != shape:
        extra = g.ndim - len(shape)
        if extra > 0:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
    return g.astype(dtype, copy=False)


def _binary(a, b, op):
    # python-number operands adopt the tensor operand's dtype (no upcasting)
    if isinstance(a, Tensor) and isinstance(b, (int, float)):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and isinstance(a, (int, float)):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    else:
        a, b = tensor(a), tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op} shapes do not align: {a.shape} vs {b.shape}") from None
    return a, b


# ---------------------------------------------------------------------------
# elementwise primitives

def add(a, b) -> Tensor:
    a, b = _binary(a, b, "add")
    out = Tensor(_checked(a.data + b.data, "add"))
    return register(out, (a, b), lambda g: (_unbroadcast(g, a.shape, a.dtype),
                                            _unbroadcast(g, b.shape, b.dtype)))


def sub(a, b) -> Tensor:
    a, b = _binary(a, b, "sub")
    out = Tensor(_checked(a.data - b.data, "sub"))
    return register(out, (a, b), lambda g: (_unbroadcast(g, a.shape, a.dtype),
                                            _unbroadcast(-g, b.shape, b.dtype)))


def mul(a, b) -> Tensor:
    a, b = _binary(a, b, "mul")
    out = Tensor(_checked(a.data * b.data, "mul"))
    return register(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape, a.dtype),
                                            _unbroadcast(g * a.data, b.shape, b.dtype)))


def div(a, b) -> Tensor:
    a, b = _binary(a, b, "div")
    out = Tensor(_checked(a.data / b.data, "div"))
    return register(out, (a, b),
                    lambda g: (_unbroadcast(g / b.data, a.shape, a.dtype),
                               _unbroadcast(-g * a.data / (b.data * b.data), b.shape, b.dtype)))


def neg(a) -> Tensor:
    a = tensor(a)
    out = Tensor(-a.data)
    return register(out, (a,), lambda g: (-g,))


def sigmoid(a) -> Tensor:
    a = tensor(a)
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(_checked(y, "sigmoid"))
    return register(out, (a,), lambda g: (g * (y * (1.0 - y)),))


def tanh(a) -> Tensor:
    a = tensor(a)
    y = np.tanh(a.data)
    out = Tensor(_checked(y, "tanh"))
    return register(out, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = tensor(a)
    y = np.maximum(a.data, 0)
    out = Tensor(_checked(y, "relu"))
    return register(out, (a,), lambda g: (g * (a.data > 0),))


def gelu(a) -> Tensor:
    """Gaussian-error linear unit, exact (erf) form."""
    a = tensor(a)
    x = a.data
    phi = 0.5 * (1.0 + _erf(x / _SQRT2))
    out = Tensor(_checked(x * phi, "gelu"))

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return (g * (phi + x * pdf),)

    return register(out, (a,), backward)


def exp(a) -> Tensor:
    a = tensor(a)
    y = np.exp(a.data)
    out = Tensor(_checked(y, "exp"))
    return register(out, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(a.data)
    out = Tensor(_checked(y, "log"))
    return register(out, (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = tensor(a)
    y = np.sqrt(a.data)
    out = Tensor(_checked(y, "sqrt"))

    def backward(g):
        # subgradient 0 at the domain boundary (the norm-at-zero case),
        # so an exactly-zero residual contributes no gradient instead of NaN
        with np.errstate(divide="ignore"):
            d = np.where(y > 0, 0.5 / np.where(y > 0, y, 1.0), 0.0)
        return (g * d,)

    return register(out, (a,), backward)


def absolute(a) -> Tensor:
    a = tensor(a)
    out = Tensor(np.abs(a.data))
    return register(out, (a,), lambda g: (g * np.sign(a.data),))


_UNARY_KINDS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu, "gelu": gelu}
_BINARY_KINDS = {"add": add, "sub": sub, "mul": mul}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Elementwise op dispatch by kind; binary kinds require equal shapes."""
    if kind in _UNARY_KINDS:
        if b is not None:
            raise ShapeError(f"{kind} takes one operand")
        return _UNARY_KINDS[kind](a)
    if kind in _BINARY_KINDS:
        a, b = tensor(a), tensor(b)
        if a.shape != b.shape:
            raise ShapeError(f"{kind} shapes differ: {a.shape} vs {b.shape}")
        return _BINARY_KINDS[kind](a, b)
    raise ValueError(f"unknown elementwise kind: {kind!r}")


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch broadcasting; operands must be >= 2-D."""
    a, b = tensor(a), tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out = Tensor(_checked(a.data @ b.data, "matmul"))

    def backward(g):
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        return (_unbroadcast(ga, a.shape, a.dtype), _unbroadcast(gb, b.shape, b.dtype))

    return register(out, (a, b), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Max-subtracted softmax; outputs along ``axis`` sum to 1."""
    a = tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(_checked(y, "softmax"))

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return register(out, (a,), backward)


def layer_norm(a, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be > 0, got {eps}")
    a, gamma, beta = tensor(a), tensor(gamma), tensor(beta)
    d = a.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"gamma/beta must have shape ({d},), got {gamma.shape} / {beta.shape}")
    mean = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mean
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(_checked(gamma.data * xhat + beta.data, "layer_norm"))

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead).astype(gamma.dtype, copy=False)
        dbeta = g.sum(axis=lead).astype(beta.dtype, copy=False)
        dxhat = g * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return (dx.astype(a.dtype, copy=False), dgamma, dbeta)

    return register(out, (a, gamma, beta), backward)


# ---------------------------------------------------------------------------
# shape / indexing

def reshape(a, shape) -> Tensor:
    a = tensor(a)
    out = Tensor(a.data.reshape(shape))
    return register(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = tensor(a)
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    inv = None if axes is None else tuple(np.argsort(axes))
    return register(out, (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis: int = -1) -> Tensor:
    parts = [tensor(t) for t in tensors]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return register(out, parts, lambda g: tuple(np.split(g, splits, axis=axis)))


def take(a, key) -> Tensor:
    """Basic (slice/int) indexing; adjoint scatters into a zero array."""
    a = tensor(a)
    out = Tensor(a.data[key])

    def backward(g):
        z = np.zeros(a.shape, dtype=g.dtype)
        z[key] = g
        return (z,)

    return register(out, (a,), backward)


# ---------------------------------------------------------------------------
# reductions

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = Tensor(_checked(a.data.sum(axis=axes, keepdims=keepdims), "sum"))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)

    return register(out, (a,), backward)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = Tensor(_checked(a.data.mean(axis=axes, keepdims=keepdims), "mean"))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).astype(a.dtype, copy=False),)

    return register(out, (a,), backward)


def reduce_extremum(a, axis, keepdims, argfn, _reducefn) -> Tensor:
    """Min/max over one axis (or all); adjoint flows to the first extremum."""
    a = tensor(a)
    if axis is None:
        flat_idx = argfn(a.data)
        out = Tensor(a.data.reshape(-1)[flat_idx].reshape(() if not keepdims else (1,) * a.ndim))

        def backward(g):
            z = np.zeros(a.size, dtype=a.dtype)
            z[flat_idx] = g.reshape(-1)[0]
            return (z.reshape(a.shape),)

        return register(out, (a,), backward)

    ax = axis % a.ndim
    idx = argfn(a.data, axis=ax)
    picked = np.take_along_axis(a.data, np.expand_dims(idx, ax), axis=ax)
    out = Tensor(picked if keepdims else picked.squeeze(ax))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        z = np.zeros(a.shape, dtype=g.dtype)
        np.put_along_axis(z, np.expand_dims(idx, ax), g, axis=ax)
        return (z,)

    return register(out, (a,), backward)
