"""A small reverse-mode automatic differentiation engine over numpy arrays.

Only the operations the deblurring networks need are provided. Every op
records a closure computing the vector-Jacobian product for its parents;
:meth:`Tensor.backward` walks the graph in reverse topological order.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """N-dimensional float array with optional gradient tracking.

    Image data uses the ``batch x channels x height x width`` layout.
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    # -- graph ------------------------------------------------------------
    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf.

        Gradients accumulate across calls; reset them with ``zero_grad``.
        """
        if grad is None:
            if self.size != 1:
                raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.dtype).reshape(self.shape)

        order = _topological(self)
        grads = {id(self): grad}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a scalar")
        return mul(self, 1.0 / float(other))

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def abs(self):
        return absolute(self)

    def square(self):
        return square(self)

    def log(self):
        return log(self)


class Parameter(Tensor):
    """A named trainable tensor; ``grad`` starts as zeros."""

    def __init__(self, name: str, data, requires_grad: bool = True):
        super().__init__(data, requires_grad=requires_grad)
        self.name = name
        self.grad = np.zeros_like(self.data) if requires_grad else None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _topological(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
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
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    order.reverse()
    return order


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# -- elementwise arithmetic (same shape, or scalar operands) ---------------

def _check_same(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape and b.size != 1 and a.size != 1:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _as_tensor(b, a)
    _check_same(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    _check_same(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    if not isinstance(b, Tensor):
        c = np.asarray(b, dtype=a.dtype)
        return _make(a.data * c, (a,), lambda g: (g * c,))
    _check_same(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)))


def sum_all(x: Tensor) -> Tensor:
    return _make(np.asarray(x.data.sum(), dtype=x.dtype), (x,),
                 lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype),))


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    return _make(np.asarray(x.data.mean(), dtype=x.dtype), (x,),
                 lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def absolute(x: Tensor) -> Tensor:
    return _make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to ``[lo, hi]``; the gradient is zero where clipping was active."""
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


# -- activations -----------------------------------------------------------

def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    y = np.where(pos, x.data, x.data * x.dtype.type(slope))
    return _make(y, (x,), lambda g: (np.where(pos, g, g * g.dtype.type(slope)),))


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign to avoid overflow in exp
    z = x.data
    e = np.exp(-np.abs(z))
    y = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def activation(x: Tensor, kind: str, slope: float = 0.2) -> Tensor:
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "relu":
        return relu(x)
    raise ValueError(f"unknown activation {kind!r}")


# -- structural ops ----------------------------------------------------------

def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate ``B x C_i x H x W`` tensors along the channel axis."""
    xs = list(xs)
    if not xs:
        raise ShapeError("concat_channels needs at least one tensor")
    if len(xs) == 1:
        return xs[0]
    ref = xs[0].shape
    for x in xs[1:]:
        if x.ndim != 4 or (x.shape[0], x.shape[2], x.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(f"concat_channels: {x.shape} does not match batch/spatial size of {ref}")
    data = np.concatenate([x.data for x in xs], axis=1)
    bounds = np.cumsum([0] + [x.shape[1] for x in xs])

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return _make(data, xs, backward)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return _make(x.data[:, start:stop].copy(), (x,), backward)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
           dilation: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded 2-D cross-correlation lowered to one matrix product.

    ``x`` is ``B x Cin x H x W`` and ``weight`` is ``Cout x Cin x k x k``.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    B, cin, H, W = x.shape
    cout, wcin, k, k2 = weight.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels but weight {weight.shape} expects {wcin}")
    if k != k2:
        raise ShapeError(f"conv2d: non-square kernel {weight.shape}")
    if dilation < 1 or stride < 1:
        raise ValueError("conv2d: stride and dilation must be >= 1")
    Ho = kernels.conv_output_size(H, k, stride, dilation, padding)
    Wo = kernels.conv_output_size(W, k, stride, dilation, padding)
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d: input {H}x{W} too small for kernel {k} dilation {dilation}")

    pointwise = k == 1 and stride == 1 and padding == 0
    if pointwise:
        cols = x.data.transpose(1, 0, 2, 3).reshape(cin, B * H * W)
    else:
        cols = kernels.im2col(x.data, k, stride, dilation, padding)
    w2 = weight.data.reshape(cout, cin * k * k)
    out = w2 @ cols
    if bias is not None:
        out += bias.data.reshape(cout, 1)
    y = np.ascontiguousarray(out.reshape(cout, B, Ho, Wo).transpose(1, 0, 2, 3))

    def backward(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(cout, B * Ho * Wo)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = w2.T @ g2
            if pointwise:
                gx = np.ascontiguousarray(gcols.reshape(cin, B, H, W).transpose(1, 0, 2, 3))
            else:
                gx = kernels.col2im(gcols, x.shape, k, stride, dilation, padding)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(y, parents, backward)


def instance_norm(x: Tensor, gain: Tensor, shift: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Normalize every (sample, channel) plane by its own mean and variance.

    Constant planes (including 1x1 planes) normalize to zero before the
    per-channel affine map.
    """
    if x.ndim != 4:
        raise ShapeError(f"instance_norm expects B x C x H x W, got {x.shape}")
    C = x.shape[1]
    if gain.shape != (C,) or shift.shape != (C,):
        raise ShapeError(f"instance_norm: gain/shift must have shape ({C},)")
    n = x.shape[2] * x.shape[3]
    mean = x.data.mean(axis=(2, 3), keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    flat = x.data.reshape(x.shape[0], C, -1)
    live = (flat.max(axis=2) > flat.min(axis=2))[:, :, None, None]
    invstd = np.where(live, 1.0 / np.sqrt(var + epsilon), 0.0).astype(x.dtype)
    xhat = centered * invstd
    g4 = gain.data.reshape(1, C, 1, 1)
    y = xhat * g4 + shift.data.reshape(1, C, 1, 1)

    def backward(g):
        gx = None
        if x.requires_grad:
            dxhat = g * g4
            s1 = dxhat.sum(axis=(2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(2, 3), keepdims=True)
            gx = (invstd / n) * (n * dxhat - s1 - xhat * s2)
        ggain = (g * xhat).sum(axis=(0, 2, 3)) if gain.requires_grad else None
        gshift = g.sum(axis=(0, 2, 3)) if shift.requires_grad else None
        return gx, ggain, gshift

    return _make(y, (x, gain, shift), backward)


def dropout(x: Tensor, rate: float, training: bool, rng_seed=None) -> Tensor:
    """Inverted dropout; the identity when not training or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    rng = np.random.default_rng(rng_seed)
    keep = rng.random(x.shape) >= rate
    scale = (keep / (1.0 - rate)).astype(x.dtype)
    return _make(x.data * scale, (x,), lambda g: (g * scale,))
