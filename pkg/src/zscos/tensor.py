"""Dense tensors with reverse-mode gradients.

Every primitive below builds an output ``Tensor`` plus a closure that maps the
upstream gradient to one gradient per parent (the adjoint rule).  Graphs are
only recorded when at least one input requires a gradient.
"""
from __future__ import annotations

import contextlib
import functools
import math

import numpy as np
from scipy.special import erf, expit

from .errors import ConfigError, DimensionError, NumericError

LN_EPS = 1e-6

_state = {"checked": False, "grad": True}


@contextlib.contextmanager
def checked(enabled: bool = True):
    """Reject NaN/Inf at tensor construction while active."""
    prev = _state["checked"]
    _state["checked"] = enabled
    try:
        yield
    finally:
        _state["checked"] = prev


@contextlib.contextmanager
def no_grad():
    prev = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = prev


def is_checked() -> bool:
    return _state["checked"]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, *, op: str = "leaf",
                 dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if _state["checked"] and not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0].tolist()
            raise NumericError(f"non-finite value from '{op}' at index {bad}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = ()
        self._backward = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- reverse pass -------------------------------------------------------
    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        self.grad = np.array(grad, dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=parent.data.dtype)
                else:
                    parent.grad = parent.grad + g
            if node._parents:
                # interior gradients are not needed once propagated
                node.grad = None if node is not self else node.grad


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
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op: str) -> Tensor:
    out = Tensor(data, op=op)
    if _state["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def stop_gradient(x: Tensor) -> Tensor:
    return Tensor(as_tensor(x).data, op="stop_gradient")


# -- elementwise arithmetic ------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        return (_unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None)

    return _make(out, (a, b), bw, "div")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clip")


def sparsify(x: Tensor, threshold: float) -> Tensor:
    """Keep entries ``>= threshold``; everything else becomes 0."""
    keep = x.data >= threshold
    return _make(np.where(keep, x.data, 0.0).astype(x.dtype), (x,),
                 lambda g: (g * keep,), "sparsify")


# -- reductions and shape ops --------------------------------------------
def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return sum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {x.shape}")
    return _make(x.data.T, (x,), lambda g: (g.T,), "transpose")


def getitem(x: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(x.data)
        full[idx] += g
        return (full,)

    return _make(x.data[idx], (x,), bw, "getitem")


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tensors, bw, "concat")


# -- the primitive set ---------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def bw(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x, W, b=None) -> Tensor:
    x, W = as_tensor(x), as_tensor(W)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"linear shape mismatch: {x.shape} x {W.shape}")
    out = x.data @ W.data
    parents = [x, W]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[1],):
            raise DimensionError(f"bias shape {b.shape} does not match output width {W.shape[1]}")
        out = out + b.data
        parents.append(b)

    def bw(g):
        grads = [g @ W.data.T if x.requires_grad else None,
                 x.data.T @ g if W.requires_grad else None]
        if b is not None:
            grads.append(g.sum(axis=0) if b.requires_grad else None)
        return tuple(grads)

    return _make(out, parents, bw, "linear")


def softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _make(out, (x,), bw, "softmax_rows")


def minmax_rows(x: Tensor) -> Tensor:
    """Per-row ``(x - min) / (max - min)``; constant rows map to zeros."""
    data = x.data
    rows = np.arange(data.shape[0])
    lo_idx = data.argmin(axis=1)
    hi_idx = data.argmax(axis=1)
    lo = data[rows, lo_idx][:, None]
    span = data[rows, hi_idx][:, None] - lo
    live = span > 0
    safe = np.where(live, span, 1.0)
    out = np.where(live, (data - lo) / safe, 0.0)

    def bw(g):
        g = np.where(live, g, 0.0)
        gx = g / safe
        # min and max positions are treated as locally fixed selections
        d_lo = (g * (out - 1.0)).sum(axis=1) / safe[:, 0]
        d_hi = -(g * out).sum(axis=1) / safe[:, 0]
        np.add.at(gx, (rows, lo_idx), d_lo)
        np.add.at(gx, (rows, hi_idx), d_hi)
        return (gx,)

    return _make(out.astype(data.dtype), (x,), bw, "minmax_rows")


def layer_norm(x, gamma, beta, eps: float = LN_EPS) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gx = None
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=1, keepdims=True))
        return (gx,
                (g * xhat).sum(axis=0) if gamma.requires_grad else None,
                g.sum(axis=0) if beta.requires_grad else None)

    return _make(out, (x, gamma, beta), bw, "layer_norm")


def relu(x: Tensor) -> Tensor:
    on = x.data > 0
    return _make(x.data * on, (x,), lambda g: (g * on,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
    return _make(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),), "gelu")


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "gelu": gelu}


def activate(x: Tensor, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(x)


@functools.lru_cache(maxsize=None)
def interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic 1-D linear interpolation matrix, half-pixel centres."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = max((i + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(math.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        lam = src - i0
        m[i, i0] += 1.0 - lam
        m[i, i1] += lam
    m.setflags(write=False)
    return m


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    if x.ndim != 3:
        raise DimensionError(f"resize_bilinear expects h x w x c, got {x.shape}")
    if out_h <= 0 or out_w <= 0 or min(x.shape) <= 0:
        raise DimensionError(f"cannot resize {x.shape} to {out_h}x{out_w}")
    h, w, _ = x.shape
    if (h, w) == (out_h, out_w):
        return _make(x.data.copy(), (x,), lambda g: (g,), "resize_bilinear")
    rh = interp_matrix(h, out_h).astype(x.dtype, copy=False)
    rw = interp_matrix(w, out_w).astype(x.dtype, copy=False)
    out = np.matmul(rw, np.tensordot(rh, x.data, axes=(1, 0)))

    def bw(g):
        return (np.tensordot(rh.T, np.matmul(rw.T, g), axes=(1, 0)),)

    return _make(out, (x,), bw, "resize_bilinear")
