"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation on a :class:`Tensor` that requires gradients records a
:class:`Node` holding its inputs and a backward closure. Nodes carry a
global, monotonically increasing sequence number, so sorting the nodes
reachable from a loss by that number gives a valid topological order;
:meth:`Tensor.backward` walks that order once in reverse.

Gradients accumulate into ``Tensor.grad`` of leaves until reset with
:func:`zero_grads`.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ShapeError",
    "Tensor",
    "Node",
    "GradTape",
    "no_grad",
    "is_grad_enabled",
    "zero_grads",
    "tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "sqrt",
    "sigmoid",
    "relu",
    "relu_squared",
    "cos",
    "arccos",
    "clip",
    "tsum",
    "mean",
    "reshape",
    "transpose",
    "take",
    "concat",
    "split",
    "stack",
    "shift2d",
    "linear",
    "conv2d",
    "depthwise_conv2d",
    "layer_norm",
    "gradcheck",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_sequence = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable recording for the enclosed block (current thread only)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Node:
    """One recorded operation: its inputs and how to push gradients to them."""

    __slots__ = ("seq", "op", "inputs", "backward_fn")

    def __init__(self, op: str, inputs: tuple["Tensor", ...], backward_fn: Callable):
        self.seq = next(_sequence)
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn

    def __repr__(self) -> str:
        return f"Node({self.op}, seq={self.seq})"


class GradTape:
    """The recorded nodes reachable from a root tensor, in topological order."""

    def __init__(self, nodes: list[Node]):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: "Tensor") -> "GradTape":
        if root._node is None:
            return cls([])
        seen: dict[int, Node] = {}
        stack = [root._node]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen[id(node)] = node
            for t in node.inputs:
                if t._node is not None and id(t._node) not in seen:
                    stack.append(t._node)
        return cls(sorted(seen.values(), key=lambda n: n.seq))

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    """An n-d float64 array that can take part in gradient recording."""

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: Node | None = None
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data if data.dtype == np.float64 else data.astype(np.float64)
        t.requires_grad = False
        t.grad = None
        t._node = None
        t.name = None
        return t

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.data.shape[0]

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
        return neg(self)

    def __getitem__(self, index):
        return _getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    # -- differentiation ------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise RuntimeError("loss does not depend on any tensor that requires grad")
        if self._node is None:
            _accumulate_leaf(self, np.ones_like(self.data))
            return
        tape = GradTape.trace(self)
        grads: dict[int, np.ndarray] = {id(self._node): np.ones_like(self.data)}
        for node in reversed(tape.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            in_grads = node.backward_fn(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if t._node is None:
                    _accumulate_leaf(t, gi)
                else:
                    key = id(t._node)
                    prev = grads.get(key)
                    grads[key] = gi if prev is None else prev + gi


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=np.float64).reshape(t.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=np.float64))


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor._wrap(np.asarray(data, dtype=np.float64))
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(op, tuple(parents), backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data
    return _result(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = _as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def relu_squared(a) -> Tensor:
    a = _as_tensor(a)
    r = np.maximum(a.data, 0.0)
    return _result(r * r, (a,), lambda g: (2.0 * g * r,), "relu_squared")


def cos(a) -> Tensor:
    a = _as_tensor(a)
    return _result(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),), "cos")


def arccos(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(np.abs(a.data) >= 1.0):
        raise ValueError("arccos input must lie strictly inside (-1, 1) for a finite gradient")
    return _result(
        np.arccos(a.data), (a,), lambda g: (-g / np.sqrt(1.0 - a.data * a.data),), "arccos"
    )


def clip(a, lo: float, hi: float) -> Tensor:
    a = _as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _result(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


# ---------------------------------------------------------------------------
# reductions and layout
# ---------------------------------------------------------------------------


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return tsum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = a.data.reshape(shape)
    return _result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _result(
        np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose"
    )


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, type(Ellipsis), type(None))) for i in items)


def _getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]
    basic = _is_basic_index(index)

    def backward(g):
        gx = np.zeros_like(a.data)
        if basic:
            gx[index] += g
        else:
            np.add.at(gx, index, g)
        return (gx,)

    return _result(np.array(out, copy=True), (a,), backward, "getitem")


def take(a, indices, axis: int = -1) -> Tensor:
    """Gather along ``axis``; a permutation index gets an exact inverse backward."""
    a = _as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim
    n = a.shape[axis]
    out = np.take(a.data, indices, axis=axis)
    is_perm = indices.ndim == 1 and len(indices) == n and np.array_equal(
        np.bincount(indices, minlength=n), np.ones(n, dtype=np.intp)
    )

    def backward(g):
        if is_perm:
            return (np.take(g, np.argsort(indices), axis=axis),)
        gx = np.zeros_like(a.data)
        gm = np.moveaxis(gx, axis, 0)
        np.add.at(gm, indices, np.moveaxis(g, axis, 0))
        return (gx,)

    return _result(out, (a,), backward, "take")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat needs at least one tensor")
    nd = ts[0].ndim
    ax = axis % nd
    for t in ts[1:]:
        if t.ndim != nd or any(t.shape[i] != ts[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(
                f"concat: shapes {ts[0].shape} and {t.shape} differ outside axis {ax}"
            )
    sizes = [t.shape[ax] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(ts))
        )

    return _result(np.concatenate([t.data for t in ts], axis=ax), ts, backward, "concat")


def split(a, sections, axis: int = -1) -> list[Tensor]:
    """Split into equal parts (int) or parts of the given sizes (list)."""
    a = _as_tensor(a)
    ax = axis % a.ndim
    n = a.shape[ax]
    if isinstance(sections, int):
        if n % sections:
            raise ShapeError(f"split: axis {ax} of size {n} not divisible by {sections}")
        sizes = [n // sections] * sections
    else:
        sizes = list(sections)
        if sum(sizes) != n:
            raise ShapeError(f"split: sizes {sizes} do not sum to axis {ax} size {n}")
    parts, start = [], 0
    for s in sizes:
        idx = [slice(None)] * a.ndim
        idx[ax] = slice(start, start + s)
        parts.append(_getitem(a, tuple(idx)))
        start += s
    return parts


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    nd = ts[0].ndim + 1
    ax = axis % nd
    expanded = [reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]) for t in ts]
    return concat(expanded, axis=ax)


def _clamp_shift_backward(g: np.ndarray, d: int, axis: int) -> np.ndarray:
    # forward: out[i] = x[clip(i + d, 0, n - 1)]
    if d == 0:
        return g
    n = g.shape[axis]
    gm = np.moveaxis(g, axis, 0)
    gx = np.zeros_like(gm)
    if abs(d) >= n:
        edge = n - 1 if d > 0 else 0
        gx[edge] = gm.sum(axis=0)
    elif d > 0:
        gx[d:] += gm[: n - d]
        gx[n - 1] += gm[n - d :].sum(axis=0)
    else:
        k = -d
        gx[: n - k] += gm[k:]
        gx[0] += gm[:k].sum(axis=0)
    return np.moveaxis(gx, 0, axis)


def shift2d(a, dh: int, dw: int) -> Tensor:
    """Edge-clamped spatial shift on axes (-3, -2) of a [..., H, W, C] tensor.

    ``out[..., h, w, :] = a[..., clip(h + dh), clip(w + dw), :]``
    """
    a = _as_tensor(a)
    if a.ndim < 3:
        raise ShapeError(f"shift2d needs [..., H, W, C], got {a.shape}")
    H, W = a.shape[-3], a.shape[-2]
    hi = np.clip(np.arange(H) + dh, 0, H - 1)
    wi = np.clip(np.arange(W) + dw, 0, W - 1)
    out = np.take(np.take(a.data, hi, axis=-3), wi, axis=-2)

    def backward(g):
        g = _clamp_shift_backward(g, dw, a.ndim - 2)
        return (_clamp_shift_backward(g, dh, a.ndim - 3),)

    return _result(out, (a,), backward, "shift2d")


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


def linear(x, weight) -> Tensor:
    """``x[..., C_in] @ weight[C_in, C_out]``."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if weight.ndim != 2:
        raise ShapeError(f"linear: weight must be 2-d, got {weight.shape}")
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"linear: input last axis ({x.shape[-1]}) != weight axis 0 ({weight.shape[0]})"
        )
    out = x.data @ weight.data

    def backward(g):
        gx = g @ weight.data.T if x.requires_grad else None
        gw = None
        if weight.requires_grad:
            gw = x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, weight.shape[1])
        return gx, gw

    return _result(out, (x, weight), backward, "linear")


def _windows(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def _scatter_windows(gwin: np.ndarray, in_shape, k: int, stride: int, padding: int) -> np.ndarray:
    # gwin: [N, C, Ho, Wo, k, k] -> gradient w.r.t. the unpadded input
    n, c, h, w = in_shape
    _, _, ho, wo, _, _ = gwin.shape
    gp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for u in range(k):
        for v in range(k):
            gp[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += gwin[..., u, v]
    if padding:
        gp = gp[:, :, padding:-padding, padding:-padding]
    return gp


def _conv_out_size(size: int, k: int, stride: int, padding: int, axis: str) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise ShapeError(
            f"conv2d: axis {axis} size {size} with k={k}, stride={stride}, "
            f"padding={padding} gives a non-integral or empty output"
        )
    return span // stride + 1


def conv2d(x, weight, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x[N, C_in, H, W] with weight[C_out, C_in, k, k]."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input and weight, got {x.shape}, {weight.shape}")
    c_out, c_in, k, k2 = weight.shape
    if k != k2 or k < 1:
        raise ShapeError(f"conv2d: kernel axes 2,3 must be equal and >= 1, got {k}x{k2}")
    if x.shape[1] != c_in:
        raise ShapeError(
            f"conv2d: input channels (axis 1) = {x.shape[1]} != weight in-channels (axis 1) = {c_in}"
        )
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: stride must be >= 1 and padding >= 0 (got {stride}, {padding})")
    _conv_out_size(x.shape[2], k, stride, padding, "2 (H)")
    _conv_out_size(x.shape[3], k, stride, padding, "3 (W)")
    win = _windows(x.data, k, stride, padding)
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

    def backward(g):
        gw = gx = None
        if weight.requires_grad:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        if x.requires_grad:
            gwin = np.tensordot(g, weight.data, axes=([1], [0]))  # [N, Ho, Wo, C, k, k]
            gx = _scatter_windows(gwin.transpose(0, 3, 1, 2, 4, 5), x.shape, k, stride, padding)
        return gx, gw

    return _result(np.ascontiguousarray(out), (x, weight), backward, "conv2d")


def depthwise_conv2d(x, weight, padding: int | None = None) -> Tensor:
    """Per-channel convolution of x[N, C, H, W] with weight[C, 1, k, k], k odd.

    Spatial size is preserved, so ``padding`` must be ``(k - 1) // 2``.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[1] != 1:
        raise ShapeError(
            f"depthwise_conv2d: expected x[N,C,H,W], w[C,1,k,k], got {x.shape}, {weight.shape}"
        )
    c, _, k, k2 = weight.shape
    if k != k2:
        raise ShapeError(f"depthwise_conv2d: non-square kernel {k}x{k2}")
    if k % 2 == 0:
        raise ValueError(f"depthwise_conv2d: kernel size must be odd, got {k}")
    if x.shape[1] != c:
        raise ShapeError(
            f"depthwise_conv2d: input channels (axis 1) = {x.shape[1]} != weight axis 0 = {c}"
        )
    pad = (k - 1) // 2
    if padding is not None and padding != pad:
        raise ValueError(f"depthwise_conv2d: padding must be {pad} for k={k}, got {padding}")
    win = _windows(x.data, k, 1, pad)
    w = weight.data[:, 0]
    out = np.einsum("nchwuv,cuv->nchw", win, w, optimize=True)

    def backward(g):
        gw = gx = None
        if weight.requires_grad:
            gw = np.einsum("nchw,nchwuv->cuv", g, win, optimize=True)[:, None]
        if x.requires_grad:
            gwin = g[..., None, None] * w[None, :, None, None]
            gx = _scatter_windows(gwin, x.shape, k, 1, pad)
        return gx, gw

    return _result(out, (x, weight), backward, "depthwise_conv2d")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gamma * xhat + beta``."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"layer_norm: gamma/beta must have shape ({c},), got {gamma.shape}, {beta.shape}"
        )
    if eps <= 0:
        raise ValueError("layer_norm: eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(x.ndim - 1))
        gg = (g * xhat).sum(axis=lead) if gamma.requires_grad else None
        gb = g.sum(axis=lead) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, gg, gb

    return _result(out, (x, gamma, beta), backward, "layer_norm")


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    seed: int = 0,
) -> float:
    """Largest normwise relative error between tape and central-difference gradients.

    Non-scalar outputs are contracted with a fixed random tensor first. For
    each input that requires grad the error is
    ``max|g_tape - g_fd| / max(max|g_fd|, max|g_tape|, 1e-8)``; the worst one
    over all inputs is returned.
    """
    rng = np.random.default_rng(seed)
    probe: list[np.ndarray] = []

    def scalar(*args) -> Tensor:
        out = fn(*args)
        if isinstance(out, (tuple, list)):
            outs = list(out)
        else:
            outs = [out]
        while len(probe) < len(outs):
            probe.append(rng.uniform(-1.0, 1.0, size=outs[len(probe)].shape))
        total = None
        for o, r in zip(outs, probe):
            term = tsum(o * r) if o.size > 1 else tsum(o)
            total = term if total is None else total + term
        return total

    for t in inputs:
        t.grad = None
    loss = scalar(*inputs)
    loss.backward()
    worst = 0.0
    with no_grad():
        for t in inputs:
            if not t.requires_grad:
                continue
            analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
            numeric = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = scalar(*inputs).item()
                flat[i] = orig - eps
                fm = scalar(*inputs).item()
                flat[i] = orig
                numeric.reshape(-1)[i] = (fp - fm) / (2.0 * eps)
            scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
            worst = max(worst, float(np.abs(analytic - numeric).max() / scale))
    return worst
