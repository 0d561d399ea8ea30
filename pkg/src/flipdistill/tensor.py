"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation records its inputs and a backward closure.  Backward closures
are written in terms of other differentiable operations, so gradients can be
differentiated again (``grad(..., create_graph=True)``).  Gradient matching
relies on that: its loss is a function of parameter gradients, and its
derivative with respect to input pixels needs a second backward pass.

Conventions
-----------
* All data is float64 and row-major.
* No general broadcasting.  Elementwise binary operations take two tensors of
  identical shape or a tensor and a python scalar; use :meth:`Tensor.expand`
  and :meth:`Tensor.sum_to` for explicit broadcasting.
* ``relu`` has subgradient 0 at 0.
* ``backward`` accumulates into ``leaf.grad`` (a numpy array).  Call
  ``zero_grad`` between independent passes.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ShapeError",
    "Tensor",
    "no_grad",
    "enable_grad",
    "is_grad_enabled",
    "backward",
    "grad",
    "concat",
    "conv2d",
    "relu",
    "avg_pool2",
    "dense",
    "hflip",
    "batch_concat",
    "log_softmax",
    "spatial_map",
]


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


_GRAD_ENABLED = True


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def _grad_mode(enabled: bool):
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = enabled
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def no_grad():
    """Context manager: operations inside record no graph."""
    return _grad_mode(False)


def enable_grad():
    return _grad_mode(True)


class Tensor:
    """Dense float64 array that may participate in a differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = "leaf"

    @classmethod
    def _wrap(cls, arr) -> "Tensor":
        t = cls.__new__(cls)
        arr = np.asarray(arr)
        t.data = arr if arr.dtype == np.float64 else arr.astype(np.float64)
        t.grad = None
        t.requires_grad = False
        t._parents = ()
        t._backward = None
        t.op = "const"
        return t

    # -- introspection -------------------------------------------------
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
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def backward(self) -> None:
        backward(self)

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, -other if _is_scalar(other) else neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if _is_scalar(other):
            return mul(self, 1.0 / float(other))
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(np.full(self.shape, float(other))), self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, key):
        if not isinstance(key, slice) or key.step not in (None, 1):
            raise TypeError("only contiguous slices along the batch axis are supported")
        start, stop, _ = key.indices(self.shape[0])
        return narrow(self, 0, start, max(stop, start))

    # -- shape and reductions ------------------------------------------
    @property
    def T(self) -> "Tensor":
        return self.transpose((1, 0))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes) -> "Tensor":
        return transpose(self, tuple(axes))

    def flip(self, axis) -> "Tensor":
        return flip(self, axis)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            n = int(np.prod([self.shape[a] for a in axes]))
        return tensor_sum(self, axis, keepdims) * (1.0 / n)

    def expand(self, shape) -> "Tensor":
        return expand(self, tuple(shape))

    def sum_to(self, shape) -> "Tensor":
        return sum_to(self, tuple(shape))

    def relu(self) -> "Tensor":
        return relu(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, parents: tuple, backward_fn: Callable, op: str) -> Tensor:
    out = Tensor._wrap(data)
    out.op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no implicit broadcasting)")


# ----------------------------------------------------------------------
# elementwise
# ----------------------------------------------------------------------
def add(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        return _make(a.data + float(b), (a,), lambda g: (g,), "add_scalar")
    b = _as_tensor(b)
    _same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (neg(g),), "neg")


def mul(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        s = float(b)
        return _make(a.data * s, (a,), lambda g: (mul(g, s),), "mul_scalar")
    b = _as_tensor(b)
    _same_shape(a, b, "mul")

    def backward_fn(g):
        return (
            mul(g, b) if a.requires_grad else None,
            mul(g, a) if b.requires_grad else None,
        )

    return _make(a.data * b.data, (a, b), backward_fn, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "div")

    def backward_fn(g):
        ga = div(g, b) if a.requires_grad else None
        gb = neg(div(mul(g, a), mul(b, b))) if b.requires_grad else None
        return ga, gb

    return _make(a.data / b.data, (a, b), backward_fn, "div")


def exp(a: Tensor) -> Tensor:
    # recompute exp(a) in backward instead of closing over the output (avoids a ref cycle)
    return _make(np.exp(a.data), (a,), lambda g: (mul(g, exp(a)),), "exp")


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (div(g, a),), "log")


def sqrt(a: Tensor) -> Tensor:
    return _make(np.sqrt(a.data), (a,), lambda g: (div(g, mul(sqrt(a), 2.0)),), "sqrt")


def relu(x: Tensor) -> Tensor:
    """max(0, x) with subgradient 0 at x == 0."""
    def backward_fn(g):
        return (mul(g, (x.data > 0).astype(np.float64)),)

    return _make(np.maximum(x.data, 0.0), (x,), backward_fn, "relu")


# ----------------------------------------------------------------------
# shape manipulation
# ----------------------------------------------------------------------
def reshape(x: Tensor, shape: tuple) -> Tensor:
    src = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (reshape(g, src),), "reshape")


def transpose(x: Tensor, axes: tuple) -> Tensor:
    inv = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), lambda g: (transpose(g, inv),), "transpose")


def flip(x: Tensor, axis) -> Tensor:
    return _make(np.flip(x.data, axis), (x,), lambda g: (flip(g, axis),), "flip")


def hflip(x: Tensor) -> Tensor:
    """Mirror a batch of images left-to-right (reverse the width axis)."""
    if x.ndim != 4:
        raise ShapeError(f"hflip expects an N x C x H x W tensor, got rank {x.ndim}")
    return flip(x, 3)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = x.shape
    if axis is None:
        axes = tuple(range(x.ndim))
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % x.ndim for a in axes)
    kept = tuple(1 if i in axes else n for i, n in enumerate(src))

    def backward_fn(g):
        return (expand(reshape(g, kept), src),)

    return _make(np.sum(x.data, axis=axes, keepdims=keepdims), (x,), backward_fn, "sum")


def expand(x: Tensor, shape: tuple) -> Tensor:
    """Broadcast ``x`` to ``shape`` (numpy rules; explicit only)."""
    src = x.shape
    if src == shape:
        return x
    try:
        data = np.broadcast_to(x.data, shape)
    except ValueError as exc:
        raise ShapeError(f"cannot expand {src} to {shape}") from exc
    return _make(data, (x,), lambda g: (sum_to(g, src),), "expand")


def sum_to(x: Tensor, shape: tuple) -> Tensor:
    """Reduce ``x`` to ``shape`` by summing broadcast axes; adjoint of :func:`expand`."""
    src = x.shape
    if src == shape:
        return x
    lead = len(src) - len(shape)
    if lead < 0:
        raise ShapeError(f"cannot sum {src} down to {shape}")
    axes = tuple(range(lead)) + tuple(
        lead + i for i, n in enumerate(shape) if n == 1 and src[lead + i] != 1
    )
    for i, n in enumerate(shape):
        if n != 1 and src[lead + i] != n:
            raise ShapeError(f"cannot sum {src} down to {shape}")
    data = np.sum(x.data, axis=axes, keepdims=True).reshape(shape)
    return _make(data, (x,), lambda g: (expand(g, src),), "sum_to")


def narrow(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Slice ``[start, stop)`` along ``axis``."""
    full = x.shape[axis]
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    return _make(
        x.data[tuple(index)],
        (x,),
        lambda g: (_embed(g, axis, start, full),),
        "narrow",
    )


def _embed(x: Tensor, axis: int, start: int, full: int) -> Tensor:
    """Place ``x`` into zeros of length ``full`` along ``axis``; adjoint of :func:`narrow`."""
    shape = list(x.shape)
    length = shape[axis]
    shape[axis] = full
    data = np.zeros(shape)
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, start + length)
    data[tuple(index)] = x.data
    return _make(data, (x,), lambda g: (narrow(g, axis, start, start + length),), "embed")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            t.shape[i] != ref[i] for i in range(len(ref)) if i != axis
        ):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward_fn(g):
        return tuple(
            narrow(g, axis, int(bounds[i]), int(bounds[i + 1])) if t.requires_grad else None
            for i, t in enumerate(tensors)
        )

    return _make(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn, "concat"
    )


def batch_concat(a: Tensor, b: Tensor) -> Tensor:
    """Stack two image batches along the batch axis."""
    if a.ndim != 4 or b.ndim != 4 or a.shape[1:] != b.shape[1:]:
        raise ShapeError(f"batch_concat: trailing dims differ ({a.shape} vs {b.shape})")
    return concat([a, b], axis=0)


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward_fn(g):
        return (
            matmul(g, b.T) if a.requires_grad else None,
            matmul(a.T, g) if b.requires_grad else None,
        )

    return _make(a.data @ b.data, (a, b), backward_fn, "matmul")


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` for x: [N, D], w: [D, K], b: [K]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: inner dims differ ({x.shape} vs {w.shape})")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"dense: bias shape {b.shape} does not match {w.shape[1]} outputs")
    out = matmul(x, w)
    return out + expand(b, out.shape)


# ----------------------------------------------------------------------
# convolution
# ----------------------------------------------------------------------
# Below this many patch elements (C*kh*kw) the convolution builds explicit
# patch matrices; above it, it accumulates one GEMM per kernel offset, which
# keeps memory at the size of the input.
_IM2COL_MAX_PATCH = 64


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _conv_forward(x: np.ndarray, w: np.ndarray, pad: int) -> np.ndarray:
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = _pad(x, pad)
    ho, wo = h + 2 * pad - kh + 1, wd + 2 * pad - kw + 1
    if c * kh * kw <= _IM2COL_MAX_PATCH:
        cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # n c ho wo kh kw
        cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
        out = cols @ w.reshape(o, -1).T
        return np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))
    xt = np.ascontiguousarray(xp.transpose(1, 0, 2, 3))  # c n hp wp
    wt = np.ascontiguousarray(w.transpose(2, 3, 0, 1))  # BLAS needs contiguous operands
    out = np.zeros((o, n * ho * wo))
    for i in range(kh):
        for j in range(kw):
            patch = xt[:, :, i:i + ho, j:j + wo].reshape(c, -1)
            out += wt[i, j] @ patch
    return np.ascontiguousarray(out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3))


def _conv_weight_grad(x: np.ndarray, g: np.ndarray, pad: int, kh: int, kw: int) -> np.ndarray:
    n, c, h, wd = x.shape
    o = g.shape[1]
    xp = _pad(x, pad)
    ho, wo = g.shape[2], g.shape[3]
    gt = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, -1)  # o, n*ho*wo
    if c * kh * kw <= _IM2COL_MAX_PATCH:
        cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))
        cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
        return (gt @ cols).reshape(o, c, kh, kw)
    xt = np.ascontiguousarray(xp.transpose(1, 0, 2, 3))
    dw = np.empty((kh, kw, o, c))
    for i in range(kh):
        for j in range(kw):
            patch = xt[:, :, i:i + ho, j:j + wo].reshape(c, -1)
            dw[i, j] = gt @ patch.T
    return np.ascontiguousarray(dw.transpose(2, 3, 0, 1))


def _flip_transpose(w: Tensor) -> Tensor:
    return transpose(flip(w, (2, 3)), (1, 0, 2, 3))


def _conv(x: Tensor, w: Tensor, pad: int) -> Tensor:
    kh, kw = w.shape[2], w.shape[3]

    def backward_fn(g):
        gx = _conv(g, _flip_transpose(w), kh - 1 - pad) if x.requires_grad else None
        gw = _conv_wgrad(x, g, pad, kh, kw) if w.requires_grad else None
        return gx, gw

    return _make(_conv_forward(x.data, w.data, pad), (x, w), backward_fn, "conv")


def _conv_wgrad(x: Tensor, g: Tensor, pad: int, kh: int, kw: int) -> Tensor:
    """Weight gradient of a convolution, itself differentiable in ``x`` and ``g``."""

    def backward_fn(gw):
        gx = _conv(g, _flip_transpose(gw), kh - 1 - pad) if x.requires_grad else None
        gg = _conv(x, gw, pad) if g.requires_grad else None
        return gx, gg

    return _make(_conv_weight_grad(x.data, g.data, pad, kh, kw), (x, g), backward_fn, "conv_wgrad")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, pad: int = 0) -> Tensor:
    """Stride-1 cross-correlation with zero padding.

    x: [N, Cin, H, W], w: [Cout, Cin, kh, kw], b: [Cout].
    Output spatial size is ``H + 2*pad - kh + 1``.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects rank-4 input and weight, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, weight expects {w.shape[1]}")
    kh, kw = w.shape[2], w.shape[3]
    if not 0 <= pad <= min(kh, kw) - 1:
        raise ShapeError(f"conv2d: padding {pad} unsupported for a {kh}x{kw} kernel")
    if x.shape[2] + 2 * pad < kh or x.shape[3] + 2 * pad < kw:
        raise ShapeError("conv2d: kernel larger than padded input")
    out = _conv(x, w, pad)
    if b is None:
        return out
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match {w.shape[0]} filters")
    return out + expand(reshape(b, (1, -1, 1, 1)), out.shape)


def avg_pool2(x: Tensor) -> Tensor:
    """Mean over non-overlapping 2x2 windows."""
    if x.ndim != 4:
        raise ShapeError(f"avg_pool2 expects rank 4, got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    d = x.data
    data = (d[:, :, 0::2, 0::2] + d[:, :, 1::2, 0::2] + d[:, :, 0::2, 1::2] + d[:, :, 1::2, 1::2]) * 0.25
    return _make(data, (x,), lambda g: (_unpool2(g),), "avg_pool2")


def _unpool2(g: Tensor) -> Tensor:
    """Adjoint of avg_pool2: spread each value over its 2x2 window, divided by 4."""
    data = np.repeat(np.repeat(g.data, 2, axis=2), 2, axis=3) * 0.25
    return _make(data, (g,), lambda gg: (avg_pool2(gg),), "unpool2")


def spatial_map(x: Tensor, matrix) -> Tensor:
    """Apply a fixed linear map to every (H, W) plane of an N x C x H x W batch.

    ``matrix`` is an (H*W, H*W) scipy sparse matrix or dense array, shared
    across images and channels.
    """
    n, c, h, w = x.shape
    if matrix.shape != (h * w, h * w):
        raise ShapeError(f"spatial_map: matrix shape {matrix.shape} does not fit {h}x{w} planes")
    flat = x.data.reshape(n * c, h * w)
    data = np.asarray((matrix @ flat.T).T).reshape(n, c, h, w)
    mt = matrix.T
    return _make(data, (x,), lambda g: (spatial_map(g, mt),), "spatial_map")


def log_softmax(x: Tensor) -> Tensor:
    """Row-wise log-softmax of an [N, K] tensor, stabilised by max subtraction."""
    if x.ndim != 2:
        raise ShapeError(f"log_softmax expects [N, K], got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    data = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def backward_fn(g):
        probs = exp(log_softmax(x))
        total = expand(tensor_sum(g, 1, keepdims=True), g.shape)
        return (g - mul(probs, total),)

    return _make(data, (x,), backward_fn, "log_softmax")


# ----------------------------------------------------------------------
# graph traversal
# ----------------------------------------------------------------------
def _toposort(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` that require grad, inputs before outputs."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def _propagate(root: Tensor, seed: Tensor, create_graph: bool, keep: set[int]) -> dict[int, Tensor]:
    order = _toposort(root)
    grads: dict[int, Tensor] = {id(root): seed}
    with _grad_mode(create_graph):
        for node in reversed(order):
            key = id(node)
            g = grads.get(key)
            if g is None or node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pk = id(parent)
                grads[pk] = pg if pk not in grads else grads[pk] + pg
            if key not in keep:
                del grads[key]
    return grads


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every requires-grad leaf."""
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    leaves = [n for n in _toposort(root) if n._backward is None]
    grads = _propagate(root, Tensor._wrap(np.ones(root.shape)), False, {id(n) for n in leaves})
    for leaf in leaves:
        g = grads.get(id(leaf))
        if g is None:
            continue
        leaf.grad = g.data.copy() if leaf.grad is None else leaf.grad + g.data


def grad(
    output: Tensor, inputs: Iterable[Tensor], create_graph: bool = False
) -> list[Tensor]:
    """Gradients of scalar ``output`` w.r.t. ``inputs`` without touching ``.grad``.

    With ``create_graph=True`` the returned tensors carry their own graph and
    can be differentiated again.  Inputs that do not influence ``output`` get
    zero gradients.
    """
    inputs = list(inputs)
    if output.size != 1:
        raise ShapeError(f"grad needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        return [Tensor._wrap(np.zeros(t.shape)) for t in inputs]
    keep = {id(t) for t in inputs}
    grads = _propagate(output, Tensor._wrap(np.ones(output.shape)), create_graph, keep)
    return [grads.get(id(t), Tensor._wrap(np.zeros(t.shape))) for t in inputs]
