"""Dense float64 tensors with taped reverse-mode automatic differentiation.

A ``Tensor`` wraps a row-major float64 ndarray. While a ``Graph`` is active
(see :func:`recording`), every differentiable operation appends one node to
the tape; :func:`backward` replays the tape in exact reverse insertion order
and accumulates vector-Jacobian products additively into ``Tensor.grad``.
Gradients are never zeroed implicitly — callers clear them between steps.

All math is f64. Convolutions are delegated to the compiled/fallback kernel
backend in :mod:`crosstalk._kernels`; everything else is plain NumPy.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigError, DataError, ShapeError

Array = np.ndarray


# ---------------------------------------------------------------------------
# Tensor and tape
# ---------------------------------------------------------------------------


class Tensor:
    """A dense float64 array that can take part in gradient computation.

    ``grad``, when populated, always has the same shape as ``data``. Tensors
    created inside a recording context inherit ``requires_grad`` from their
    inputs, so the tape reaches every leaf that asked for gradients.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self.name = name

    # -- inspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        head = f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}"
        if self.name:
            head += f", name={self.name!r}"
        return head + ")"

    # -- gradient plumbing ---------------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: Array) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            # Copy: the incoming array may be a view into another gradient.
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    # -- operator sugar ------------------------------------------------------

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class GraphNode:
    """One recorded operation: its inputs, its output, and its VJP."""

    __slots__ = ("op", "inputs", "out", "vjp")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], out: Tensor,
                 vjp: Callable[[Array], Sequence[Array | None]]):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.vjp = vjp


class Graph:
    """An append-only tape of operations, acyclic by construction.

    Backward traverses nodes in exact reverse insertion order, which is a
    valid topological order because an op can only consume tensors that
    already exist.
    """

    def __init__(self):
        self.nodes: list[GraphNode] = []

    def record(self, op: str, inputs: tuple[Tensor, ...], out: Tensor, vjp) -> None:
        self.nodes.append(GraphNode(op, inputs, out, vjp))

    def clear(self) -> None:
        self.nodes.clear()

    def backward(self, loss: Tensor) -> None:
        if loss.data.ndim != 0:
            raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
        loss.accumulate_grad(np.ones((), dtype=np.float64))
        for node in reversed(self.nodes):
            out_grad = node.out.grad
            if out_grad is None:
                continue
            grads = node.vjp(out_grad)
            for tensor, grad in zip(node.inputs, grads):
                if grad is not None and tensor.requires_grad:
                    tensor.accumulate_grad(np.asarray(grad, dtype=np.float64))


_GRAPH_STACK: list[Graph] = []


def current_graph() -> Graph | None:
    return _GRAPH_STACK[-1] if _GRAPH_STACK else None


@contextmanager
def recording(graph: Graph | None = None) -> Iterator[Graph]:
    """Activate a tape. Ops executed inside record themselves onto it."""
    g = graph if graph is not None else Graph()
    _GRAPH_STACK.append(g)
    try:
        yield g
    finally:
        _GRAPH_STACK.pop()


def backward(loss: Tensor, graph: Graph | None = None) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from loss."""
    g = graph if graph is not None else current_graph()
    if g is None:
        raise DataError("backward called with no recorded graph; wrap the forward pass in `with recording():`")
    g.backward(loss)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, out_data: Array, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    g = current_graph()
    track = g is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        g.record(op, inputs, out, vjp)
    return out


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a gradient back to the shape its input had before broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return _make("add", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    return _make("sub", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return _make("mul", out, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data
    return _make("div", out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a: Tensor) -> Tensor:
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    return _make("relu", out, (a,), lambda g: (np.where(a.data > 0.0, g, 0.0),))


def texp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def tlog(a: Tensor) -> Tensor:
    return _make("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g: Array):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("sum", out, (a,), vjp)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])

    def vjp(g: Array):
        if axis is None:
            return (np.broadcast_to(g / n, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, a.shape).copy(),)

    return _make("mean", out, (a,), vjp)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)
    return _make("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    out = a.data.transpose(axes)
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make("transpose", out, (a,), lambda g: (g.transpose(inv),))


def take(a: Tensor, key) -> Tensor:
    """Basic (slice/integer) indexing with scatter-back gradient."""
    out = a.data[key]

    def vjp(g: Array):
        ga = np.zeros_like(a.data)
        ga[key] = g
        return (ga,)

    return _make("take", out, (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def vjp(g: Array):
        sl = [slice(None)] * g.ndim
        pieces = []
        for i in range(len(datas)):
            sl[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(sl)])
        return tuple(pieces)

    return _make("concat", out, tuple(tensors), vjp)


def pad_axis(a: Tensor, axis: int, before: int, after: int) -> Tensor:
    """Zero-pad one axis."""
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    out = np.pad(a.data, widths)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(before, before + a.shape[axis])
    sl = tuple(sl)
    return _make("pad", out, (a,), lambda g: (g[sl],))


def repeat_new_axis(a: Tensor, n: int, axis: int) -> Tensor:
    """Insert a new axis of length n holding n identical copies of ``a``.

    The gradient of a loss summed over copies is the sum of the per-copy
    gradients, i.e. n times the single-copy gradient when copies are used
    symmetrically.
    """
    if n < 1:
        raise ShapeError(f"repeat count must be >= 1, got {n}")
    out = np.repeat(np.expand_dims(a.data, axis), n, axis=axis)
    return _make("repeat", out, (a,), lambda g: (g.sum(axis=axis),))


def max_pool_axis(a: Tensor, axis: int, size: int) -> Tensor:
    """Non-overlapping max pooling along one axis (length must divide)."""
    length = a.shape[axis]
    if length % size != 0:
        raise ShapeError(f"axis length {length} not divisible by pool size {size}")
    moved = np.moveaxis(a.data, axis, -1)
    grouped = moved.reshape(moved.shape[:-1] + (length // size, size))
    arg = grouped.argmax(axis=-1)
    pooled = np.take_along_axis(grouped, arg[..., None], axis=-1)[..., 0]
    out = np.moveaxis(pooled, -1, axis)

    def vjp(g: Array):
        gm = np.moveaxis(g, axis, -1)
        gg = np.zeros_like(grouped)
        np.put_along_axis(gg, arg[..., None], gm[..., None], axis=-1)
        ga = gg.reshape(moved.shape)
        return (np.moveaxis(ga, -1, axis),)

    return _make("max_pool", out, (a,), vjp)


# ---------------------------------------------------------------------------
# Linear algebra and normalization
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product a[..., m, k] @ b[..., k, n]."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def vjp(g: Array):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _make("matmul", out, (a, b), vjp)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax along ``axis``."""
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {a.shape}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g: Array):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return _make("softmax", out, (a,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last dimension to zero mean / unit variance, then affine."""
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match channels {c}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def vjp(g: Array):
        reduce_axes = tuple(range(g.ndim - 1))
        gbias = g.sum(axis=reduce_axes)
        ggain = (g * xhat).sum(axis=reduce_axes)
        gx_hat = g * gain.data
        gx = inv * (gx_hat
                    - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return (gx, ggain, gbias)

    return _make("layer_norm", out, (x, gain, bias), vjp)


def cross_entropy(logits: Tensor, labels: Array) -> Tensor:
    """Mean softmax cross-entropy of integer labels against logits[..., K].

    Labels must lie in {0, ..., K-1}; for the two-class heads used here that
    means {0, 1}. Reduction is the mean over all leading dimensions.
    """
    labels = np.asarray(labels)
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    k = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must be in [0, {k - 1}]")
    labels = labels.astype(np.int64)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logz
    picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    n = max(picked.size, 1)
    out = np.asarray(-picked.sum() / n)

    def vjp(g: Array):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
        return ((p - onehot) * (g / n),)

    return _make("cross_entropy", out, (logits,), vjp)


# ---------------------------------------------------------------------------
# Convolutions (kernel-backed)
# ---------------------------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None, stride: int = 1) -> Tensor:
    """Same-padded 2-D cross-correlation on NHWC batches.

    x: [B, H, W, Cin], w: [KH, KW, Cin, Cout] with odd KH/KW. Output spatial
    dims are ceil(H/stride) x ceil(W/stride).
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects x[B,H,W,Ci], w[KH,KW,Ci,Co]; got {x.shape}, {w.shape}")
    if x.shape[3] != w.shape[2]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    if w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
        raise ConfigError(f"conv2d kernel dims must be odd, got {w.shape[:2]}")
    bdata = None if bias is None else bias.data
    out = K.conv2d_forward(x.data, w.data, bdata, stride)
    inputs = (x, w) if bias is None else (x, w, bias)

    def vjp(g: Array):
        gx, gw, gb = K.conv2d_backward(x.data, w.data, g, stride)
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _make("conv2d", out, inputs, vjp)


def conv_grid(x: Tensor, w: Tensor, bias: Tensor | None) -> Tensor:
    """Same-padded cross-correlation over the speaker x time grid.

    x: [B, S, T, Cin] (a leading batch axis over independent grids),
    w: [ks, kt, Cin, Cout] with kt odd (a centered temporal window) and
    ks <= S. Zero padding on both the speaker and time axes. The output is
    bit-identical to ordered scalar accumulation: for each output element,
    bias first, then contributions in ascending (ks, kt, cin) order.
    """
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv_grid expects x[B,S,T,Ci], w[ks,kt,Ci,Co]; got {x.shape}, {w.shape}")
    if xd.shape[3] != w.shape[2]:
        raise ShapeError(f"conv_grid channel mismatch: input {x.shape} vs kernel {w.shape}")
    if w.shape[1] % 2 == 0:
        raise ConfigError(f"conv_grid temporal kernel must be odd (centered window), got {w.shape[1]}")
    if w.shape[0] > xd.shape[1]:
        raise ShapeError(f"conv_grid speaker kernel {w.shape[0]} exceeds speaker count {xd.shape[1]}")
    bdata = None if bias is None else bias.data
    out = K.conv_grid_forward(xd, w.data, bdata)
    if squeeze:
        out = out[0]
    inputs = (x, w) if bias is None else (x, w, bias)

    def vjp(g: Array):
        gg = g[None] if squeeze else g
        gx, gw, gb = K.conv_grid_backward(xd, w.data, gg)
        if squeeze:
            gx = gx[0]
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _make("conv_grid", out, inputs, vjp)


def conv_transpose1d(x: Tensor, w: Tensor, bias: Tensor | None, stride: int) -> Tensor:
    """Transposed temporal convolution: [B, T, Cin] -> [B, T*stride, Cout].

    w: [K, Cin, Cout] with K >= stride; implicit crop keeps the output length
    at exactly T*stride. Forward results are bit-identical to ordered scalar
    accumulation (bias first, then ascending (k, cin) per output element).
    """
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv_transpose1d expects x[B,T,Ci], w[K,Ci,Co]; got {x.shape}, {w.shape}")
    if xd.shape[2] != w.shape[1]:
        raise ShapeError(f"conv_transpose1d channel mismatch: input {x.shape} vs kernel {w.shape}")
    if w.shape[0] < stride:
        raise ConfigError(f"kernel length {w.shape[0]} must be >= stride {stride}")
    bdata = None if bias is None else bias.data
    out = K.upconv1d_forward(xd, w.data, bdata, stride)
    if squeeze:
        out = out[0]
    inputs = (x, w) if bias is None else (x, w, bias)

    def vjp(g: Array):
        gg = g[None] if squeeze else g
        gx, gw, gb = K.upconv1d_backward(xd, w.data, gg, stride)
        if squeeze:
            gx = gx[0]
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _make("conv_transpose1d", out, inputs, vjp)
