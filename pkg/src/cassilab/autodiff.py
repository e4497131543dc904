"""Minimal dense tensor with reverse-mode automatic differentiation.

Every differentiable operation used by the reconstruction model lives here.
Tensors wrap a numpy float32/float64 buffer; each op records its parents and
a vector-Jacobian product closure, and ``backward`` walks the graph once in
reverse topological order. Kernels are deterministic: reductions always run
in numpy's fixed order, so results depend only on the inputs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Flipped off for speed-critical runs; `assert` bodies also vanish under -O.
CHECK_FINITE = True

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """Dense n-d value participating in a reverse-mode differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op", "_backward_done")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._op = "leaf"
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self._op})"

    # Arithmetic sugar; scalar operands are lifted.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data: np.ndarray, parents: tuple, vjp, op: str) -> Tensor:
    assert not CHECK_FINITE or bool(np.isfinite(data).all()), f"non-finite output from op '{op}'"
    out = Tensor(data)
    out._op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _check_same_dtype(a: Tensor, b: Tensor, op: str):
    if a.dtype != b.dtype:
        raise TypeError(f"{op}: mixed dtypes {a.dtype} vs {b.dtype}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _binary_forward(a: Tensor, b, op: str, fn):
    b = _lift(b, a)
    _check_same_dtype(a, b, op)
    try:
        data = fn(a.data, b.data)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} vs {b.shape}") from None
    return b, data


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    b, data = _binary_forward(a, b, "add", np.add)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(data, (a, b), vjp, "add")


def sub(a: Tensor, b) -> Tensor:
    b, data = _binary_forward(a, b, "sub", np.subtract)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(data, (a, b), vjp, "sub")


def mul(a: Tensor, b) -> Tensor:
    b, data = _binary_forward(a, b, "mul", np.multiply)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(data, (a, b), vjp, "mul")


def div(a: Tensor, b) -> Tensor:
    b, data = _binary_forward(a, b, "div", np.divide)

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _result(data, (a, b), vjp, "div")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def vjp(g):
        return (g * s,)

    return _result(a.data * np.asarray(s, dtype=a.dtype), (a,), vjp, "scale")


def gelu(x: Tensor) -> Tensor:
    """GELU via the tanh approximation (FFN nonlinearity)."""
    a, b = 0.7978845608028654, 0.044715
    xd = x.data
    u = a * (xd + b * xd ** 3)
    t = np.tanh(u)
    data = 0.5 * xd * (1.0 + t)

    def vjp(g):
        du = a * (1.0 + 3.0 * b * xd ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return _result(data.astype(x.dtype, copy=False), (x,), vjp, "gelu")


# ---------------------------------------------------------------------------
# matmul / softmax / layernorm
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, optionally batched over equal leading dims."""
    _check_same_dtype(a, b, "matmul")
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(f"matmul: operands must be >=2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    data = _matmul_forward(a.data, b.data)

    def vjp(g):
        return _matmul_vjp(a.data, b.data, g)

    return _result(data, (a, b), vjp, "matmul")


def _matmul_forward(ad: np.ndarray, bd: np.ndarray) -> np.ndarray:
    return np.matmul(ad, bd)


def _matmul_vjp(ad: np.ndarray, bd: np.ndarray, g: np.ndarray):
    ga = np.matmul(g, bd.swapaxes(-1, -2))
    gb = np.matmul(ad.swapaxes(-1, -2), g)
    return ga, gb


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale slices along ``axis`` to unit Euclidean norm (eps-guarded)."""
    n = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True) + eps)
    y = x.data / n

    def vjp(g):
        return (_l2_normalize_vjp(y, n, g, axis),)

    return _result(y, (x,), vjp, "l2_normalize")


def _l2_normalize_vjp(y: np.ndarray, n: np.ndarray, g: np.ndarray, axis: int) -> np.ndarray:
    return (g - y * (g * y).sum(axis=axis, keepdims=True)) / n


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax; each slice along ``axis`` sums to one."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (_softmax_vjp(s, g, axis),)

    return _result(s, (x,), vjp, "softmax")


def _softmax_vjp(s: np.ndarray, g: np.ndarray, axis: int) -> np.ndarray:
    return s * (g - (g * s).sum(axis=axis, keepdims=True))


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, axis: int = 0, eps: float = 1e-6) -> Tensor:
    """Zero mean, unit variance along ``axis`` (eps-stabilized), then affine.

    ``gain`` and ``bias`` are 1-d with the extent of ``axis``.
    """
    n = x.shape[axis]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ValueError(f"layernorm: gain/bias must be ({n},), got {gain.shape} and {bias.shape}")
    bshape = [1] * x.data.ndim
    bshape[axis] = n
    gd = gain.data.reshape(bshape)
    mu = x.data.mean(axis=axis, keepdims=True)
    var = x.data.var(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = gd * xhat + bias.data.reshape(bshape)

    def vjp(g):
        reduce_axes = tuple(i for i in range(x.data.ndim) if i != axis)
        dg = (g * xhat).sum(axis=reduce_axes)
        db = g.sum(axis=reduce_axes)
        dxhat = g * gd
        m1 = dxhat.mean(axis=axis, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=axis, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dg, db

    return _result(data.astype(x.dtype, copy=False), (x, gain, bias), vjp, "layernorm")


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def _conv_windows(xp: np.ndarray, k: tuple, stride: int) -> np.ndarray:
    win = sliding_window_view(xp, k, axis=(1, 2))
    return win[:, ::stride, ::stride]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Zero-padded same-size convolution, stride 1, odd square kernel.

    x: (C_in, H, W); weight: (C_out, C_in, k, k); bias: (C_out,) optional.
    """
    k = weight.shape[-1]
    if k % 2 == 0 or weight.shape[-2] != k:
        raise ValueError(f"conv2d: kernel must be odd square, got {weight.shape}")
    return _conv2d_general(x, weight, bias, stride=1, pad=k // 2, op="conv2d")


def conv2d_strided(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                   stride: int = 2, pad: int = 1) -> Tensor:
    """General strided convolution (used for encoder downsampling)."""
    return _conv2d_general(x, weight, bias, stride=stride, pad=pad, op="conv2d_strided")


def _conv2d_general(x: Tensor, weight: Tensor, bias, stride: int, pad: int, op: str) -> Tensor:
    _check_same_dtype(x, weight, op)
    cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin_w != cin:
        raise ValueError(f"{op}: input has {cin} channels but kernel expects {cin_w}")
    parents = [x, weight]
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    win = _conv_windows(xp, (kh, kw), stride)
    data = np.tensordot(win, weight.data, axes=([0, 3, 4], [1, 2, 3])).transpose(2, 0, 1)
    ho, wo = data.shape[1:]
    if bias is not None:
        _check_same_dtype(x, bias, op)
        data = data + bias.data[:, None, None]
        parents.append(bias)

    def vjp(g):
        gs = _conv2d_vjp(g, xp, win, weight.data, stride, pad, (cin, h, w))
        if bias is not None:
            return gs + (g.sum(axis=(1, 2)),)
        return gs

    return _result(data.astype(x.dtype, copy=False), tuple(parents), vjp, op)


def _conv2d_vjp(g, xp, win, wd, stride, pad, x_shape):
    cout, cin, kh, kw = wd.shape
    ho, wo = g.shape[1:]
    dw = np.tensordot(g, win, axes=([1, 2], [1, 2]))
    dxp = np.zeros_like(xp)
    for ki in range(kh):
        for kj in range(kw):
            dxp[:, ki:ki + ho * stride:stride, kj:kj + wo * stride:stride] += \
                np.tensordot(wd[:, :, ki, kj], g, axes=(0, 0))
    h, w = x_shape[1:]
    dx = dxp[:, pad:pad + h, pad:pad + w] if pad else dxp
    return dx, dw


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 2) -> Tensor:
    """Transposed convolution with k == stride (exact upsampling by ``stride``).

    x: (C_in, H, W); weight: (C_in, C_out, k, k) -> (C_out, H*stride, W*stride).
    """
    _check_same_dtype(x, weight, "conv_transpose2d")
    cin, h, w = x.shape
    cin_w, cout, kh, kw = weight.shape
    if cin_w != cin:
        raise ValueError(f"conv_transpose2d: input has {cin} channels but kernel expects {cin_w}")
    if kh != stride or kw != stride:
        raise ValueError(f"conv_transpose2d: kernel {kh}x{kw} must equal stride {stride}")
    parents = [x, weight]
    data = np.zeros((cout, h * stride, w * stride), dtype=x.dtype)
    for ki in range(kh):
        for kj in range(kw):
            data[:, ki::stride, kj::stride] = np.tensordot(weight.data[:, :, ki, kj], x.data, axes=(0, 0))
    if bias is not None:
        _check_same_dtype(x, bias, "conv_transpose2d")
        data = data + bias.data[:, None, None]
        parents.append(bias)

    def vjp(g):
        win = _conv_windows(g, (kh, kw), stride)  # (C_out, H, W, k, k)
        dx = np.tensordot(weight.data, win, axes=([1, 2, 3], [0, 3, 4]))
        dw = np.tensordot(x.data, win, axes=([1, 2], [1, 2]))
        if bias is not None:
            return dx, dw, g.sum(axis=(1, 2))
        return dx, dw

    return _result(data, tuple(parents), vjp, "conv_transpose2d")


def depthwise_conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-channel same-padded convolution; weight (C, k, k), k odd."""
    _check_same_dtype(x, weight, "depthwise_conv2d")
    c, h, w = x.shape
    cw, kh, kw = weight.shape
    if kh % 2 == 0 or kh != kw:
        raise ValueError(f"depthwise_conv2d: kernel must be odd square, got {weight.shape}")
    if cw != c:
        raise ValueError(f"depthwise_conv2d: input has {c} channels but kernel expects {cw}")
    pad = kh // 2
    parents = [x, weight]
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    win = _conv_windows(xp, (kh, kw), 1)
    data = np.einsum("chwkl,ckl->chw", win, weight.data)
    if bias is not None:
        _check_same_dtype(x, bias, "depthwise_conv2d")
        data = data + bias.data[:, None, None]
        parents.append(bias)

    def vjp(g):
        dw = np.einsum("chwkl,chw->ckl", win, g)
        dxp = np.zeros_like(xp)
        for ki in range(kh):
            for kj in range(kw):
                dxp[:, ki:ki + h, kj:kj + w] += weight.data[:, ki, kj, None, None] * g
        dx = dxp[:, pad:pad + h, pad:pad + w]
        if bias is not None:
            return dx, dw, g.sum(axis=(1, 2))
        return dx, dw

    return _result(data.astype(x.dtype, copy=False), tuple(parents), vjp, "depthwise_conv2d")


# ---------------------------------------------------------------------------
# data movement (vjp is the inverse movement)
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)

    def vjp(g):
        return (g.reshape(x.shape),)

    return _result(x.data.reshape(shape), (x,), vjp, "reshape")


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    inv = np.argsort(axes)

    def vjp(g):
        return (g.transpose(inv),)

    return _result(x.data.transpose(axes), (x,), vjp, "permute")


def slice_(x: Tensor, starts, stops) -> Tensor:
    """Contiguous sub-block x[starts[0]:stops[0], ...]; out-of-range rejected."""
    starts = tuple(int(s) for s in starts)
    stops = tuple(int(s) for s in stops)
    if len(starts) != x.data.ndim or len(stops) != x.data.ndim:
        raise ValueError(f"slice: need {x.data.ndim} (start, stop) pairs, got {len(starts)}")
    for ax, (a, b, n) in enumerate(zip(starts, stops, x.shape)):
        if not (0 <= a <= b <= n):
            raise ValueError(f"slice: range [{a}, {b}) out of bounds for axis {ax} of extent {n}")
    key = tuple(slice(a, b) for a, b in zip(starts, stops))

    def vjp(g):
        full = np.zeros_like(x.data)
        full[key] = g
        return (full,)

    return _result(x.data[key].copy(), (x,), vjp, "slice")


def pad(x: Tensor, pad_width) -> Tensor:
    """Zero padding; pad_width is ((before, after), ...) per axis."""
    pw = tuple((int(a), int(b)) for a, b in pad_width)
    if len(pw) != x.data.ndim:
        raise ValueError(f"pad: need {x.data.ndim} pairs, got {len(pw)}")
    key = tuple(slice(a, a + n) for (a, _), n in zip(pw, x.shape))

    def vjp(g):
        return (g[key],)

    return _result(np.pad(x.data, pw), (x,), vjp, "pad")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    for t in tensors[1:]:
        _check_same_dtype(tensors[0], t, "concat")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple(np.moveaxis(moved[offsets[i]:offsets[i + 1]], 0, axis)
                     for i in range(len(tensors)))

    return _result(data, tuple(tensors), vjp, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis=axis)


def roll(x: Tensor, shifts, axes) -> Tensor:
    shifts = tuple(int(s) for s in shifts)
    axes = tuple(int(a) for a in axes)

    def vjp(g):
        return (np.roll(g, tuple(-s for s in shifts), axis=axes),)

    return _result(np.roll(x.data, shifts, axis=axes), (x,), vjp, "roll")


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather 1-d ``indices`` along ``axis``; vjp scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError(f"take: indices must be 1-d, got shape {idx.shape}")
    n = x.shape[axis]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError(f"take: index out of range for axis {axis} of extent {n}")

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(np.moveaxis(gx, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (gx,)

    return _result(np.take(x.data, idx, axis=axis), (x,), vjp, "take")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return _result(np.asarray(data), (x,), vjp, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return scale(sum_(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate dLoss/dLeaf on every requires_grad tensor reachable from ``loss``.

    ``loss`` must be scalar; a second backward through the same node is
    rejected (reset grads and rebuild the graph instead).
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._backward_done:
        raise RuntimeError("backward: already ran for this node; rebuild the graph or reset first")
    loss._backward_done = True

    order = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g.astype(parent.dtype, copy=False).reshape(parent.shape)


def _toposort(root: Tensor) -> list:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))
    return order


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
