"""Dense tensors with reverse-mode automatic differentiation.

The graph is the linked structure of Tensor nodes: every primitive
records its parent tensors and a backward closure on the output node.
backward() replays those closures in reverse topological order, then
clears the visited subgraph so a second backward without a fresh forward
raises. Tensors with no pending graph are plain immutable arrays and can
be shared freely for read-only inference.

Shape discipline is strict: elementwise primitives require identical
shapes (scalars are the only broadcast), everything else takes explicit
axes. Arithmetic stays in the operand dtype, so a float32 pipeline stays
float32 end to end.

A process-local multiplication counter can be armed with count_mults();
each primitive reports its forward multiply count under a documented
convention (matmul m*k*n, elementwise multiply/divide n, transcendental
calls not counted). The analytic cost model mirrors the same convention.
"""

import math
from contextlib import contextmanager

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError

DEFAULT_DTYPE = np.float64

_grad_enabled = True
_mult_counter = None


class MultCounter:
    """Accumulates forward-pass multiply counts while armed."""

    def __init__(self):
        self.total = 0


@contextmanager
def count_mults():
    global _mult_counter
    prev = _mult_counter
    counter = MultCounter()
    _mult_counter = counter
    try:
        yield counter
    finally:
        _mult_counter = prev


def _count(n):
    if _mult_counter is not None:
        _mult_counter.total += int(n)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._consumed = False

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

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

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

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(op, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"{op}: non-finite values in input")


def _make(op, data, parents, backward_fn):
    if _grad_enabled and any(p._consumed for p in parents):
        raise RuntimeError(
            f"{op}: input comes from an already-consumed graph; run a fresh forward pass"
        )
    out = Tensor(data)
    out._op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss):
    """Populate .grad on every reachable requires_grad tensor, then clear the graph."""
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.ndim != 0:
        raise ShapeError("backward", loss.shape, (), detail="loss must be scalar")
    if loss._consumed:
        raise RuntimeError("backward: graph already consumed; run a fresh forward pass")

    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    loss._accumulate(np.ones((), dtype=loss.dtype))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
    for node in topo:
        if node._parents:
            node._parents = ()
            node._backward = None
            node._consumed = True
    loss._consumed = True


# ---------------------------------------------------------------------------
# elementwise primitives


def _elementwise_pair(op, a, b):
    a = _as_tensor(a)
    scalar = None
    if isinstance(b, (int, float)) or (isinstance(b, np.ndarray) and b.ndim == 0):
        scalar = a.dtype.type(b)
    else:
        b = _as_tensor(b)
        if a.shape != b.shape:
            raise ShapeError(op, a.shape, b.shape)
    return a, b, scalar


def add(a, b):
    a, b, scalar = _elementwise_pair("add", a, b)
    if scalar is not None:
        _check_finite("add", a.data, scalar)
        data = a.data + scalar

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g)

        return _make("add", data, (a,), bwd)
    _check_finite("add", a.data, b.data)
    data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make("add", data, (a, b), bwd)


def sub(a, b):
    a, b, scalar = _elementwise_pair("sub", a, b)
    if scalar is not None:
        _check_finite("sub", a.data, scalar)
        data = a.data - scalar

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g)

        return _make("sub", data, (a,), bwd)
    _check_finite("sub", a.data, b.data)
    data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _make("sub", data, (a, b), bwd)


def mul(a, b):
    a, b, scalar = _elementwise_pair("mul", a, b)
    if scalar is not None:
        _check_finite("mul", a.data, scalar)
        data = a.data * scalar
        _count(a.size)

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g * scalar)

        return _make("mul", data, (a,), bwd)
    _check_finite("mul", a.data, b.data)
    data = a.data * b.data
    _count(a.size)
    ad, bd = a.data, b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * bd)
        if b.requires_grad:
            b._accumulate(g * ad)

    return _make("mul", data, (a, b), bwd)


def add_bias(x, b):
    """Add a length-C vector to every row of a (..., C) tensor."""
    x, b = _as_tensor(x), _as_tensor(b)
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError("add_bias", x.shape, b.shape)
    _check_finite("add_bias", x.data, b.data)
    data = x.data + b.data

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g)
        if b.requires_grad:
            b._accumulate(g.reshape(-1, b.shape[0]).sum(axis=0))

    return _make("add_bias", data, (x, b), bwd)


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError("matmul", ad.shape, bd.shape, detail="operands must be >= 2-D")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError("matmul", ad.shape, bd.shape, detail="inner dims differ")
    if bd.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise ShapeError("matmul", ad.shape, bd.shape, detail="leading dims differ")
    _check_finite("matmul", ad, bd)
    data = ad @ bd
    batch = int(np.prod(data.shape[:-2], dtype=np.int64)) if data.ndim > 2 else 1
    _count(batch * ad.shape[-2] * ad.shape[-1] * bd.shape[-1])

    def bwd(g):
        if a.requires_grad:
            if bd.ndim == 2:
                a._accumulate(g @ bd.T)
            else:
                a._accumulate(g @ np.swapaxes(bd, -1, -2))
        if b.requires_grad:
            if bd.ndim == 2:
                k = ad.shape[-1]
                b._accumulate(ad.reshape(-1, k).T @ g.reshape(-1, g.shape[-1]))
            else:
                b._accumulate(np.swapaxes(ad, -1, -2) @ g)

    return _make("matmul", data, (a, b), bwd)


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", (), detail="empty input list")
    axis = axis % tensors[0].ndim
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != axis and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError("concat", tensors[0].shape, t.shape)
    _check_finite("concat", *(t.data for t in tensors))
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece)

    return _make("concat", data, tuple(tensors), bwd)


def slice_axis(x, axis, start, stop):
    x = _as_tensor(x)
    axis = axis % x.ndim
    _check_finite("slice", x.data)
    idx = tuple(slice(start, stop) if i == axis else slice(None) for i in range(x.ndim))
    data = x.data[idx].copy()

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[idx] = g
            x._accumulate(full)

    return _make("slice", data, (x,), bwd)


def gather_last(x, indices):
    """Select columns of the last axis: y[..., j] = x[..., indices[j]]."""
    x = _as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= x.shape[-1])):
        raise ShapeError("gather_last", x.shape, idx.shape, detail="bad column indices")
    _check_finite("gather_last", x.data)
    data = x.data[..., idx].copy()

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, (Ellipsis, idx), g)
            x._accumulate(full)

    return _make("gather_last", data, (x,), bwd)


def transpose(x, axes):
    x = _as_tensor(x)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError("transpose", x.shape, detail=f"axes {axes} not a permutation")
    _check_finite("transpose", x.data)
    data = np.transpose(x.data, axes).copy()
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.transpose(g, inverse))

    return _make("transpose", data, (x,), bwd)


def reshape(x, shape):
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeError("reshape", x.shape, shape, detail="element count differs")
    _check_finite("reshape", x.data)
    data = x.data.reshape(shape).copy()
    old_shape = x.shape

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g.reshape(old_shape))

    return _make("reshape", data, (x,), bwd)


# ---------------------------------------------------------------------------
# reductions


def sum_all(x):
    x = _as_tensor(x)
    _check_finite("sum", x.data)
    data = x.data.sum()

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.full(x.shape, g, dtype=x.dtype))

    return _make("sum", data, (x,), bwd)


def mean_over_axis(x, axis):
    x = _as_tensor(x)
    axis = axis % x.ndim
    n = x.shape[axis]
    if n == 0:
        raise ShapeError("mean_over_axis", x.shape, detail="empty axis")
    _check_finite("mean_over_axis", x.data)
    data = x.data.mean(axis=axis)
    _count(data.size)

    def bwd(g):
        if x.requires_grad:
            expanded = np.expand_dims(g, axis) / n
            x._accumulate(np.broadcast_to(expanded, x.shape).copy())

    return _make("mean_over_axis", data, (x,), bwd)


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(x):
    x = _as_tensor(x)
    _check_finite("sigmoid", x.data)
    xd = x.data
    data = np.empty_like(xd)
    pos = xd >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    data[~pos] = ex / (1.0 + ex)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * data * (1.0 - data))

    return _make("sigmoid", data, (x,), bwd)


def tanh(x):
    x = _as_tensor(x)
    _check_finite("tanh", x.data)
    data = np.tanh(x.data)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * (1.0 - data * data))

    return _make("tanh", data, (x,), bwd)


def relu(x):
    x = _as_tensor(x)
    _check_finite("relu", x.data)
    data = np.maximum(x.data, 0)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0))

    return _make("relu", data, (x,), bwd)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    """tanh-approximated GELU."""
    x = _as_tensor(x)
    _check_finite("gelu", x.data)
    xd = x.data
    inner = _GELU_C * (xd + 0.044715 * xd**3)
    th = np.tanh(inner)
    data = 0.5 * xd * (1.0 + th)
    _count(6 * x.size)

    def bwd(g):
        if x.requires_grad:
            sech2 = 1.0 - th * th
            dinner = _GELU_C * (1.0 + 3 * 0.044715 * xd * xd)
            x._accumulate(g * (0.5 * (1.0 + th) + 0.5 * xd * sech2 * dinner))

    return _make("gelu", data, (x,), bwd)


def softmax_over_axis(x, axis):
    x = _as_tensor(x)
    axis = axis % x.ndim
    _check_finite("softmax", x.data)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)
    _count(x.size)

    def bwd(g):
        if x.requires_grad:
            dot = (g * data).sum(axis=axis, keepdims=True)
            x._accumulate(data * (g - dot))

    return _make("softmax", data, (x,), bwd)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError("layer_norm", x.shape, gain.shape, bias.shape)
    _check_finite("layer_norm", x.data, gain.data, bias.data)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    data = xhat * gain.data + bias.data
    _count(4 * x.size)

    def bwd(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, n).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, n).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gain.data
            term = dxhat - dxhat.mean(axis=-1, keepdims=True)
            term -= xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(term * inv)

    return _make("layer_norm", data, (x, gain, bias), bwd)


def dropout(x, mask, keep_prob):
    """Inverted dropout with an externally supplied 0/1 mask."""
    x = _as_tensor(x)
    mask = np.asarray(mask)
    if mask.shape != x.shape:
        raise ShapeError("dropout", x.shape, mask.shape)
    if not (0.0 < keep_prob <= 1.0):
        raise ValueError(f"dropout: keep_prob must be in (0, 1], got {keep_prob}")
    _check_finite("dropout", x.data, mask)
    scaled = mask.astype(x.dtype) / x.dtype.type(keep_prob)
    data = x.data * scaled
    _count(2 * x.size)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * scaled)

    return _make("dropout", data, (x,), bwd)


# ---------------------------------------------------------------------------
# causal dilated convolution


def causal_dilated_conv1d(x, kernel, dilation):
    """Causal 1-D convolution over time with dilation.

    x: (T, C_in) or (B, T, C_in); kernel: (C_out, C_in, k). The input is
    left-padded by (k-1)*dilation zeros so the output keeps length T and
    the value at step t depends only on inputs at steps <= t.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if dilation < 1:
        raise ValueError(f"causal_dilated_conv1d: dilation must be >= 1, got {dilation}")
    if kernel.ndim != 3:
        raise ShapeError("causal_dilated_conv1d", x.shape, kernel.shape, detail="kernel must be 3-D")
    single = x.ndim == 2
    if single:
        xd = x.data[None, :, :]
    elif x.ndim == 3:
        xd = x.data
    else:
        raise ShapeError("causal_dilated_conv1d", x.shape, kernel.shape, detail="input must be 2-D or 3-D")
    cout, cin, k = kernel.shape
    if xd.shape[-1] != cin:
        raise ShapeError("causal_dilated_conv1d", x.shape, kernel.shape, detail="channel mismatch")
    _check_finite("causal_dilated_conv1d", xd, kernel.data)

    pad = (k - 1) * dilation
    b, t, _ = xd.shape
    xpad = np.zeros((b, t + pad, cin), dtype=xd.dtype)
    xpad[:, pad:, :] = xd
    data = kernels.causal_conv1d_fwd(xpad, kernel.data, dilation)
    _count(b * t * cout * cin * k)
    if single:
        data = data[0]

    def bwd(g):
        gy = g[None, :, :] if single else g
        gy = np.ascontiguousarray(gy)
        gxpad, gw = kernels.causal_conv1d_bwd(xpad, kernel.data, dilation, gy)
        if kernel.requires_grad:
            kernel._accumulate(gw)
        if x.requires_grad:
            gx = gxpad[:, pad:, :]
            x._accumulate(gx[0] if single else gx)

    return _make("causal_dilated_conv1d", data, (x, kernel), bwd)


# ---------------------------------------------------------------------------
# loss primitives


def huber_mean(pred, target, delta):
    """Mean Huber loss; quadratic within +-delta, linear outside."""
    pred = _as_tensor(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ShapeError("huber_mean", pred.shape, target.shape)
    if delta <= 0:
        raise ValueError(f"huber_mean: delta must be positive, got {delta}")
    _check_finite("huber_mean", pred.data, target)
    e = pred.data - target
    ae = np.abs(e)
    quad = ae <= delta
    vals = np.where(quad, 0.5 * e * e, delta * (ae - 0.5 * delta))
    data = vals.mean() if vals.size else np.zeros((), dtype=pred.dtype)
    n = max(vals.size, 1)
    _count(2 * vals.size)

    def bwd(g):
        if pred.requires_grad:
            pred._accumulate(g * np.clip(e, -delta, delta) / n)

    return _make("huber_mean", data, (pred,), bwd)


def bce_logits_mean(logits, targets):
    """Mean binary cross-entropy on logits; targets must be 0/1."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=logits.dtype)
    if targets.shape != logits.shape:
        raise ShapeError("bce_logits_mean", logits.shape, targets.shape)
    if targets.size and not np.all((targets == 0) | (targets == 1)):
        raise ValueError("bce_logits_mean: targets must be 0 or 1")
    _check_finite("bce_logits_mean", logits.data, targets)
    z = logits.data
    vals = np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    data = vals.mean() if vals.size else np.zeros((), dtype=logits.dtype)
    n = max(vals.size, 1)
    _count(2 * vals.size)

    def bwd(g):
        if logits.requires_grad:
            p = np.empty_like(z)
            pos = z >= 0
            p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
            ez = np.exp(z[~pos])
            p[~pos] = ez / (1.0 + ez)
            logits._accumulate(g * (p - targets) / n)

    return _make("bce_logits_mean", data, (logits,), bwd)
