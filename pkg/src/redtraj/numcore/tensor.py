"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array. Every differentiable op returns a new
tensor that remembers its parents and a closure propagating the upstream
gradient back to them. ``backward`` walks the graph in reverse topological
order.
"""

import numpy as np

from ..errors import ContractViolation

_DTYPE = np.float64
_DEBUG = False


def set_default_dtype(dtype):
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DTYPE = dtype.type


def get_default_dtype():
    return _DTYPE


def set_debug(flag=True):
    """Enable finiteness assertions after every op."""
    global _DEBUG
    _DEBUG = bool(flag)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed", "name")

    def __init__(self, data, requires_grad=False, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype != _DTYPE:
            arr = arr.astype(_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._consumed = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self, grad=None):
        backward(self, grad)


class Parameter(Tensor):
    """Trainable tensor carrying AdamW moment buffers."""

    __slots__ = ("m", "v", "step")

    def __init__(self, data, name=None):
        super().__init__(np.array(data, dtype=_DTYPE, copy=True), requires_grad=True, name=name)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    out = Tensor(data)
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite value produced by tensor op")
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss, grad=None):
    if loss._consumed:
        raise ContractViolation("backward called twice on the same graph without rebuilding it")
    if grad is None:
        if loss.data.size != 1:
            raise ContractViolation(f"backward needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    order = []
    seen = set()
    stack = [(loss, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    _accum(loss, grad)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if not isinstance(node, Parameter) and node is not loss and node._parents:
            # interior nodes only need their grad during this pass
            node.grad = None
    loss._consumed = True


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def scale(a, c):
    """Multiply by a python scalar."""
    c = float(c)

    def bw(g):
        _accum(a, g * c)

    return _make(a.data * c, (a,), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(a.data / b.data, (a, b), bw)


def exp(a):
    out = np.exp(a.data)

    def bw(g):
        _accum(a, g * out)

    return _make(out, (a,), bw)


def log(a):
    def bw(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bw)


def sin(a):
    def bw(g):
        _accum(a, g * np.cos(a.data))

    return _make(np.sin(a.data), (a,), bw)


def leaky_relu(a, slope=0.2):
    pos = a.data > 0

    def bw(g):
        _accum(a, np.where(pos, g, g * slope))

    return _make(np.where(pos, a.data, a.data * slope), (a,), bw)


def elu(a, alpha=1.0):
    x = a.data
    neg = np.expm1(np.minimum(x, 0.0)) * alpha
    out = np.where(x > 0, x, neg)

    def bw(g):
        _accum(a, np.where(x > 0, g, g * (neg + alpha)))

    return _make(out, (a,), bw)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """tanh approximation of the Gaussian error linear unit."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        _accum(a, g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * dinner))

    return _make(out, (a,), bw)


def masked_fill(a, mask, value):
    """Set entries where ``mask`` is true to ``value``; no gradient flows there."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    out = np.where(mask, value, a.data)

    def bw(g):
        _accum(a, np.where(mask, 0.0, g))

    return _make(out, (a,), bw)


# ------------------------------------------------------------ linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ContractViolation(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError as exc:
        raise ContractViolation(f"matmul shape mismatch: {a.shape} @ {b.shape}") from exc

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(out, (a, b), bw)


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        _accum(a, np.transpose(g, inv))

    return _make(np.transpose(a.data, axes), (a,), bw)


def reshape(a, shape):
    old = a.shape

    def bw(g):
        _accum(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), bw)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ContractViolation(f"concat shape mismatch: {ref} vs {t.shape} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, splits, axis=ax)):
            _accum(t, part)

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), bw)


def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, shape))

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bw)


def tmean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(tsum(a, axis, keepdims), 1.0 / n)


def take(table, idx):
    """Gather rows of ``table`` (axis 0) with an integer index array of any shape."""
    idx = np.asarray(idx, dtype=np.int64)
    n = table.shape[0]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise ContractViolation(f"take index out of range for table with {n} rows")

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1), g.reshape((-1,) + table.shape[1:]))
        _accum(table, full)

    return _make(table.data[idx], (table,), bw)


def segment_sum(x, seg, n_segments):
    """Sum rows of ``x`` into ``n_segments`` buckets given by ``seg``."""
    seg = np.asarray(seg, dtype=np.int64)
    out = np.zeros((n_segments,) + x.shape[1:], dtype=x.data.dtype)
    np.add.at(out, seg, x.data)

    def bw(g):
        _accum(x, g[seg])

    return _make(out, (x,), bw)


# ------------------------------------------------------- normalization & loss


def softmax(a, axis=-1, mask=None):
    """Softmax with per-slice max subtraction.

    ``mask`` marks allowed positions; disallowed positions get probability 0.
    Every slice must allow at least one position.
    """
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def bw(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        _accum(a, out * (g - dot))

    return _make(out, (a,), bw)


def log_softmax(a, axis=-1):
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    out = x - lse

    def bw(g):
        p = np.exp(out)
        _accum(a, g - p * np.sum(g, axis=axis, keepdims=True))

    return _make(out, (a,), bw)


def cross_entropy(logits, targets, ignore=None, weights=None):
    """Cross-entropy of ``logits`` [n, C] against integer ``targets`` [n].

    Without ``weights`` this is the mean over non-ignored rows. With
    ``weights`` the loss is ``sum_i w_i * nll_i`` over non-ignored rows,
    which lets callers express per-trajectory-then-batch averaging.
    """
    if logits.ndim != 2:
        raise ContractViolation(f"cross_entropy expects [n, C] logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if targets.shape != (n,):
        raise ContractViolation(f"targets shape {targets.shape} does not match logits {logits.shape}")
    keep = np.ones(n, dtype=bool) if ignore is None else ~np.asarray(ignore, dtype=bool)
    if not keep.any():
        from ..errors import ValidationError

        raise ValidationError("cross_entropy: every row is ignored")
    if targets[keep].min() < 0 or targets[keep].max() >= c:
        raise ContractViolation(f"target class out of range [0, {c})")
    if weights is None:
        w = keep / keep.sum()
    else:
        w = np.where(keep, np.asarray(weights, dtype=logits.data.dtype), 0.0)
    x = logits.data
    m = np.max(x, axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(x - m), axis=1)) + m[:, 0]
    safe_t = np.where(keep, targets, 0)
    nll = lse - x[np.arange(n), safe_t]
    loss = np.sum(w * nll)

    def bw(g):
        p = np.exp(x - lse[:, None])
        p[np.arange(n), safe_t] -= 1.0
        _accum(logits, g * w[:, None] * p)

    return _make(np.asarray(loss), (logits,), bw)


def layer_norm(x, gain, bias, eps=1e-5):
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    d = x.shape[-1]

    def bw(g):
        if gain.requires_grad:
            _accum(gain, _unbroadcast(g * xhat, gain.shape))
        if bias.requires_grad:
            _accum(bias, _unbroadcast(g, bias.shape))
        if x.requires_grad:
            gx = g * gain.data
            dx = inv / d * (d * gx - gx.sum(-1, keepdims=True) - xhat * (gx * xhat).sum(-1, keepdims=True))
            _accum(x, dx)

    return _make(out, (x, gain, bias), bw)


def dropout(x, p, rng, training):
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    m = keep / (1.0 - p)

    def bw(g):
        _accum(x, g * m)

    return _make(x.data * m, (x,), bw)


def softmax_rows(x):
    return softmax(x, axis=-1)
