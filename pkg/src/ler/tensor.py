"""Minimal dense-tensor engine with reverse-mode differentiation.

Float32 end to end (a float64 mode exists for gradient checking: build the
graph from float64 tensors and every op preserves the dtype). Reductions
(sum, mean, cross_entropy) accumulate in float64 before casting back.
Broadcasting is limited to one missing leading batch dimension so every
backward rule stays auditable; anything richer (bias add, attention
gating) is its own op with an explicit gradient.
"""

import contextlib

import numpy as np

from . import kernels

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def make_rng(seed, stream=0):
    """Counter-based generator; (seed, stream) keys an independent stream."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op",
                 "_backward_ran", "_grad_alias")

    def __init__(self, data, requires_grad=False):
        a = np.asarray(data)
        if a.dtype not in (np.float32, np.float64):
            a = a.astype(np.float32)
        self.data = a
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = ""
        self._backward_ran = False
        self._grad_alias = False

    # -- basics ----------------------------------------------------------
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

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        # first write may alias the incoming array; it is never mutated in
        # place while aliased (a second contribution replaces it with a sum)
        if self.grad is None:
            if g.dtype != self.data.dtype:
                g = g.astype(self.data.dtype)
            self.grad = g
            self._grad_alias = True
        elif self._grad_alias:
            self.grad = self.grad + g
            self._grad_alias = False
        else:
            self.grad += g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, s):
        if isinstance(s, Tensor):
            raise TypeError("tensor/tensor division not supported")
        return mul(self, 1.0 / float(s))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 or not isinstance(shape[0], (tuple, list)) else shape[0])

    def permute(self, *axes):
        return permute(self, axes if len(axes) != 1 or not isinstance(axes[0], (tuple, list)) else axes[0])


def _node(data, parents, op, backward_fn):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dt = like.data.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dt))


def _lead_match(sa, sb):
    """Allowed elementwise pairings: equal shapes, or one missing leading dim."""
    if sa == sb:
        return 0
    if len(sa) == len(sb) + 1 and sa[1:] == sb:
        return 1   # b broadcasts up
    if len(sb) == len(sa) + 1 and sb[1:] == sa:
        return -1  # a broadcasts up
    raise ValueError(f"elementwise shapes {sa} and {sb} do not match "
                     "(only one leading batch dim may broadcast)")


# -- elementwise ----------------------------------------------------------

def add(a, b):
    if not isinstance(b, Tensor) and np.isscalar(b):
        out_data = a.data + b

        def back():
            if a.requires_grad:
                a._accum(out.grad)
        out = _node(out_data, (a,), "add", back)
        return out
    b = _as_tensor(b, a)
    mode = _lead_match(a.shape, b.shape)
    out_data = a.data + b.data

    def back():
        g = out.grad
        if a.requires_grad:
            a._accum(g.sum(axis=0) if mode == -1 else g)
        if b.requires_grad:
            b._accum(g.sum(axis=0) if mode == 1 else g)
    out = _node(out_data, (a, b), "add", back)
    return out


def sub(a, b):
    return add(a, neg(_as_tensor(b, a)))


def neg(a):
    def back():
        if a.requires_grad:
            a._accum(-out.grad)
    out = _node(-a.data, (a,), "neg", back)
    return out


def mul(a, b):
    if not isinstance(b, Tensor) and np.isscalar(b):
        s = float(b)

        def back():
            if a.requires_grad:
                a._accum(out.grad * s)
        out = _node(a.data * np.asarray(s, dtype=a.data.dtype), (a,), "scale", back)
        return out
    b = _as_tensor(b, a)
    mode = _lead_match(a.shape, b.shape)
    out_data = a.data * b.data

    def back():
        g = out.grad
        if a.requires_grad:
            ga = g * b.data
            a._accum(ga.sum(axis=0) if mode == -1 else ga)
        if b.requires_grad:
            gb = g * a.data
            b._accum(gb.sum(axis=0) if mode == 1 else gb)
    out = _node(out_data, (a, b), "mul", back)
    return out


# -- shape ops -------------------------------------------------------------

def reshape(a, shape):
    shape = tuple(shape)
    old = a.data.shape
    out_data = a.data.reshape(shape)  # view when layout allows

    def back():
        if a.requires_grad:
            a._accum(out.grad.reshape(old))
    out = _node(out_data, (a,), "reshape", back)
    return out


def permute(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def back():
        if a.requires_grad:
            a._accum(out.grad.transpose(inv))
    out = _node(np.ascontiguousarray(a.data.transpose(axes)), (a,), "permute", back)
    return out


def expand_leading(a, n):
    """Tile a as a new leading dimension of size n; backward sums it out."""
    out_data = np.ascontiguousarray(np.broadcast_to(a.data, (n,) + a.data.shape))

    def back():
        if a.requires_grad:
            a._accum(out.grad.sum(axis=0))
    out = _node(out_data, (a,), "expand", back)
    return out


# -- matmul ----------------------------------------------------------------

def matmul(a, b):
    """2D@2D, 3D@3D with equal leading dim, or mixed 3D/2D.

    The 3D forms exist for one leading batch dimension; attention code
    flattens (batch, heads) into it.
    """
    sa, sb = a.shape, b.shape
    if a.ndim not in (2, 3) or b.ndim not in (2, 3):
        raise ValueError(f"matmul expects rank 2 or 3 operands, got {sa} @ {sb}")
    if sa[-1] != sb[-2]:
        raise ValueError(f"matmul inner dims differ: {sa} @ {sb}")
    if a.ndim == 3 and b.ndim == 3 and sa[0] != sb[0]:
        raise ValueError(f"matmul batch dims differ: {sa} @ {sb}")
    out_data = a.data @ b.data

    def back():
        g = out.grad
        if a.requires_grad:
            bt = b.data.swapaxes(-1, -2)
            ga = g @ bt
            if a.ndim == 2 and g.ndim == 3:
                ga = ga.sum(axis=0)
            a._accum(ga)
        if b.requires_grad:
            at = a.data.swapaxes(-1, -2)
            if b.ndim == 2 and g.ndim == 3:
                gf = g.reshape(-1, g.shape[-1])
                af = a.data.reshape(-1, a.data.shape[-1])
                b._accum(af.T @ gf)
            else:
                b._accum(at @ g)
    out = _node(out_data, (a, b), "matmul", back)
    return out


# -- nonlinearities ----------------------------------------------------------

def relu(a):
    out_data = np.maximum(a.data, 0)

    def back():
        if a.requires_grad:
            a._accum(out.grad * (a.data > 0))
    out = _node(out_data, (a,), "relu", back)
    return out


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(a):
    x = a.data
    t = np.tanh(_GELU_C * (x + 0.044715 * x * x * x))
    out_data = (0.5 * x * (1.0 + t)).astype(x.dtype)

    def back():
        if a.requires_grad:
            d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 0.134145 * x * x)
            a._accum(out.grad * d.astype(x.dtype))
    out = _node(out_data, (a,), "gelu", back)
    return out


def softmax(a, axis=-1):
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m)
    y = e / np.sum(e, axis=axis, keepdims=True)
    y = y.astype(x.dtype)

    def back():
        if a.requires_grad:
            g = out.grad
            a._accum(y * (g - np.sum(g * y, axis=axis, keepdims=True)))
    out = _node(y, (a,), "softmax", back)
    return out


def layer_norm(a, gamma, beta, eps=1e-5):
    """Normalize the last dim to mean 0 / var 1, then scale and shift."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = (gamma.data * xhat + beta.data).astype(x.dtype)

    def back():
        g = out.grad
        if gamma.requires_grad:
            gamma._accum((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            beta._accum(g.reshape(-1, x.shape[-1]).sum(axis=0))
        if a.requires_grad:
            gx = g * gamma.data
            a._accum(inv * (gx - gx.mean(axis=-1, keepdims=True)
                            - xhat * np.mean(gx * xhat, axis=-1, keepdims=True)))
    out = _node(out_data, (a, gamma, beta), "layer_norm", back)
    return out


# -- affine / embedding -------------------------------------------------------

def linear(x, w, b=None):
    """x[..., din] @ w[din, dout] + b; bias broadcast over all leading dims."""
    din, dout = w.shape
    if x.shape[-1] != din:
        raise ValueError(f"linear: input dim {x.shape[-1]} != weight dim {din}")
    xf = x.data.reshape(-1, din)
    y = xf @ w.data
    if b is not None:
        y = y + b.data
    out_data = y.reshape(x.shape[:-1] + (dout,))

    def back():
        g = out.grad.reshape(-1, dout)
        if x.requires_grad:
            x._accum((g @ w.data.T).reshape(x.shape))
        if w.requires_grad:
            w._accum(xf.T @ g)
        if b is not None and b.requires_grad:
            b._accum(g.sum(axis=0))
    parents = (x, w) if b is None else (x, w, b)
    out = _node(out_data, parents, "linear", back)
    return out


def embedding(table, idx):
    """Row lookup; idx is an integer ndarray, gradient scatter-adds."""
    idx = np.asarray(idx)
    out_data = table.data[idx]

    def back():
        if table.requires_grad:
            g = np.zeros_like(table.data)
            np.add.at(g, idx.reshape(-1), out.grad.reshape(-1, table.shape[-1]))
            table._accum(g)
    out = _node(out_data, (table,), "embedding", back)
    return out


# -- convolutions -------------------------------------------------------------

def conv2d(x, k, b=None, stride=1, pad=0):
    """x (B,H,W,Cin) * k (kh,kw,Cin,Cout), optional bias (Cout,)."""
    if x.ndim != 4 or k.ndim != 4:
        raise ValueError(f"conv2d expects 4D input/kernel, got {x.shape}, {k.shape}")
    if x.shape[3] != k.shape[2]:
        raise ValueError(f"conv2d channels differ: input {x.shape} kernel {k.shape}")
    out_data = kernels.conv2d_forward(x.data, k.data, stride, pad)
    if b is not None:
        out_data = out_data + b.data

    def back():
        g = out.grad
        need_x = x.requires_grad
        gx, gk = kernels.conv2d_backward(x.data, k.data, g, stride, pad)
        if need_x:
            x._accum(gx)
        if k.requires_grad:
            k._accum(gk)
        if b is not None and b.requires_grad:
            b._accum(g.sum(axis=(0, 1, 2)))
    parents = (x, k) if b is None else (x, k, b)
    out = _node(out_data, parents, "conv2d", back)
    return out


def depthwise_conv2d(x, k, b=None):
    """Per-channel 3x3-style conv, stride 1, same padding. k is (kh,kw,C)."""
    if x.shape[3] != k.shape[2]:
        raise ValueError(f"depthwise channels differ: input {x.shape} kernel {k.shape}")
    out_data = kernels.depthwise_forward(x.data, k.data)
    if b is not None:
        out_data = out_data + b.data

    def back():
        g = out.grad
        gx, gk = kernels.depthwise_backward(x.data, k.data, g)
        if x.requires_grad:
            x._accum(gx)
        if k.requires_grad:
            k._accum(gk)
        if b is not None and b.requires_grad:
            b._accum(g.sum(axis=(0, 1, 2)))
    parents = (x, k) if b is None else (x, k, b)
    out = _node(out_data, parents, "depthwise", back)
    return out


# -- reductions ---------------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    out_data = a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.dtype)

    def back():
        if a.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.shape).astype(a.dtype))
    out = _node(out_data, (a,), "sum", back)
    return out


def mean(a, axis=None, keepdims=False):
    out_data = a.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.dtype)
    count = a.size if axis is None else a.shape[axis]

    def back():
        if a.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accum((np.broadcast_to(g, a.shape) / count).astype(a.dtype))
    out = _node(out_data, (a,), "mean", back)
    return out


def global_mean_pool(a, axis):
    """Average out one axis; the aggregation step before a classifier head."""
    return mean(a, axis=axis)


def cross_entropy(logits, targets, mask=None):
    """Mean cross-entropy of integer targets over the last logits axis.

    targets: integer ndarray, shape == logits.shape[:-1]. mask, if given,
    is a 0/1 ndarray of that shape; a fully masked batch yields loss 0
    with zero gradient.
    """
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ValueError(f"cross_entropy: targets {targets.shape} vs logits {logits.shape}")
    ncls = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= ncls):
        raise ValueError(f"cross_entropy: target index out of range for {ncls} classes")
    x = logits.data
    m = np.max(x, axis=-1, keepdims=True)
    z = x - m
    se = np.sum(np.exp(z), axis=-1, keepdims=True, dtype=np.float64)
    logp = z - np.log(se).astype(x.dtype)
    nll = -np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        count = mask.sum()
        total = float((nll * mask).sum(dtype=np.float64))
    else:
        count = float(nll.size)
        total = float(nll.sum(dtype=np.float64))
    value = total / count if count > 0 else 0.0
    out_data = np.asarray(value, dtype=x.dtype)

    def back():
        if logits.requires_grad and count > 0:
            p = np.exp(logp)
            onehot = np.zeros_like(p)
            np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
            g = (p - onehot) * (float(out.grad) / count)
            if mask is not None:
                g = g * mask[..., None].astype(x.dtype)
            logits._accum(g.astype(x.dtype))
    out = _node(out_data, (logits,), "cross_entropy", back)
    return out


# -- attention gating ----------------------------------------------------------

def attend_scale(att, vis):
    """Per-query gating: out[..., l, t, d] = att[..., l, t] * vis[..., t, d]."""
    if att.shape[:-2] != vis.shape[:-2] or att.shape[-1] != vis.shape[-2]:
        raise ValueError(f"attend_scale: att {att.shape} vs vis {vis.shape}")
    out_data = att.data[..., :, :, None] * vis.data[..., None, :, :]

    def back():
        g = out.grad
        if att.requires_grad:
            att._accum(np.sum(g * vis.data[..., None, :, :], axis=-1))
        if vis.requires_grad:
            vis._accum(np.sum(g * att.data[..., :, :, None], axis=-3))
    out = _node(out_data, (att, vis), "attend_scale", back)
    return out


# -- backward driver -------------------------------------------------------------

def backward(loss):
    """Reverse-mode sweep from a scalar loss; frees the graph afterwards."""
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward_ran:
        raise RuntimeError("backward already ran for this loss; graph was freed")
    if not loss._parents:
        raise RuntimeError("loss has no computation graph attached")
    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()
    loss._backward_ran = True
    for node in topo:
        node._backward = None
        node._parents = ()


# -- finite differences -------------------------------------------------------------

def finite_diff_grad(f, x, eps=1e-3, indices=None):
    """Central-difference gradient oracle for a scalar function of one tensor.

    Differences are taken in float64 regardless of x's dtype. If indices
    (flat coordinates) are given, only those components are probed and a
    1-D float64 array of the same length is returned; otherwise the full
    gradient array of x.shape.
    """
    base = x.data.astype(np.float64)
    flat = base.reshape(-1)
    idxs = range(flat.size) if indices is None else list(indices)
    vals = np.zeros(len(idxs) if indices is not None else flat.size, dtype=np.float64)

    def eval_at(i, delta):
        probe = flat.copy()
        probe[i] += delta
        t = Tensor(probe.reshape(base.shape))
        with no_grad():
            return np.float64(f(t).item())

    for j, i in enumerate(idxs):
        fp = eval_at(i, eps)
        fm = eval_at(i, -eps)
        vals[j] = (fp - fm) / (2.0 * eps)
    if indices is None:
        return vals.reshape(base.shape)
    return vals


def max_rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(floor, np.abs(a) + np.abs(b))
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / denom))
