"""Parameter containers and the handful of layers the recognizer needs.

Parameters are Tensors with requires_grad=True; assigning one to a Module
attribute registers it. Registration order is construction order, which
fixes both the checkpoint blob order and the order of RNG draws at init.
Constant tensors (masks, sinusoidal tables, frozen pools) are plain
attributes and stay out of the parameter list.
"""

import math

import numpy as np

from .tensor import (Tensor, gelu, layer_norm, linear, matmul, permute,
                     reshape, softmax, conv2d, depthwise_conv2d)


def trunc_normal(rng, shape, std=0.02, dtype=np.float32):
    a = rng.standard_normal(shape) * std
    return np.clip(a, -2 * std, 2 * std).astype(dtype)


def param(data):
    return Tensor(data, requires_grad=True)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix=""):
        for n, p in self._params.items():
            yield prefix + n, p
        for n, m in self._modules.items():
            yield from m.named_parameters(prefix + n + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def param_count(self):
        return sum(p.size for p in self.parameters())


class ModuleList(Module):
    def __init__(self, mods):
        super().__init__()
        self.items = list(mods)
        for i, m in enumerate(self.items):
            self._modules[str(i)] = m

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]


class Linear(Module):
    def __init__(self, din, dout, rng, dtype=np.float32, bias=True):
        super().__init__()
        self.w = param(trunc_normal(rng, (din, dout), dtype=dtype))
        self.b = param(np.zeros(dout, dtype=dtype)) if bias else None

    def __call__(self, x):
        return linear(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float32, eps=1e-5):
        super().__init__()
        self.gamma = param(np.ones(dim, dtype=dtype))
        self.beta = param(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gamma, self.beta, self.eps)


def _split_heads(x, heads):
    b, s, d = x.shape
    dh = d // heads
    x = reshape(x, (b, s, heads, dh))
    x = permute(x, (0, 2, 1, 3))
    return reshape(x, (b * heads, s, dh))


def _merge_heads(x, b, heads):
    bh, s, dh = x.shape
    x = reshape(x, (b, heads, s, dh))
    x = permute(x, (0, 2, 1, 3))
    return reshape(x, (b, s, heads * dh))


class SelfAttention(Module):
    """Multi-head self-attention; an additive (S,S) mask may be supplied.

    last_weights holds the post-softmax weights of the most recent call
    when record=True, as a (B, heads, S, S) float array.
    """

    def __init__(self, dim, heads, rng, dtype=np.float32):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.scale = 1.0 / math.sqrt(dim // heads)
        self.wq = Linear(dim, dim, rng, dtype)
        self.wk = Linear(dim, dim, rng, dtype)
        self.wv = Linear(dim, dim, rng, dtype)
        self.wo = Linear(dim, dim, rng, dtype)
        self.last_weights = None

    def __call__(self, x, mask=None, record=False):
        b, s, _ = x.shape
        q = _split_heads(self.wq(x), self.heads)
        k = _split_heads(self.wk(x), self.heads)
        v = _split_heads(self.wv(x), self.heads)
        scores = matmul(q, permute(k, (0, 2, 1))) * self.scale
        if mask is not None:
            scores = scores + mask
        w = softmax(scores, axis=-1)
        if record:
            self.last_weights = w.data.reshape(b, self.heads, s, s).copy()
        out = _merge_heads(matmul(w, v), b, self.heads)
        return self.wo(out)


class CrossAttention(Module):
    def __init__(self, dim, heads, rng, ctx_dim=None, dtype=np.float32):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        ctx_dim = ctx_dim or dim
        self.heads = heads
        self.scale = 1.0 / math.sqrt(dim // heads)
        self.wq = Linear(dim, dim, rng, dtype)
        self.wk = Linear(ctx_dim, dim, rng, dtype)
        self.wv = Linear(ctx_dim, dim, rng, dtype)
        self.wo = Linear(dim, dim, rng, dtype)

    def __call__(self, x, ctx):
        b = x.shape[0]
        q = _split_heads(self.wq(x), self.heads)
        k = _split_heads(self.wk(ctx), self.heads)
        v = _split_heads(self.wv(ctx), self.heads)
        scores = matmul(q, permute(k, (0, 2, 1))) * self.scale
        w = softmax(scores, axis=-1)
        return self.wo(_merge_heads(matmul(w, v), b, self.heads))


class FeedForward(Module):
    def __init__(self, dim, rng, ratio=4, dtype=np.float32):
        super().__init__()
        self.fc1 = Linear(dim, dim * ratio, rng, dtype)
        self.fc2 = Linear(dim * ratio, dim, rng, dtype)

    def __call__(self, x):
        return self.fc2(gelu(self.fc1(x)))


class EncoderBlock(Module):
    """Post-norm transformer encoder block."""

    def __init__(self, dim, heads, rng, ratio=4, dtype=np.float32):
        super().__init__()
        self.attn = SelfAttention(dim, heads, rng, dtype)
        self.ln1 = LayerNorm(dim, dtype)
        self.ffn = FeedForward(dim, rng, ratio, dtype)
        self.ln2 = LayerNorm(dim, dtype)

    def __call__(self, x):
        x = self.ln1(x + self.attn(x))
        return self.ln2(x + self.ffn(x))


class DecoderBlock(Module):
    """Self-attention over queries, cross-attention into a context, FFN."""

    def __init__(self, dim, heads, rng, ctx_dim=None, ratio=4, dtype=np.float32):
        super().__init__()
        self.self_attn = SelfAttention(dim, heads, rng, dtype)
        self.ln1 = LayerNorm(dim, dtype)
        self.cross = CrossAttention(dim, heads, rng, ctx_dim, dtype)
        self.ln2 = LayerNorm(dim, dtype)
        self.ffn = FeedForward(dim, rng, ratio, dtype)
        self.ln3 = LayerNorm(dim, dtype)

    def __call__(self, x, ctx):
        x = self.ln1(x + self.self_attn(x))
        x = self.ln2(x + self.cross(x, ctx))
        return self.ln3(x + self.ffn(x))


class Conv2d(Module):
    def __init__(self, cin, cout, ksize, rng, stride=1, pad=0, dtype=np.float32):
        super().__init__()
        fan_in = ksize * ksize * cin
        k = rng.standard_normal((ksize, ksize, cin, cout)) / math.sqrt(fan_in)
        self.k = param(k.astype(dtype))
        self.b = param(np.zeros(cout, dtype=dtype))
        self.stride = stride
        self.pad = pad

    def __call__(self, x):
        return conv2d(x, self.k, self.b, self.stride, self.pad)


class ConvMixBlock(Module):
    """Depthwise 3x3 + pointwise mixing with residual and layer norm."""

    def __init__(self, dim, rng, dtype=np.float32):
        super().__init__()
        k = rng.standard_normal((3, 3, dim)) / 3.0  # fan_in = 9
        self.dw = param(k.astype(dtype))
        self.dwb = param(np.zeros(dim, dtype=dtype))
        self.pw = Linear(dim, dim, rng, dtype)
        self.ln = LayerNorm(dim, dtype)

    def __call__(self, x):
        y = self.pw(depthwise_conv2d(x, self.dw, self.dwb))
        return self.ln(x + y)
