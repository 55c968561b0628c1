"""Hot numeric kernels: conv2d, depthwise conv2d, Levenshtein DP.

Each kernel has a numba @njit implementation and a pure-numpy fallback;
LER_NUMBA=0 forces numpy everywhere. Default dispatch follows the
measurements in benchmarks/bench_kernels.py: depthwise conv and the
edit-distance DP go to numba (6-10x and >100x on one core), while dense
conv2d stays on the im2col+BLAS numpy path, which beats naive loops for
every shape this model uses. Both paths agree to float32 rounding; tests
assert allclose at 1e-5.
"""

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get("LER_NUMBA", "1") != "0"


# ---------------------------------------------------------------- conv2d

def _conv2d_cols(x, kh, kw, stride, pad):
    # (B,H,W,C) -> (B,Ho,Wo,kh,kw,C) window view, strided
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (B,Ho,Wo,C,kh,kw)
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def conv2d_forward_numpy(x, k, stride, pad):
    kh, kw, cin, cout = k.shape
    cols = _conv2d_cols(x, kh, kw, stride, pad)
    b, ho, wo = cols.shape[:3]
    out = cols.reshape(b * ho * wo, kh * kw * cin) @ k.reshape(kh * kw * cin, cout)
    return out.reshape(b, ho, wo, cout)


def conv2d_backward_numpy(x, k, gout, stride, pad):
    kh, kw, cin, cout = k.shape
    b, ho, wo, _ = gout.shape
    cols = _conv2d_cols(x, kh, kw, stride, pad)
    gflat = gout.reshape(b * ho * wo, cout)
    gk = (cols.reshape(b * ho * wo, kh * kw * cin).T @ gflat).reshape(k.shape)
    gcols = (gflat @ k.reshape(kh * kw * cin, cout).T).reshape(b, ho, wo, kh, kw, cin)
    hp, wp = x.shape[1] + 2 * pad, x.shape[2] + 2 * pad
    gx = np.zeros((b, hp, wp, cin), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            gx[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, :, i, j]
    if pad:
        gx = gx[:, pad:-pad, pad:-pad]
    return gx, gk


if _HAVE_NUMBA:

    @njit(cache=True)
    def _conv2d_forward_nb(x, k, stride, pad, out):
        b, h, w, cin = x.shape
        kh, kw, _, cout = k.shape
        ho, wo = out.shape[1], out.shape[2]
        for n in range(b):
            for oy in range(ho):
                for ox in range(wo):
                    for i in range(kh):
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox * stride + j - pad
                            if ix < 0 or ix >= w:
                                continue
                            for c in range(cin):
                                v = x[n, iy, ix, c]
                                for co in range(cout):
                                    out[n, oy, ox, co] += v * k[i, j, c, co]

    @njit(cache=True)
    def _conv2d_backward_nb(x, k, gout, stride, pad, gx, gk):
        b, h, w, cin = x.shape
        kh, kw, _, cout = k.shape
        ho, wo = gout.shape[1], gout.shape[2]
        for n in range(b):
            for oy in range(ho):
                for ox in range(wo):
                    for i in range(kh):
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox * stride + j - pad
                            if ix < 0 or ix >= w:
                                continue
                            for c in range(cin):
                                xv = x[n, iy, ix, c]
                                acc = 0.0
                                for co in range(cout):
                                    g = gout[n, oy, ox, co]
                                    acc += g * k[i, j, c, co]
                                    gk[i, j, c, co] += g * xv
                                gx[n, iy, ix, c] += acc


def conv2d_forward_numba(x, k, stride=1, pad=0):
    if not _HAVE_NUMBA:
        raise RuntimeError("numba is not available")
    kh = k.shape[0]
    b, h, w = x.shape[:3]
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - k.shape[1]) // stride + 1
    out = np.zeros((b, ho, wo, k.shape[3]), dtype=x.dtype)
    _conv2d_forward_nb(x, k, stride, pad, out)
    return out


def conv2d_backward_numba(x, k, gout, stride=1, pad=0):
    if not _HAVE_NUMBA:
        raise RuntimeError("numba is not available")
    gx = np.zeros_like(x)
    gk = np.zeros_like(k)
    _conv2d_backward_nb(x, k, np.ascontiguousarray(gout), stride, pad, gx, gk)
    return gx, gk


# dense conv: im2col+BLAS wins over the naive loops, so numpy is the default
def conv2d_forward(x, k, stride=1, pad=0):
    return conv2d_forward_numpy(x, k, stride, pad)


def conv2d_backward(x, k, gout, stride=1, pad=0):
    """Returns (grad_x, grad_kernel)."""
    return conv2d_backward_numpy(x, k, gout, stride, pad)


# ------------------------------------------------------- depthwise conv2d
# stride 1, same padding; kernel (kh,kw,C), one filter per channel.

def depthwise_forward_numpy(x, k):
    kh, kw, c = k.shape
    pad = kh // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    out = np.zeros_like(x)
    h, w = x.shape[1], x.shape[2]
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i:i + h, j:j + w] * k[i, j]
    return out


def depthwise_backward_numpy(x, k, gout):
    kh, kw, c = k.shape
    pad = kh // 2
    h, w = x.shape[1], x.shape[2]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    gxp = np.zeros_like(xp)
    gk = np.zeros_like(k)
    for i in range(kh):
        for j in range(kw):
            gxp[:, i:i + h, j:j + w] += gout * k[i, j]
            gk[i, j] = np.sum(xp[:, i:i + h, j:j + w] * gout, axis=(0, 1, 2),
                              dtype=np.float64).astype(k.dtype)
    return gxp[:, pad:h + pad, pad:w + pad], gk


if _HAVE_NUMBA:

    @njit(cache=True)
    def _depthwise_forward_nb(x, k, out):
        b, h, w, c = x.shape
        kh, kw = k.shape[0], k.shape[1]
        pad = kh // 2
        for n in range(b):
            for y in range(h):
                for xx in range(w):
                    for i in range(kh):
                        iy = y + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = xx + j - pad
                            if ix < 0 or ix >= w:
                                continue
                            for ch in range(c):
                                out[n, y, xx, ch] += x[n, iy, ix, ch] * k[i, j, ch]

    @njit(cache=True)
    def _depthwise_backward_nb(x, k, gout, gx, gk):
        b, h, w, c = x.shape
        kh, kw = k.shape[0], k.shape[1]
        pad = kh // 2
        for n in range(b):
            for y in range(h):
                for xx in range(w):
                    for i in range(kh):
                        iy = y + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = xx + j - pad
                            if ix < 0 or ix >= w:
                                continue
                            for ch in range(c):
                                g = gout[n, y, xx, ch]
                                gx[n, iy, ix, ch] += g * k[i, j, ch]
                                gk[i, j, ch] += g * x[n, iy, ix, ch]


def depthwise_forward(x, k):
    if NUMBA_ENABLED:
        out = np.zeros_like(x)
        _depthwise_forward_nb(x, k, out)
        return out
    return depthwise_forward_numpy(x, k)


def depthwise_backward(x, k, gout):
    if NUMBA_ENABLED:
        gx = np.zeros_like(x)
        gk = np.zeros_like(k)
        _depthwise_backward_nb(x, k, np.ascontiguousarray(gout), gx, gk)
        return gx, gk
    return depthwise_backward_numpy(x, k, gout)


# ----------------------------------------------------------- edit distance

def levenshtein_numpy(a, b):
    if len(a) < len(b):
        a, b = b, a
    if len(b) == 0:
        return len(a)
    b = np.asarray(b)
    prev = np.arange(len(b) + 1)
    for s in a:
        cur = prev + 1
        cur[1:] = np.minimum(cur[1:], prev[:-1] + (b != s))
        for j in range(1, len(cur)):  # deletion needs the running minimum
            if cur[j - 1] + 1 < cur[j]:
                cur[j] = cur[j - 1] + 1
        prev = cur
    return int(prev[-1])


if _HAVE_NUMBA:

    @njit(cache=True)
    def _levenshtein_nb(a, b):
        n, m = a.size, b.size
        if n == 0:
            return m
        if m == 0:
            return n
        prev = np.arange(m + 1)
        cur = np.empty(m + 1, dtype=np.int64)
        for i in range(1, n + 1):
            cur[0] = i
            for j in range(1, m + 1):
                cost = 0 if a[i - 1] == b[j - 1] else 1
                best = prev[j - 1] + cost
                if prev[j] + 1 < best:
                    best = prev[j] + 1
                if cur[j - 1] + 1 < best:
                    best = cur[j - 1] + 1
                cur[j] = best
            prev, cur = cur, prev
        return prev[m]


def levenshtein(a, b):
    """Minimum insertions+deletions+substitutions between two id sequences."""
    if NUMBA_ENABLED:
        return int(_levenshtein_nb(np.asarray(a, dtype=np.int64),
                                   np.asarray(b, dtype=np.int64)))
    return levenshtein_numpy(np.asarray(a, dtype=np.int64),
                             np.asarray(b, dtype=np.int64))
