"""Timing comparison of the numba kernels against the pure-numpy fallback.

Run as:  python3 benchmarks/bench_kernels.py
The numpy column is what you get with LER_NUMBA=0.
"""

import time

import numpy as np

from ler import kernels as K


def timeit(fn, *args, repeat=5, warmup=1):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def row(name, nb, np_, check=""):
    speedup = np_ / nb if nb > 0 else float("inf")
    print(f"{name:<34} {nb * 1e3:9.2f} ms {np_ * 1e3:9.2f} ms {speedup:7.2f}x  {check}")


def bench_conv(batch, h, w, cin, cout, stride, pad):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((batch, h, w, cin)).astype(np.float32)
    k = rng.standard_normal((3, 3, cin, cout)).astype(np.float32)
    a = K.conv2d_forward_numba(x, k, stride, pad)
    b = K.conv2d_forward_numpy(x, k, stride, pad)
    ok = "agree" if np.allclose(a, b, atol=1e-4) else "MISMATCH"
    nb = timeit(K.conv2d_forward_numba, x, k, stride, pad)
    np_ = timeit(K.conv2d_forward_numpy, x, k, stride, pad)
    row(f"conv2d {batch}x{h}x{w}x{cin}->{cout} s{stride}", nb, np_, ok)
    g = rng.standard_normal(a.shape).astype(np.float32)
    nb = timeit(K.conv2d_backward_numba, x, k, g, stride, pad)
    np_ = timeit(K.conv2d_backward_numpy, x, k, g, stride, pad)
    row("  backward", nb, np_)


def bench_depthwise(batch, h, w, c):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((batch, h, w, c)).astype(np.float32)
    k = rng.standard_normal((3, 3, c)).astype(np.float32)
    a, b = K.depthwise_forward(x, k), K.depthwise_forward_numpy(x, k)
    ok = "agree" if np.allclose(a, b, atol=1e-4) else "MISMATCH"
    nb = timeit(K.depthwise_forward, x, k)
    np_ = timeit(K.depthwise_forward_numpy, x, k)
    row(f"depthwise {batch}x{h}x{w}x{c}", nb, np_, ok)
    g = rng.standard_normal(a.shape).astype(np.float32)
    nb = timeit(K.depthwise_backward, x, k, g)
    np_ = timeit(K.depthwise_backward_numpy, x, k, g)
    row("  backward", nb, np_)


def bench_levenshtein(n_pairs, length):
    rng = np.random.default_rng(2)
    pairs = [(rng.integers(0, 30, length), rng.integers(0, 30, length))
             for _ in range(n_pairs)]

    def run_nb():
        for a, b in pairs:
            K.levenshtein(a, b)

    def run_np():
        for a, b in pairs:
            K.levenshtein_numpy(np.asarray(a), np.asarray(b))

    ok = all(K.levenshtein(a, b) == K.levenshtein_numpy(np.asarray(a), np.asarray(b))
             for a, b in pairs[:20])
    row(f"levenshtein {n_pairs} pairs len {length}",
        timeit(run_nb), timeit(run_np), "agree" if ok else "MISMATCH")


def main():
    if not K.NUMBA_ENABLED:
        print("numba path disabled (LER_NUMBA=0 or numba missing); "
              "both columns would be the numpy fallback. Re-run with numba.")
        return
    print(f"{'kernel':<34} {'numba':>12} {'numpy':>12} {'speedup':>8}")
    # the stem convolutions of a training batch
    bench_conv(16, 32, 128, 1, 16, 2, 1)
    bench_conv(16, 16, 64, 16, 32, 2, 1)
    # full-width line at base-model channels
    bench_conv(1, 32, 320, 3, 64, 2, 1)
    bench_depthwise(16, 8, 32, 32)
    bench_depthwise(1, 8, 80, 128)
    bench_levenshtein(500, 25)
    bench_levenshtein(100, 200)


if __name__ == "__main__":
    main()
