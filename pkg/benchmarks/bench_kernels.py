"""Compare the compiled and numpy convolution-lowering kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times im2col and col2im for both backends on layer shapes that occur in the
generator and discriminator, then one full conv2d forward+backward with the
active backend. Backends are checked for equal output before timing.
"""
import argparse
import timeit

import numpy as np

from dgfilter import kernels
from dgfilter.autograd import Tensor, conv2d

# (batch, channels, side, kernel, stride, dilation)
CASES = [
    (3, 64, 64, 3, 1, 1),
    (3, 64, 64, 3, 1, 4),
    (3, 256, 32, 3, 1, 2),
    (3, 6, 64, 3, 2, 1),
    (3, 512, 8, 3, 1, 1),
]


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled kernels not built; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    header = f"{'case':<28}" + "".join(f"{b + ' im2col':>16}{b + ' col2im':>16}" for b in backends)
    print(header)
    for b, c, n, k, s, d in CASES:
        pad = d * (k - 1) // 2
        x = rng.standard_normal((b, c, n, n)).astype(np.float32)
        ref = kernels.im2col(x, k, s, d, pad, backend="numpy")
        row = f"{f'{b}x{c}x{n}x{n} k{k} s{s} d{d}':<28}"
        for be in backends:
            assert np.array_equal(kernels.im2col(x, k, s, d, pad, backend=be), ref)
            t_fwd = bench(lambda: kernels.im2col(x, k, s, d, pad, backend=be), args.repeat)
            t_bwd = bench(lambda: kernels.col2im(ref, x.shape, k, s, d, pad, backend=be), args.repeat)
            row += f"{t_fwd * 1e3:>13.2f} ms{t_bwd * 1e3:>13.2f} ms"
        print(row)

    x = Tensor(rng.standard_normal((3, 64, 64, 64)).astype(np.float32), requires_grad=True)
    w = Tensor(rng.standard_normal((16, 64, 3, 3)).astype(np.float32) * 0.02, requires_grad=True)

    def step():
        y = conv2d(x, w, padding=2, dilation=2)
        y.sum().backward()

    print(f"conv2d fwd+bwd 3x64x64x64 -> 16 ({kernels.BACKEND}): {bench(step, args.repeat) * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
