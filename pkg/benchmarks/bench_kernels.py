"""Compare the compiled and numpy stencil kernels.

Usage::

    python benchmarks/bench_kernels.py [N] [repeats]

Prints one line per kernel with the best wall time of each backend, the
speedup and the largest difference between the two outputs.
"""
import sys
import timeit

import numpy as np

from perfhom.numerics import _pykernels, kernels

try:
    from perfhom.numerics import _ckernels
except ImportError:  # the extension is optional
    _ckernels = None


def main(N: int = 128, repeats: int = 5) -> None:
    if _ckernels is None:
        print("compiled kernels are not built; nothing to compare")
        return
    rng = np.random.default_rng(0)
    h = 1.0 / N
    u = rng.standard_normal((N, N, N))
    v = [rng.standard_normal((N, N, N)) for _ in range(3)]
    cases = {
        "laplacian3": lambda impl: kernels.laplacian(u, h, impl),
        "backward_diff": lambda impl: kernels.backward_diff(u, 1, h, impl),
        "forward_diff": lambda impl: kernels.forward_diff(u, 2, h, impl),
        "divergence3": lambda impl: kernels.divergence(v, h, impl),
    }
    print(f"grid {N}^3, best of {repeats}")
    print(f"{'kernel':<15}{'cython [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}{'max diff':>11}")
    for name, fn in cases.items():
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=repeats))
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=repeats))
        diff = float(np.max(np.abs(fn(_ckernels) - fn(_pykernels))))
        print(f"{name:<15}{1e3 * tc:>12.2f}{1e3 * tp:>12.2f}{tp / tc:>9.2f}{diff:>11.1e}")


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:3]]
    main(*args)
