"""Compiled vs numpy marginal-entropy kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times ``marginal_entropy`` on joints of growing size, for the keep-masks a
conditional mutual information needs, and checks both backends agree.
"""

import argparse
import math
import timeit

import numpy as np

from featcomp.info_core import _fallback

try:
    from featcomp.info_core import _kernels
except ImportError:  # extension not built
    _kernels = None

# (label, shape): the two-digit task joint, GAN scenarios, then larger tables
SHAPES = [
    ("task joint 2x10x10x10", (2, 10, 10, 10)),
    ("scenario 2x3x4x2", (2, 3, 4, 2)),
    ("scenario 2x4x4x4x4", (2, 4, 4, 4, 4)),
    ("6^5", (6, 6, 6, 6, 6)),
    ("16^4", (16, 16, 16, 16)),
]


def masks(n):
    # H(a,g), H(b,g), H(a,b,g), H(g) for a = var 0, b = var 1, g = the rest
    rest = [1] * (n - 2)
    return [np.array(m, dtype=np.uint8) for m in ([1, 0] + rest, [0, 1] + rest, [1, 1] + rest, [0, 0] + rest)]


def cmi(mod, flat, shape, ms):
    h = [mod.marginal_entropy(flat, shape, m) for m in ms]
    return h[0] + h[1] - h[2] - h[3]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = [("numpy", _fallback)] + ([("cython", _kernels)] if _kernels else [])
    print(f"{'joint':<24}{'cells':>8}" + "".join(f"{name + ' us/CMI':>16}" for name, _ in backends)
          + ("   speedup" if _kernels else ""))
    for label, shape in SHAPES:
        flat = rng.dirichlet(np.ones(math.prod(shape)))
        ms = masks(len(shape))
        values = [cmi(mod, flat, shape, ms) for _, mod in backends]
        assert max(values) - min(values) < 1e-9, values
        times = []
        for _, mod in backends:
            number = max(1, 20000 // math.prod(shape))
            best = min(timeit.repeat(lambda: cmi(mod, flat, shape, ms), number=number, repeat=args.repeat))
            times.append(1e6 * best / number)
        line = f"{label:<24}{math.prod(shape):>8}" + "".join(f"{t:>16.1f}" for t in times)
        if _kernels:
            line += f"{times[0] / times[1]:>9.2f}x"
        print(line)
    if not _kernels:
        print("compiled extension not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
