"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Sizes cover the toy fixtures (32x32) and a typical VLM input (224x224).
"""

import argparse
import timeit

import numpy as np

from xadv import _kernels_py

try:
    from xadv import _kernels
except ImportError:
    _kernels = None


def cases(size, rng):
    n = size * size * 3
    delta = rng.uniform(-16 / 255, 16 / 255, n)
    grad = rng.normal(size=n)
    img = np.ascontiguousarray(rng.uniform(size=(size, size, 3)))
    kernel = np.array([0.25, 0.5, 0.25])
    return {
        "sign_step": lambda m: m.sign_step(delta.copy(), grad, 1 / 255, 16 / 255),
        "clip_linf": lambda m: m.clip_linf(delta * 2.0, 16 / 255),
        "blur_separable": lambda m: m.blur_separable(img, kernel),
    }


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--sizes", type=int, nargs="+", default=[32, 224])
    args = p.parse_args()
    backends = [("python", _kernels_py)]
    if _kernels is not None:
        backends.append(("cython", _kernels))
    else:
        print("compiled extension not built; showing numpy only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'size':>6}" + "".join(f"{b:>14}" for b, _ in backends) + f"{'speedup':>10}")
    for size in args.sizes:
        for name, fn in cases(size, rng).items():
            times = []
            for _, mod in backends:
                t = min(timeit.repeat(lambda: fn(mod), number=args.repeat, repeat=3)) / args.repeat
                times.append(t)
            row = f"{name:<16}{size:>6}" + "".join(f"{t * 1e6:>12.1f}us" for t in times)
            if len(times) == 2:
                row += f"{times[0] / times[1]:>9.2f}x"
            print(row)


if __name__ == "__main__":
    main()
