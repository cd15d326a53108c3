"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Shapes follow the first two convolution blocks of the default network at 180 px.
"""

import argparse
import timeit

import numpy as np

from leafnet.kernels import available_backends

CASES = [
    ("conv 3->16 @180", (8, 180, 180, 3), (3, 3, 3, 16)),
    ("conv 16->32 @90", (8, 90, 90, 16), (3, 3, 16, 32)),
    ("conv 32->64 @45", (8, 45, 45, 32), (3, 3, 32, 64)),
]


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'kernel':<34}" + "".join(f"{name:>12}" for name in backends))
    for label, xs, ws in CASES:
        x = rng.normal(size=xs).astype(np.float32)
        w = rng.normal(size=ws).astype(np.float32)
        b = np.zeros(ws[-1], np.float32)
        g = rng.normal(size=xs[:3] + ws[-1:]).astype(np.float32)
        rows = {
            f"{label} fwd": lambda k: k.conv2d_forward(x, w, b),
            f"{label} fwd direct": lambda k: k.conv2d_forward_direct(x, w, b),
            f"{label} bwd": lambda k: k.conv2d_backward(x, w, g, True),
        }
        for name, fn in rows.items():
            times = [best(lambda k=k: fn(k), args.repeat) for k in backends.values()]
            print(f"{name:<34}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times))
        y = rng.normal(size=xs[:3] + ws[-1:]).astype(np.float32)
        h, wd = y.shape[1] // 2, y.shape[2] // 2
        gp = rng.normal(size=(y.shape[0], h, wd, y.shape[3])).astype(np.float32)
        times, btimes = [], []
        for k in backends.values():
            _, mask = k.maxpool_forward(y)
            times.append(best(lambda k=k: k.maxpool_forward(y), args.repeat))
            btimes.append(best(lambda k=k, m=mask: k.maxpool_backward(m, gp, y.shape[1], y.shape[2]), args.repeat))
        print(f"{f'maxpool {xs[1]}px x{ws[-1]} fwd':<34}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times))
        print(f"{f'maxpool {xs[1]}px x{ws[-1]} bwd':<34}" + "".join(f"{t * 1e3:>10.1f}ms" for t in btimes))


if __name__ == "__main__":
    main()
