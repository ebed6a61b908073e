"""Time each kernel's numba path against its numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

The numba functions are called once before timing so compilation is excluded.
"""
import argparse
import timeit

import numpy as np

from smartbsp import _kernels as K
from smartbsp.grid import SensorGeometry
from smartbsp.spline import clamped_uniform_knots


def cases(rng):
    g = SensorGeometry()
    pts = rng.uniform(-3, 3, (20_000, 2))
    loc = (pts[:, 0], pts[:, 1], *g._kernel_args())
    knots = clamped_uniform_knots(6)
    ts = np.linspace(0, 1, 201)
    x = rng.normal(size=(10, 16, 5, 5))
    w = rng.normal(size=(32, 16, 3, 3))
    b = rng.normal(size=32)
    dout = rng.normal(size=(10, 32, 5, 5))
    n = 230_000
    p, grad = rng.normal(size=n), rng.normal(size=n)

    def adam(fn):
        m, v = np.zeros(n), np.zeros(n)
        return lambda: fn(p, grad, m, v, 1e-3, 0.9, 0.999, 1e-8, 3)

    return [
        ("locate_points 20k", lambda: K.locate_points_numba(*loc), lambda: K.locate_points_numpy(*loc)),
        ("basis 201x2 deriv", lambda: K.basis_numba(knots, 3, ts, 2), lambda: K.basis_numpy(knots, 3, ts, 2)),
        ("conv3x3 forward", lambda: K.conv3x3_forward_numba(x, w, b), lambda: K.conv3x3_forward_numpy(x, w, b)),
        ("conv3x3 backward", lambda: K.conv3x3_backward_numba(x, w, dout),
         lambda: K.conv3x3_backward_numpy(x, w, dout)),
        ("adam 230k params", adam(K.adam_update_numba), adam(K.adam_update_numpy)),
    ]


def best_time(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not K.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'kernel':<22}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, fast, slow in cases(np.random.default_rng(0)):
        fast()
        a, b = best_time(fast, args.repeat), best_time(slow, args.repeat)
        print(f"{name:<22}{a * 1e6:>10.1f}us{b * 1e6:>10.1f}us{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
