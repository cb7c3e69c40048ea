"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once untimed (JIT warm-up), then ``repeat`` times per
backend; the best time is reported along with a check that both backends
returned identical results.
"""

import argparse
import math
import time

import numpy as np

from asp.kernels import numba_impl, numpy_impl


def _grid(rng, n=120):
    cells = np.zeros((n, n), dtype=np.uint8)
    for _ in range(25):
        r, c = rng.integers(0, n - 10, size=2)
        cells[r:r + 8, c:c + 8] = 254
    cells[cells == 0] = rng.integers(0, 60, size=int((cells == 0).sum()))
    return cells


def cases(rng):
    cells = _grid(rng)
    k = 360
    phis = np.linspace(0, 2 * math.pi, k, endpoint=False)
    xs = 3.0 + 1.2 * np.cos(phis)
    ys = 3.0 + 1.2 * np.sin(phis)
    cos_t = np.cos(phis + math.pi)
    sin_t = np.sin(phis + math.pi)
    yield ("footprint_costs", (cells, 0.0, 0.0, 0.05, xs, ys, cos_t, sin_t, 0.3, 0.25, 254))

    free = cells < 254
    yield ("reachable", (free, 1, 1, free.shape[0] - 2, free.shape[1] - 2))

    a = rng.uniform(0, 0.3, size=(6000, 3))
    b = rng.uniform(0.05, 0.35, size=(6000, 3))
    yield ("count_within", (a, b, 0.02))

    pts = rng.uniform(0, 0.2, size=(3000, 3))
    yield ("local_covariances", (pts, 0.03))


def _same(x, y):
    if isinstance(x, tuple):
        return all(_same(p, q) for p, q in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    opts = ap.parse_args()
    rng = np.random.default_rng(opts.seed)
    print(f"{'kernel':<20} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}  same")
    for name, args in cases(rng):
        np_fn = getattr(numpy_impl, name)
        nb_fn = getattr(numba_impl, name)
        nb_fn(*args)
        t_np, out_np = best_time(np_fn, args, opts.repeat)
        t_nb, out_nb = best_time(nb_fn, args, opts.repeat)
        print(f"{name:<20} {t_np * 1e3:>10.2f} {t_nb * 1e3:>10.2f} "
              f"{t_np / max(t_nb, 1e-12):>7.1f}x  {_same(out_np, out_nb)}")


if __name__ == "__main__":
    main()
