"""Time the numba kernels against their numpy twins and check they agree.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from ccav import _accel, kernels
from ccav.traffic import TddConfig


def _best(f, args, repeat):
    f(*args)  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = f(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def _cases(rng):
    tdd = TddConfig()
    v = np.linspace(0.01, 60.0, 200_000)
    p = tdd.pilot_fraction(v)
    yield "n_controllable", (kernels.n_controllable_vec_nb, kernels.n_controllable_vec_np), (p, tdd.load, tdd.L, tdd.cap)

    m = 20_000
    p = rng.uniform(0.0, 0.05, m)
    q = rng.uniform(0.05, 0.9, m)
    L = rng.integers(1, 20, m)
    cap = np.full(m, 500, dtype=np.int64)
    yield "slot_pack", (kernels.slot_pack_nb, kernels.slot_pack_np), (p, q, L, cap)

    # a 30-piece corner-to-corner trip, 9 BSs, 1 ms ticks
    n = 30
    x0 = np.cumsum(rng.uniform(100, 250, n))
    y0 = np.cumsum(rng.uniform(0, 100, n))
    ux, uy = np.ones(n), np.zeros(n)
    speed = rng.choice([10.0, 20.0, 30.0], n)
    t0 = np.concatenate([[0.0], np.cumsum(200.0 / speed)[:-1]])
    T = float(t0[-1] + 200.0 / speed[-1])
    bx, by = rng.uniform(0, 2500, 9), rng.uniform(0, 2000, 9)
    r2 = rng.uniform(400.0, 900.0, (n, 9)) ** 2
    ticks = int(np.ceil(T / 1e-3))
    args = (x0, y0, ux, uy, speed, t0, r2, bx, by, ticks, T / ticks)
    yield "tick_coverage", (kernels.tick_coverage_nb, kernels.tick_coverage_np), args

    k = min(ticks, kernels.CHUNK)
    z = rng.standard_normal((k, 9))
    margin = rng.uniform(120.0, 140.0, (n, 9))
    args = (x0, y0, ux, uy, speed, t0, margin, bx, by, 0, T / ticks, z, 8.0, 33.46, 35.74, 1.0)
    yield "tick_coverage_realized", (kernels.tick_coverage_realized_nb, kernels.tick_coverage_realized_np), args


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba not installed; both columns run the numpy kernels")
    rng = np.random.default_rng(a.seed)
    print(f"{'kernel':<24}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}  agree")
    for name, (nb, np_), args in _cases(rng):
        t_nb, o_nb = _best(nb, args, a.repeat)
        t_np, o_np = _best(np_, args, a.repeat)
        same = bool(np.array_equal(np.asarray(o_nb), np.asarray(o_np)))
        print(f"{name:<24}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>10.1f}  {same}")


if __name__ == "__main__":
    main()
