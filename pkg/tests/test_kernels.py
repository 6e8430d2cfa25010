import numpy as np
import pytest

from ccav import _accel, kernels
from ccav.traffic import TddConfig


def test_backend_reports():
    assert _accel.backend() in ("numba", "numpy")
    if _accel.DISABLED:
        assert _accel.backend() == "numpy"


@pytest.mark.parametrize("seed", range(5))
def test_n_controllable_parity(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.0, 0.3, 5000)
    p[:10] = 0.0
    for q, L, cap in ((0.25, 10, 100), (float(rng.uniform(0.01, 0.9)), int(rng.integers(1, 20)), 60)):
        a = kernels.n_controllable_vec_nb(p, q, L, cap)
        b = kernels.n_controllable_vec_np(p, q, L, cap)
        assert np.array_equal(a, b)


@pytest.mark.parametrize("seed", range(5))
def test_slot_pack_parity(seed):
    rng = np.random.default_rng(seed)
    m = 2000
    p = rng.uniform(0.0, 0.05, m)
    q = rng.uniform(0.05, 0.9, m)
    L = rng.integers(1, 20, m)
    cap = np.full(m, 300, dtype=np.int64)
    assert np.array_equal(kernels.slot_pack_nb(p, q, L, cap), kernels.slot_pack_np(p, q, L, cap))


def test_slot_pack_matches_integer_search():
    tdd = TddConfig()
    v = np.linspace(0.0, 300.0, 3001)
    p = tdd.pilot_fraction(v)
    n = len(v)
    packed = kernels.slot_pack(p, np.full(n, tdd.load), np.full(n, tdd.L), np.full(n, tdd.cap))
    assert np.array_equal(packed, kernels.n_controllable_vec(p, tdd.load, tdd.L, tdd.cap))


def _trip(rng, n=12, k=4):
    x0 = np.cumsum(rng.uniform(100, 250, n))
    y0 = np.cumsum(rng.uniform(0, 100, n))
    ang = rng.uniform(0, 2 * np.pi, n)
    ux, uy = np.cos(ang), np.sin(ang)
    speed = rng.choice([10.0, 20.0, 30.0], n)
    t0 = np.concatenate([[0.0], np.cumsum(200.0 / speed)[:-1]])
    T = float(t0[-1] + 200.0 / speed[-1])
    bx, by = rng.uniform(0, 2000, k), rng.uniform(0, 1000, k)
    ticks = int(np.ceil(T / 1e-3))
    return x0, y0, ux, uy, speed, t0, bx, by, ticks, T / ticks


@pytest.mark.parametrize("seed", range(4))
def test_tick_coverage_parity(seed):
    rng = np.random.default_rng(seed)
    x0, y0, ux, uy, speed, t0, bx, by, ticks, dt = _trip(rng)
    r2 = rng.uniform(200.0, 900.0, (len(x0), len(bx))) ** 2
    r2[0, 0] = -1.0  # station that covers nothing at this speed
    args = (x0, y0, ux, uy, speed, t0, r2, bx, by, ticks, dt)
    a, b = kernels.tick_coverage_nb(*args), kernels.tick_coverage_np(*args)
    assert a == b
    assert 0 <= a <= ticks


@pytest.mark.parametrize("seed", range(4))
def test_tick_coverage_realized_parity(seed):
    rng = np.random.default_rng(seed)
    x0, y0, ux, uy, speed, t0, bx, by, ticks, dt = _trip(rng)
    k = min(ticks, 5000)
    z = rng.standard_normal((k, len(bx)))
    margin = rng.uniform(110.0, 140.0, (len(x0), len(bx)))
    for k0 in (0, 777):
        args = (x0, y0, ux, uy, speed, t0, margin, bx, by, k0, dt, z, 8.0, 33.46, 35.74, 1.0)
        assert kernels.tick_coverage_realized_nb(*args) == kernels.tick_coverage_realized_np(*args)
