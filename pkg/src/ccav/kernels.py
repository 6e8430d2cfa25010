"""Hot loops with a numba implementation and a pure-numpy twin.

The public functions dispatch on ``_accel.USE_NUMBA``; both variants are
importable as ``*_nb`` / ``*_np`` so tests and benchmarks can compare them.
"""
import math

import numpy as np

from . import _accel
from ._accel import njit

BUDGET_TOL = 1e-9
CHUNK = 1 << 16


# ---------------------------------------------------------------------------
# AVs per channel: closed-form search


@njit(cache=True)
def _n_one(p, q, L, cap):
    if p <= 0.0:
        n = L * math.floor((1.0 + BUDGET_TOL) / q)
        return min(cap, n)
    best = 0
    J = int(math.floor((1.0 + BUDGET_TOL) / q))
    for j in range(1, J + 1):
        room = (1.0 - j * q) / p
        if room < 0.0:
            break
        m = min(j * L, int(math.floor(room)))
        if m > best:
            best = m
        if best >= cap:
            break
    n = min(best, cap)
    while n < cap and (n + 1) * p + math.ceil((n + 1) / L) * q <= 1.0 + BUDGET_TOL:
        n += 1
    while n > 0 and n * p + math.ceil(n / L) * q > 1.0 + BUDGET_TOL:
        n -= 1
    return n


@njit(cache=True)
def n_controllable_vec_nb(p, q, L, cap):
    out = np.empty(p.shape[0], dtype=np.int64)
    for i in range(p.shape[0]):
        out[i] = _n_one(p[i], q, L, cap)
    return out


def _fits_np(n, p, q, L):
    return n * p + np.ceil(n / L) * q <= 1.0 + BUDGET_TOL


def n_controllable_vec_np(p, q, L, cap):
    p = np.asarray(p, dtype=float)
    J = int(math.floor((1.0 + BUDGET_TOL) / q))
    j = np.arange(1, J + 1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        room = (1.0 - j[None, :] * q) / p[:, None]
    room = np.where(room < 0, -1.0, room)
    m = np.minimum(j[None, :] * L, np.floor(np.nan_to_num(room, posinf=np.inf)))
    n = np.minimum(np.maximum(m.max(axis=1), 0), cap)
    n = np.where(p <= 0.0, min(cap, L * J), n).astype(np.int64)
    for _ in range(4):
        up = (n < cap) & _fits_np(n + 1, p, q, L)
        down = (n > 0) & ~_fits_np(n, p, q, L)
        if not (up.any() or down.any()):
            break
        n = n + up - down
    return n


def n_controllable_vec(p, q, L, cap):
    p = np.ascontiguousarray(p, dtype=np.float64)
    if _accel.USE_NUMBA:
        return n_controllable_vec_nb(p, float(q), int(L), int(cap))
    return n_controllable_vec_np(p, q, L, cap)


# ---------------------------------------------------------------------------
# AVs per channel: brute-force slot filling


@njit(cache=True)
def slot_pack_nb(p, q, L, cap):
    out = np.empty(p.shape[0], dtype=np.int64)
    for i in range(p.shape[0]):
        pilots = 0.0
        groups = 0
        n = 0
        while n < cap[i]:
            nxt_pilots = pilots + p[i]
            nxt_groups = groups + 1 if n % L[i] == 0 else groups
            if nxt_pilots + nxt_groups * q[i] > 1.0 + BUDGET_TOL:
                break
            pilots = nxt_pilots
            groups = nxt_groups
            n += 1
        out[i] = n
    return out


def slot_pack_np(p, q, L, cap):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    L = np.asarray(L, dtype=np.int64)
    cap = np.asarray(cap, dtype=np.int64)
    n = np.zeros(p.shape, dtype=np.int64)
    pilots = np.zeros(p.shape)
    groups = np.zeros(p.shape, dtype=np.int64)
    live = cap > 0
    while live.any():
        nxt_pilots = pilots + p
        nxt_groups = groups + (n % L == 0)
        ok = live & (nxt_pilots + nxt_groups * q <= 1.0 + BUDGET_TOL)
        pilots = np.where(ok, nxt_pilots, pilots)
        groups = np.where(ok, nxt_groups, groups)
        n = n + ok
        live = ok & (n < cap)
    return n


def slot_pack(p, q, L, cap):
    """Admit AVs one at a time onto a unit timeline until pilots plus message groups overflow it."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(np.broadcast_to(q, p.shape), dtype=np.float64)
    L = np.ascontiguousarray(np.broadcast_to(L, p.shape), dtype=np.int64)
    cap = np.ascontiguousarray(np.broadcast_to(cap, p.shape), dtype=np.int64)
    if _accel.USE_NUMBA:
        return slot_pack_nb(p, q, L, cap)
    return slot_pack_np(p, q, L, cap)


# ---------------------------------------------------------------------------
# coverage sampled every tick along a route
#
# A route is a list of straight pieces: start (x0, y0), unit direction
# (ux, uy), speed, and start time. Tick k samples time (k + 0.5) * dt.


@njit(cache=True)
def tick_coverage_nb(x0, y0, ux, uy, speed, t0, r2, bx, by, n_ticks, dt):
    covered = 0
    i = 0
    n_pieces = x0.shape[0]
    n_bs = bx.shape[0]
    for k in range(n_ticks):
        t = (k + 0.5) * dt
        while i + 1 < n_pieces and t >= t0[i + 1]:
            i += 1
        s = (t - t0[i]) * speed[i]
        x = x0[i] + ux[i] * s
        y = y0[i] + uy[i] * s
        for b in range(n_bs):
            dx = x - bx[b]
            dy = y - by[b]
            if dx * dx + dy * dy <= r2[i, b]:
                covered += 1
                break
    return covered


def _tick_positions(x0, y0, ux, uy, speed, t0, k0, k1, dt):
    t = (np.arange(k0, k1) + 0.5) * dt
    i = np.searchsorted(t0, t, side="right") - 1
    i = np.clip(i, 0, len(t0) - 1)
    s = (t - t0[i]) * speed[i]
    return x0[i] + ux[i] * s, y0[i] + uy[i] * s, i


def tick_coverage_np(x0, y0, ux, uy, speed, t0, r2, bx, by, n_ticks, dt):
    covered = 0
    for k0 in range(0, n_ticks, CHUNK):
        k1 = min(n_ticks, k0 + CHUNK)
        x, y, i = _tick_positions(x0, y0, ux, uy, speed, t0, k0, k1, dt)
        d2 = (x[:, None] - bx[None, :]) ** 2 + (y[:, None] - by[None, :]) ** 2
        covered += int(np.any(d2 <= r2[i], axis=1).sum())
    return covered


@njit(cache=True)
def tick_coverage_realized_nb(x0, y0, ux, uy, speed, t0, margin, bx, by, k0, dt, z, sigma, intercept, slope, min_d):
    covered = 0
    i = 0
    n_pieces = x0.shape[0]
    n_bs = bx.shape[0]
    for r in range(z.shape[0]):
        t = (k0 + r + 0.5) * dt
        while i + 1 < n_pieces and t >= t0[i + 1]:
            i += 1
        s = (t - t0[i]) * speed[i]
        x = x0[i] + ux[i] * s
        y = y0[i] + uy[i] * s
        for b in range(n_bs):
            d = math.sqrt((x - bx[b]) ** 2 + (y - by[b]) ** 2)
            pl = intercept + slope * math.log10(max(d, min_d))
            if pl <= margin[i, b] + sigma * z[r, b]:
                covered += 1
                break
    return covered


def tick_coverage_realized_np(x0, y0, ux, uy, speed, t0, margin, bx, by, k0, dt, z, sigma, intercept, slope, min_d):
    x, y, i = _tick_positions(x0, y0, ux, uy, speed, t0, k0, k0 + z.shape[0], dt)
    d = np.hypot(x[:, None] - bx[None, :], y[:, None] - by[None, :])
    pl = intercept + slope * np.log10(np.maximum(d, min_d))
    return int(np.any(pl <= margin[i] + sigma * z, axis=1).sum())


def tick_coverage(*args):
    if _accel.USE_NUMBA:
        return tick_coverage_nb(*args)
    return tick_coverage_np(*args)


def tick_coverage_realized(*args):
    if _accel.USE_NUMBA:
        return tick_coverage_realized_nb(*args)
    return tick_coverage_realized_np(*args)
