"""Baselines: random greedy walks (with and without coverage) and plain shortest time."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from ..net import EffectiveSpeedMap, RoadNetwork
from ..radio import GammaRateCell
from .types import NoRoute, Route, build_route


def _require_grid(network: RoadNetwork):
    if network.grid is None:
        raise ValueError("greedy routing needs a generated grid network")
    return network.grid


def _hops(grid, a: int, b: int) -> int:
    ia, ja = grid.coords(a)
    ib, jb = grid.coords(b)
    return abs(ia - ib) + abs(ja - jb)


def _piece(network, seg_id, frm):
    seg = network.segments[seg_id]
    if frm == seg.endpoints[0]:
        return (seg_id, 0.0, seg.length)
    return (seg_id, seg.length, 0.0)


def _greedy_walk(network, grid, rng, cur, dst, pieces):
    while cur != dst:
        h = _hops(grid, cur, dst)
        cands = [(s, n) for s, n in network.adjacency[cur] if _hops(grid, n, dst) < h]
        seg, nxt = cands[int(rng.integers(len(cands)))]
        pieces.append(_piece(network, seg, cur))
        cur = nxt
    return cur


def greedy_route_no_cc(network: RoadNetwork, esm: EffectiveSpeedMap, src: int, dst: int, seed: int = 0) -> Route:
    """Random walk that only takes segments bringing it closer to ``dst``."""
    grid = _require_grid(network)
    rng = np.random.default_rng(seed)
    pieces: list = []
    _greedy_walk(network, grid, rng, src, dst, pieces)
    return build_route(network, esm, src, dst, pieces, "greedy")


def covered_segments(network: RoadNetwork, cells: Sequence[GammaRateCell]) -> np.ndarray:
    """Mask of segments whose full length lies in the union of the cells."""
    mask = np.zeros(network.n_segments, dtype=bool)
    per_seg: dict[int, list] = {}
    for c in cells:
        for s in c.covered_segments:
            mask[s] = True
        for s, ivs in c.intervals.items():
            if s not in c.covered_segments:
                per_seg.setdefault(s, []).extend(ivs)
    for s, ivs in per_seg.items():
        if mask[s]:
            continue
        reach = 0.0
        for lo, hi in sorted(ivs):
            if lo > reach:
                break
            reach = max(reach, hi)
        mask[s] = reach >= network.segments[s].length
    return mask


def default_max_segments(network: RoadNetwork) -> int:
    grid = _require_grid(network)
    return 4 * (grid.avenues + grid.streets)


def greedy_route_cc(
    network: RoadNetwork,
    cells: Sequence[GammaRateCell],
    esm: EffectiveSpeedMap,
    src: int,
    dst: int,
    gamma: float | None = None,
    max_segments: int | None = None,
    seed: int = 0,
) -> Route:
    """Depth-first greedy walk over covered segments, U-turning out of dead ends.

    After ``max_segments`` traversals (or once the reachable covered region is
    exhausted) the walk continues as :func:`greedy_route_no_cc`; the route's
    ``switch_index`` marks that point.
    """
    grid = _require_grid(network)
    if max_segments is None:
        max_segments = default_max_segments(network)
    ok = covered_segments(network, cells)
    rng = np.random.default_rng(seed)
    pieces: list = []
    stack: list[tuple[int, int | None]] = [(src, None)]
    visited = {src}
    cur = src
    switch = None
    uturns = 0
    while cur != dst:
        if len(pieces) >= max_segments:
            switch = len(pieces)
            break
        h = _hops(grid, cur, dst)
        fresh = [(s, n) for s, n in network.adjacency[cur] if ok[s] and n not in visited]
        better = [(s, n) for s, n in fresh if _hops(grid, n, dst) < h]
        if not better and fresh:
            closest = min(_hops(grid, n, dst) for _, n in fresh)
            better = [(s, n) for s, n in fresh if _hops(grid, n, dst) == closest]
        if better:
            seg, nxt = better[int(rng.integers(len(better)))]
            pieces.append(_piece(network, seg, cur))
            stack.append((nxt, seg))
            visited.add(nxt)
            cur = nxt
            continue
        if len(stack) == 1:
            switch = len(pieces)
            break
        _, seg = stack.pop()
        back = stack[-1][0]
        pieces.append(_piece(network, seg, cur))
        uturns += 1
        cur = back
    if cur != dst:
        _greedy_walk(network, grid, rng, cur, dst, pieces)
    route = build_route(network, esm, src, dst, pieces, "greedy-cc", gamma_used=gamma, switch_index=switch)
    route.meta["uturns"] = uturns
    return route


def road_matrix(network: RoadNetwork, esm: EffectiveSpeedMap):
    w = network.seg_len / esm.array
    u, v = network.seg_u, network.seg_w
    n = network.n_intersections
    return sparse.csr_matrix(
        (np.concatenate([w, w]), (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(n, n)
    )


def shortest_time_route(network: RoadNetwork, esm: EffectiveSpeedMap, src: int, dst: int) -> Route:
    """Unconstrained minimum-time route (Dijkstra over the whole road graph)."""
    dist, pred = dijkstra(road_matrix(network, esm), directed=True, indices=src, return_predecessors=True)
    if not np.isfinite(dist[dst]):
        raise NoRoute(f"intersection {dst} unreachable from {src}")
    chain = [dst]
    while chain[-1] != src:
        chain.append(int(pred[chain[-1]]))
    chain.reverse()
    lookup = {}
    for s in network.segments:
        lookup[s.endpoints] = s.id
        lookup[s.endpoints[::-1]] = s.id
    pieces = [_piece(network, lookup[(a, b)], a) for a, b in zip(chain, chain[1:])]
    return build_route(network, esm, src, dst, pieces, "shortest-time")
