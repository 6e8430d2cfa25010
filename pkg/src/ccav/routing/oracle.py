"""Brute-force reference for communication-constrained shortest paths.

Builds one graph over the union of all cell coverage (a road stretch is usable
when a single cell covers it) and runs a plain heap Dijkstra. Shares no code
with the two-layer router beyond the cell data itself.
"""
from __future__ import annotations

import heapq
from typing import Sequence

from ..net import EffectiveSpeedMap, RoadNetwork
from ..radio import GammaRateCell
from .types import NoRoute, Route, build_route


def _key(network: RoadNetwork, seg: int, off: float):
    s = network.segments[seg]
    if off == 0.0:
        return ("I", s.endpoints[0])
    if off == s.length:
        return ("I", s.endpoints[1])
    return ("S", seg, off)


def covered_union_graph(network: RoadNetwork, cells: Sequence[GammaRateCell], esm: EffectiveSpeedMap):
    """Adjacency ``key -> [(time, key, (seg, off_from, off_to))]`` over covered stretches."""
    per_seg: dict[int, list[tuple[float, float]]] = {}
    nodes = set()
    for c in cells:
        for n in c.covered_intersections:
            nodes.add(("I", n))
        for s, ivs in c.intervals.items():
            per_seg.setdefault(s, []).extend(ivs)
    adj: dict[tuple, list] = {k: [] for k in nodes}
    for s, ivs in per_seg.items():
        cuts = sorted({x for iv in ivs for x in iv})
        for a, b in zip(cuts, cuts[1:]):
            if not any(lo <= a and b <= hi for lo, hi in ivs):
                continue
            ka, kb = _key(network, s, a), _key(network, s, b)
            t = (b - a) / esm[s]
            adj.setdefault(ka, []).append((t, kb, (s, a, b)))
            adj.setdefault(kb, []).append((t, ka, (s, b, a)))
        for x in cuts:
            adj.setdefault(_key(network, s, x), [])
    return adj


def oracle_constrained_shortest(
    network: RoadNetwork,
    cells: Sequence[GammaRateCell],
    esm: EffectiveSpeedMap,
    src: int,
    dst: int,
    gamma: float | None = None,
) -> Route:
    adj = covered_union_graph(network, cells, esm)
    start, goal = ("I", src), ("I", dst)
    if start not in adj or goal not in adj:
        raise NoRoute("endpoint outside the covered region")
    dist = {start: 0.0}
    prev: dict = {}
    heap = [(0.0, start)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == goal:
            break
        for t, v, piece in adj[u]:
            nd = d + t
            if nd < dist.get(v, float("inf")):
                dist[v] = nd
                prev[v] = (u, piece)
                heapq.heappush(heap, (nd, v))
    if goal not in done:
        raise NoRoute("destination not reachable through covered road")
    pieces = []
    k = goal
    while k != start:
        k, piece = prev[k]
        pieces.append(piece)
    pieces.reverse()
    g = gamma if gamma is not None else (cells[0].gamma if cells else None)
    return build_route(network, esm, src, dst, pieces, "oracle", gamma_used=g)
