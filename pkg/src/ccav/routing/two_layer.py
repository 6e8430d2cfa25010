"""Two-layer communication-constrained routing.

Top layer: gamma-rate cells joined when they share a core node. Routing
enumerates simple top paths breadth-first, computes intra-cell shortest
times between consecutive core-node sets, then runs a dynamic program along
each top path and keeps the fastest.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from ..net import EffectiveSpeedMap, RoadNetwork
from ..radio import CoreNode, GammaRateCell, cell_connectivity, intersection_key, point_key
from .types import DestinationUncovered, NoRoute, Route, SourceUncovered, build_route

logger = logging.getLogger(__name__)

DEFAULT_MAX_PATHS = 10_000
DEFAULT_MAX_EXPANSIONS = 2_000_000
TIE_RTOL = 1e-9  # top paths within this relative margin of the incumbent count as ties


@dataclass(frozen=True)
class TopLayerGraph:
    nodes: tuple[int, ...]
    edges: dict = field(compare=False)  # (a, b) with a < b -> tuple[CoreNode]
    cells: dict = field(compare=False, repr=False)

    def neighbors(self, cell_id: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == cell_id:
                out.append(b)
            elif b == cell_id:
                out.append(a)
        return sorted(out)

    def core_nodes(self, a: int, b: int) -> tuple[CoreNode, ...]:
        return self.edges.get((min(a, b), max(a, b)), ())

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return {n: sorted(v) for n, v in adj.items()}


def build_top_layer(cells: Iterable[GammaRateCell]) -> TopLayerGraph:
    live = sorted((c for c in cells if not c.is_empty), key=lambda c: c.bs)
    edges = {}
    for i, a in enumerate(live):
        for b in live[i + 1 :]:
            cores = cell_connectivity(a, b)
            if cores:
                edges[(a.bs, b.bs)] = cores
    return TopLayerGraph(tuple(c.bs for c in live), edges, {c.bs: c for c in live})


def enumerate_top_paths(
    g: TopLayerGraph,
    src_cell: int,
    dst_cell: int,
    max_paths: int = DEFAULT_MAX_PATHS,
    max_expansions: int = DEFAULT_MAX_EXPANSIONS,
) -> list[tuple[int, ...]]:
    """All simple paths, fewest hops first; truncated at ``max_paths``."""
    if src_cell not in g.cells or dst_cell not in g.cells:
        raise KeyError("source and destination cells must belong to the top-layer graph")
    if src_cell == dst_cell:
        return [(src_cell,)]
    adj = g.adjacency()
    out: list[tuple[int, ...]] = []
    queue = deque([(src_cell,)])
    expansions = 0
    while queue:
        path = queue.popleft()
        for nxt in adj[path[-1]]:
            if nxt in path:
                continue
            new = path + (nxt,)
            if nxt == dst_cell:
                out.append(new)
                if len(out) >= max_paths:
                    warnings.warn(f"top-layer path enumeration truncated at {max_paths} paths", stacklevel=2)
                    return out
            else:
                queue.append(new)
                expansions += 1
        if expansions > max_expansions:
            warnings.warn(f"top-layer path enumeration stopped after {max_expansions} expansions", stacklevel=2)
            break
    return out


# ---------------------------------------------------------------------------
# intra-cell graphs


class KeyGraph:
    """Weighted graph over road key points restricted to one cell."""

    def __init__(self, network: RoadNetwork, esm: EffectiveSpeedMap, cell: GammaRateCell, extra=None):
        extra = extra or {}
        keys: list[tuple] = []
        index: dict[tuple, int] = {}

        def node(key):
            k = index.get(key)
            if k is None:
                k = index[key] = len(keys)
                keys.append(key)
            return k

        for n in sorted(cell.covered_intersections):
            node(intersection_key(n))
        rows, cols, wts = [], [], []
        info = {}
        for s in sorted(cell.intervals):
            speed = esm[s]
            extra_s = extra.get(s, ())
            for lo, hi in cell.intervals[s]:
                pts = sorted({lo, hi, *(o for o in extra_s if lo <= o <= hi)})
                ids = [node(point_key(network, s, o)) for o in pts]
                for (oa, ia), (ob, ib) in zip(zip(pts, ids), zip(pts[1:], ids[1:])):
                    w = (ob - oa) / speed
                    rows += [ia, ib]
                    cols += [ib, ia]
                    wts += [w, w]
                    info[(ia, ib)] = (s, oa, ob)
                    info[(ib, ia)] = (s, ob, oa)
        n = len(keys)
        self.keys = keys
        self.index = index
        self.info = info
        self.matrix = sparse.csr_matrix((wts, (rows, cols)), shape=(n, n))
        self._rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __contains__(self, key) -> bool:
        return key in self.index

    def prepare(self, sources: Sequence[tuple]):
        todo = sorted({self.index[k] for k in sources if k in self.index} - set(self._rows))
        if not todo:
            return
        dist, pred = dijkstra(self.matrix, directed=True, indices=todo, return_predecessors=True)
        for r, i in enumerate(todo):
            self._rows[i] = (dist[r], pred[r])

    def row(self, key) -> tuple[np.ndarray, np.ndarray]:
        i = self.index[key]
        if i not in self._rows:
            self.prepare([key])
        return self._rows[i]

    def times(self, key, targets: Sequence[tuple]) -> np.ndarray:
        dist, _ = self.row(key)
        return np.array([dist[self.index[t]] if t in self.index else np.inf for t in targets])

    def pieces(self, src_key, dst_key) -> list[tuple[int, float, float]]:
        _, pred = self.row(src_key)
        i, j = self.index[src_key], self.index[dst_key]
        chain = [j]
        while chain[-1] != i:
            p = pred[chain[-1]]
            if p < 0:
                raise NoRoute(f"{dst_key} unreachable from {src_key} inside the cell")
            chain.append(int(p))
        chain.reverse()
        return [self.info[(a, b)] for a, b in zip(chain, chain[1:])]


def _extra_offsets(nodes: Iterable) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    for k in nodes:
        key = k.key if isinstance(k, CoreNode) else k
        if key[0] == "S":
            out.setdefault(key[1], []).append(key[2])
    return out


def intra_cell_times(
    cell: GammaRateCell,
    esm: EffectiveSpeedMap,
    from_nodes: Sequence,
    to_nodes: Sequence,
):
    """Shortest times between core nodes inside one cell.

    Returns ``(matrix, paths)``: ``matrix[i, j]`` is +inf when unreachable;
    ``paths[(i, j)]`` lists ``(segment, entry, exit)`` pieces for finite entries.
    """
    keys_from = [k.key if isinstance(k, CoreNode) else k for k in from_nodes]
    keys_to = [k.key if isinstance(k, CoreNode) else k for k in to_nodes]
    graph = KeyGraph(cell.network, esm, cell, _extra_offsets(keys_from + keys_to))
    mat = np.full((len(keys_from), len(keys_to)), np.inf)
    paths = {}
    graph.prepare([k for k in keys_from if k in graph])
    for i, a in enumerate(keys_from):
        if a not in graph:
            continue
        mat[i] = graph.times(a, keys_to)
        for j, b in enumerate(keys_to):
            if np.isfinite(mat[i, j]):
                paths[(i, j)] = graph.pieces(a, b)
    return mat, paths


# ---------------------------------------------------------------------------
# routing


@dataclass
class _Prefix:
    path: tuple[int, ...]
    keys: list
    t: np.ndarray
    parent: "_Prefix | None" = None
    arg: np.ndarray | None = None


class _Planner:
    """Best-first search over simple top paths with the stitching DP.

    Each prefix carries the best arrival time at every entry core node of its
    last cell, so the DP is shared between paths with a common prefix.
    Prefixes are expanded in order of arrival time plus a lower bound on the
    time still needed, so the first complete path taken off the queue is the
    fastest. The bound is the time-to-go when cells may be revisited: a
    Dijkstra over core nodes whose edges are intra-cell leg times. Dropping
    the no-revisit rule can only make it smaller, so it never overestimates.
    """

    def __init__(self, network, esm, top: TopLayerGraph, src_key, dst_key):
        self.network = network
        self.esm = esm
        self.top = top
        self.src_key = src_key
        self.dst_key = dst_key
        self.adj = top.adjacency()
        self._graphs: dict[int, KeyGraph] = {}
        self._keys: dict[tuple[int, int], list[tuple]] = {}
        self._legs: dict[tuple, np.ndarray] = {}
        self._to_go: dict[tuple, float] | None = None
        self.stats = {"completed": 0, "pruned": 0, "expanded": 0, "truncated": False}

    def portal_keys(self, a: int, b: int) -> list[tuple]:
        k = (a, b)
        if k not in self._keys:
            self._keys[k] = [c.key for c in self.top.core_nodes(a, b)]
        return self._keys[k]

    def graph(self, cell_id: int) -> KeyGraph:
        g = self._graphs.get(cell_id)
        if g is None:
            cores = []
            for nb in self.adj[cell_id]:
                cores.extend(self.top.core_nodes(cell_id, nb))
            g = KeyGraph(self.network, self.esm, self.top.cells[cell_id], _extra_offsets(cores))
            portals = [c.key for c in cores] + [self.src_key, self.dst_key]
            g.prepare([k for k in portals if k in g])
            self._graphs[cell_id] = g
        return g

    def _entries(self, prev, cell):
        return [self.src_key] if prev is None else self.portal_keys(prev, cell)

    def _exits(self, cell, nxt):
        return [self.dst_key] if nxt is None else self.portal_keys(cell, nxt)

    def leg(self, prev, cell, nxt) -> np.ndarray:
        """Time matrix inside ``cell`` from its entry core nodes to its exit core nodes."""
        k = (prev, cell, nxt)
        m = self._legs.get(k)
        if m is None:
            g = self.graph(cell)
            exits = self._exits(cell, nxt)
            m = np.vstack([g.times(e, exits) for e in self._entries(prev, cell)])
            self._legs[k] = m
        return m

    def _relaxed_to_go(self) -> dict[tuple, float]:
        index: dict[tuple, int] = {}
        edges: dict[tuple[int, int], float] = {}
        for c in self.top.nodes:
            g = self.graph(c)
            ks = [k for nb in self.adj[c] for k in self.portal_keys(c, nb)]
            ks += [k for k in (self.src_key, self.dst_key) if k in g]
            ks = list(dict.fromkeys(ks))
            ids = [index.setdefault(k, len(index)) for k in ks]
            for a, ia in zip(ks, ids):
                d = g.times(a, ks)
                for ib, w in zip(ids, d):
                    if ib != ia and w < edges.get((ib, ia), np.inf):
                        edges[(ib, ia)] = float(w)  # reversed: distances *to* dst
        if self.dst_key not in index:
            return {}
        n = len(index)
        ij = np.array(list(edges.keys()), dtype=np.int64).reshape(-1, 2)
        m = sparse.csr_matrix((np.fromiter(edges.values(), float, len(edges)), (ij[:, 0], ij[:, 1])), shape=(n, n))
        dist = dijkstra(m, directed=True, indices=index[self.dst_key])
        return {k: float(dist[i]) for k, i in index.items()}

    def bound(self, keys) -> np.ndarray:
        if self._to_go is None:
            self._to_go = self._relaxed_to_go()
        return np.array([self._to_go.get(k, np.inf) for k in keys])

    def search(self, src_cells, dst_cells, max_paths: int, max_expansions: int = DEFAULT_MAX_EXPANSIONS):
        dst_set = set(dst_cells)
        heap: list = []
        tie = itertools.count()
        best = None
        for a in src_cells:
            t = np.zeros(1)
            f = float((t + self.bound([self.src_key])).min())
            if np.isfinite(f):
                heapq.heappush(heap, (f, next(tie), _Prefix((a,), [self.src_key], t), None))
        while heap:
            f, _, node, done = heapq.heappop(heap)
            if done is not None:
                return f, node, done
            incumbent = best[0] * (1.0 - TIE_RTOL) if best else np.inf
            if not f < incumbent:
                self.stats["pruned"] += 1
                continue
            cell = node.path[-1]
            prev = node.path[-2] if len(node.path) > 1 else None
            if cell in dst_set:
                final = node.t + self.leg(prev, cell, None)[:, 0]
                k = int(np.argmin(final))
                self.stats["completed"] += 1
                if final[k] < incumbent:
                    best = (float(final[k]), node, k)
                    incumbent = best[0] * (1.0 - TIE_RTOL)
                    heapq.heappush(heap, (best[0], next(tie), node, k))
                if self.stats["completed"] >= max_paths:
                    self.stats["truncated"] = True
                    warnings.warn(f"top-layer path search truncated at {max_paths} paths", stacklevel=3)
                    return best
            for nxt in self.adj[cell]:
                if nxt in node.path:
                    continue
                total = node.t[:, None] + self.leg(prev, cell, nxt)
                arg = np.argmin(total, axis=0)
                t = total[arg, np.arange(total.shape[1])]
                exits = self.portal_keys(cell, nxt)
                f = float((t + self.bound(exits)).min())
                if not f < incumbent:
                    self.stats["pruned"] += 1
                    continue
                heapq.heappush(heap, (f, next(tie), _Prefix(node.path + (nxt,), exits, t, node, arg), None))
                self.stats["expanded"] += 1
            if self.stats["expanded"] > max_expansions:
                self.stats["truncated"] = True
                warnings.warn(f"top-layer path search stopped after {max_expansions} expansions", stacklevel=3)
                return best
        return best

    def reconstruct(self, node: _Prefix, final_index: int):
        legs = []
        exit_key = self.dst_key
        idx = final_index
        while node is not None:
            entry_key = node.keys[idx]
            legs.append((node.path[-1], entry_key, exit_key))
            if node.parent is not None:
                idx = int(node.arg[idx])
            exit_key = entry_key
            node = node.parent
        legs.reverse()
        pieces = []
        for cell_id, a, b in legs:
            if a != b:
                pieces.extend(self.graph(cell_id).pieces(a, b))
        return pieces


def _route_once(network, cells, esm, src, dst, gamma, max_paths) -> Route:
    src_key, dst_key = intersection_key(src), intersection_key(dst)
    live = [c for c in cells if not c.is_empty]
    src_cells = sorted(c.bs for c in live if src in c.covered_intersections)
    dst_cells = sorted(c.bs for c in live if dst in c.covered_intersections)
    if not src_cells:
        raise SourceUncovered(f"intersection {src} is outside every {gamma}-rate cell")
    if not dst_cells:
        raise DestinationUncovered(f"intersection {dst} is outside every {gamma}-rate cell")
    if src == dst:
        return build_route(network, esm, src, dst, [], "two-layer", gamma_used=gamma, top_path=(src_cells[0],))
    top = build_top_layer(live)
    planner = _Planner(network, esm, top, src_key, dst_key)
    best = planner.search(src_cells, dst_cells, max_paths)
    if best is None:
        raise NoRoute(f"no top-layer path joins the source and destination cells at gamma={gamma}")
    _, node, k = best
    pieces = planner.reconstruct(node, k)
    route = build_route(network, esm, src, dst, pieces, "two-layer", gamma_used=gamma, top_path=node.path)
    route.meta.update(planner.stats)
    return route


def two_layer_route(
    network: RoadNetwork,
    cells: Sequence[GammaRateCell],
    esm: EffectiveSpeedMap,
    src: int,
    dst: int,
    gamma: float | None = None,
    gamma_floor: float = 0.0,
    gamma_step: float = 5.0,
    recompute: Callable[[float], Sequence[GammaRateCell]] | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> Route:
    """Fastest route that stays inside the gamma-rate cells of one top path.

    When no route exists and ``recompute`` is given, gamma is lowered by
    ``gamma_step`` (cells rebuilt through ``recompute(gamma)``) until
    ``gamma_floor``; the returned route records the gamma it used.
    """
    if gamma is None:
        gamma = cells[0].gamma if cells else 0.0
    while True:
        try:
            return _route_once(network, cells, esm, src, dst, gamma, max_paths)
        except NoRoute:
            if recompute is None or gamma <= gamma_floor:
                raise
            if gamma_step <= 0:
                raise ValueError("gamma_step must be positive") from None
            gamma = max(gamma_floor, gamma - gamma_step)
            logger.debug("lowering gamma to %s", gamma)
            cells = recompute(gamma)
