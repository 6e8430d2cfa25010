"""Road network model, Manhattan grid generator and effective speed map."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Point",
    "Intersection",
    "Segment",
    "GridSpec",
    "RoadNetwork",
    "EffectiveSpeedMap",
    "generate_grid",
    "assign_esm",
    "edge_travel_time",
    "split_segment",
    "network_to_dict",
    "network_from_dict",
]


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Intersection:
    id: int
    position: Point


@dataclass(frozen=True)
class Segment:
    id: int
    endpoints: tuple[int, int]
    length: float
    midpoint: Point

    def other(self, node: int) -> int:
        u, w = self.endpoints
        if node == u:
            return w
        if node == w:
            return u
        raise ValueError(f"intersection {node} is not an endpoint of segment {self.id}")


@dataclass(frozen=True)
class GridSpec:
    """Lattice metadata kept by generated grids (needed by the greedy baselines)."""

    avenues: int
    streets: int
    block_length: float
    block_width: float

    def coords(self, node: int) -> tuple[int, int]:
        return node % self.avenues, node // self.avenues

    def node(self, i: int, j: int) -> int:
        return j * self.avenues + i


@dataclass(frozen=True)
class RoadNetwork:
    """Undirected road graph. Intersection and segment ids equal their index."""

    intersections: tuple[Intersection, ...]
    segments: tuple[Segment, ...]
    base_stations: tuple[Any, ...] = ()
    grid: GridSpec | None = None
    node_xy: np.ndarray = field(init=False, repr=False, compare=False)
    seg_u: np.ndarray = field(init=False, repr=False, compare=False)
    seg_w: np.ndarray = field(init=False, repr=False, compare=False)
    seg_len: np.ndarray = field(init=False, repr=False, compare=False)
    adjacency: tuple[tuple[tuple[int, int], ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.intersections)
        for k, node in enumerate(self.intersections):
            if node.id != k:
                raise ValueError(f"intersection ids must be dense and ordered; got {node.id} at {k}")
        xy = np.array([[p.position.x, p.position.y] for p in self.intersections], dtype=float).reshape(n, 2)
        if not np.all(np.isfinite(xy)):
            raise ValueError("intersection coordinates must be finite")
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for k, seg in enumerate(self.segments):
            if seg.id != k:
                raise ValueError(f"segment ids must be dense and ordered; got {seg.id} at {k}")
            u, w = seg.endpoints
            if not (0 <= u < n and 0 <= w < n) or u == w:
                raise ValueError(f"segment {seg.id} has invalid endpoints {seg.endpoints}")
            if not seg.length > 0:
                raise ValueError(f"segment {seg.id} must have positive length")
            adj[u].append((seg.id, w))
            adj[w].append((seg.id, u))
        u = np.array([s.endpoints[0] for s in self.segments], dtype=np.int64)
        w = np.array([s.endpoints[1] for s in self.segments], dtype=np.int64)
        length = np.array([s.length for s in self.segments], dtype=float)
        for arr in (xy, u, w, length):
            arr.setflags(write=False)
        object.__setattr__(self, "node_xy", xy)
        object.__setattr__(self, "seg_u", u)
        object.__setattr__(self, "seg_w", w)
        object.__setattr__(self, "seg_len", length)
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in adj))

    @property
    def n_intersections(self) -> int:
        return len(self.intersections)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def position(self, node: int) -> Point:
        return self.intersections[node].position

    def point_on(self, seg_id: int, offset: float) -> Point:
        """Location at ``offset`` meters from the segment's first endpoint."""
        seg = self.segments[seg_id]
        a = self.node_xy[seg.endpoints[0]]
        b = self.node_xy[seg.endpoints[1]]
        t = offset / seg.length
        return Point(float(a[0] + t * (b[0] - a[0])), float(a[1] + t * (b[1] - a[1])))

    def is_connected(self) -> bool:
        n = self.n_intersections
        if n == 0:
            return True
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for _, nxt in self.adjacency[v]:
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append(nxt)
        return bool(seen.all())

    def with_base_stations(self, stations: Iterable[Any]) -> "RoadNetwork":
        return RoadNetwork(self.intersections, self.segments, tuple(stations), self.grid)

    def corner_nodes(self) -> tuple[int, int]:
        """Opposite corners (first and last intersection)."""
        return 0, self.n_intersections - 1


class EffectiveSpeedMap:
    """Immutable per-segment speed table (m/s)."""

    __slots__ = ("_speeds",)

    def __init__(self, speeds: Sequence[float] | np.ndarray):
        arr = np.array(speeds, dtype=float)
        if arr.ndim != 1:
            raise ValueError("speeds must be one-dimensional")
        if not np.all(arr > 0):
            raise ValueError("effective speeds must be positive")
        arr.setflags(write=False)
        self._speeds = arr

    @property
    def array(self) -> np.ndarray:
        return self._speeds

    def __len__(self) -> int:
        return len(self._speeds)

    def __contains__(self, seg_id) -> bool:
        return isinstance(seg_id, (int, np.integer)) and 0 <= seg_id < len(self._speeds)

    def __getitem__(self, seg_id: int) -> float:
        if seg_id not in self:
            raise KeyError(f"no effective speed for segment {seg_id!r}")
        return float(self._speeds[seg_id])

    def __eq__(self, other) -> bool:
        return isinstance(other, EffectiveSpeedMap) and np.array_equal(self._speeds, other._speeds)

    def __hash__(self):
        return hash(self._speeds.tobytes())

    def __repr__(self) -> str:
        return f"EffectiveSpeedMap(n={len(self)}, speeds={sorted(set(self._speeds.tolist()))})"

    def as_dict(self) -> dict[int, float]:
        return {k: float(v) for k, v in enumerate(self._speeds)}

    @staticmethod
    def uniform(value: float, network: RoadNetwork) -> "EffectiveSpeedMap":
        return EffectiveSpeedMap(np.full(network.n_segments, float(value)))


def generate_grid(avenues: int, streets: int, block_length: float, block_width: float) -> RoadNetwork:
    """Manhattan-style lattice: ``avenues`` columns spaced ``block_length`` apart,
    ``streets`` rows spaced ``block_width`` apart.

    Intersection ``j * avenues + i`` sits at ``(i * block_length, j * block_width)``.
    Segment ids follow intersection order, east link before north link.
    """
    if int(avenues) != avenues or int(streets) != streets:
        raise ValueError("avenue and street counts must be integers")
    if avenues < 2 or streets < 2:
        raise ValueError("a grid needs at least 2 avenues and 2 streets")
    if not (block_length > 0 and block_width > 0):
        raise ValueError("block dimensions must be positive")
    avenues, streets = int(avenues), int(streets)
    spec = GridSpec(avenues, streets, float(block_length), float(block_width))
    nodes = []
    for j in range(streets):
        for i in range(avenues):
            nodes.append(Intersection(spec.node(i, j), Point(i * spec.block_length, j * spec.block_width)))
    segs = []
    for node in nodes:
        i, j = spec.coords(node.id)
        if i + 1 < avenues:
            other = spec.node(i + 1, j)
            segs.append(_make_segment(len(segs), node, nodes[other]))
        if j + 1 < streets:
            other = spec.node(i, j + 1)
            segs.append(_make_segment(len(segs), node, nodes[other]))
    return RoadNetwork(tuple(nodes), tuple(segs), (), spec)


def _make_segment(seg_id: int, a: Intersection, b: Intersection) -> Segment:
    pa, pb = a.position, b.position
    length = math.hypot(pb.x - pa.x, pb.y - pa.y)
    mid = Point((pa.x + pb.x) / 2, (pa.y + pb.y) / 2)
    return Segment(seg_id, (a.id, b.id), length, mid)


def assign_esm(network: RoadNetwork, speed_set: Sequence[float], seed: int) -> EffectiveSpeedMap:
    """Draw every segment's speed uniformly from ``speed_set``."""
    choices = np.asarray(list(speed_set), dtype=float)
    if choices.size == 0:
        raise ValueError("speed set must not be empty")
    if not np.all(choices > 0):
        raise ValueError("speeds must be positive")
    rng = np.random.default_rng(seed)
    idx = rng.integers(choices.size, size=network.n_segments)
    return EffectiveSpeedMap(choices[idx])


def edge_travel_time(segment: Segment, esm: EffectiveSpeedMap) -> float:
    return segment.length / esm[segment.id]


def split_segment(network: RoadNetwork, esm: EffectiveSpeedMap | None, seg_id: int, offset: float):
    """Insert an intersection ``offset`` meters along a segment.

    The original id keeps the first half; the second half is appended. Grid
    metadata is dropped since the lattice no longer holds.
    Returns ``(network, esm, new_node_id)``.
    """
    seg = network.segments[seg_id]
    if not 0 < offset < seg.length:
        raise ValueError("split offset must lie strictly inside the segment")
    u, w = seg.endpoints
    new_id = network.n_intersections
    node = Intersection(new_id, network.point_on(seg_id, offset))
    nodes = network.intersections + (node,)
    first = _make_segment(seg_id, network.intersections[u], node)
    second = _make_segment(network.n_segments, node, network.intersections[w])
    segs = list(network.segments)
    segs[seg_id] = first
    segs.append(second)
    new_net = RoadNetwork(tuple(nodes), tuple(segs), network.base_stations, None)
    new_esm = None
    if esm is not None:
        new_esm = EffectiveSpeedMap(np.append(esm.array, esm[seg_id]))
    return new_net, new_esm, new_id


def network_to_dict(network: RoadNetwork, esm: EffectiveSpeedMap | None = None) -> dict:
    doc: dict[str, Any] = {
        "intersections": [{"id": n.id, "x": n.position.x, "y": n.position.y} for n in network.intersections],
        "segments": [
            {"id": s.id, "endpoints": list(s.endpoints), "length": s.length} for s in network.segments
        ],
    }
    if network.grid is not None:
        g = network.grid
        doc["grid"] = {
            "avenues": g.avenues,
            "streets": g.streets,
            "block_length": g.block_length,
            "block_width": g.block_width,
        }
    if esm is not None:
        doc["speeds"] = {str(k): v for k, v in esm.as_dict().items()}
    return doc


def network_from_dict(doc: dict) -> tuple[RoadNetwork, EffectiveSpeedMap | None]:
    nodes = tuple(
        Intersection(int(n["id"]), Point(float(n["x"]), float(n["y"])))
        for n in sorted(doc["intersections"], key=lambda n: int(n["id"]))
    )
    segs = []
    for s in sorted(doc["segments"], key=lambda s: int(s["id"])):
        u, w = (int(e) for e in s["endpoints"])
        pa, pb = nodes[u].position, nodes[w].position
        length = float(s.get("length", math.hypot(pb.x - pa.x, pb.y - pa.y)))
        segs.append(Segment(int(s["id"]), (u, w), length, Point((pa.x + pb.x) / 2, (pa.y + pb.y) / 2)))
    grid = GridSpec(**doc["grid"]) if "grid" in doc else None
    net = RoadNetwork(nodes, tuple(segs), (), grid)
    esm = None
    if "speeds" in doc:
        speeds = doc["speeds"]
        missing = [k for k in range(net.n_segments) if str(k) not in speeds]
        if missing:
            raise ValueError(f"speeds missing for segments {missing[:5]}")
        esm = EffectiveSpeedMap([float(speeds[str(k)]) for k in range(net.n_segments)])
    return net, esm
