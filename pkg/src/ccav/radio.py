"""Downlink rate model and gamma-rate cells.

Rates follow a Shannon formula over a log-distance path loss with log-normal
shadowing; the epsilon-quantile is analytic. A multiplicative Doppler
penalty ``1 / (1 + k * f_D(v) * tau)`` makes the rate drop with speed.

A point is covered by a base station at threshold ``gamma`` iff its
distance is within :func:`coverage_radius`, which is the exact inverse of
:func:`rate_quantile` (rate is monotone in distance).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.special import ndtri

from .net import EffectiveSpeedMap, Point, RoadNetwork

__all__ = [
    "BaseStation",
    "ChannelModel",
    "RateSample",
    "GammaRateCell",
    "CoreNode",
    "SampleLayout",
    "path_loss",
    "doppler_factor",
    "rate_quantile",
    "rate_quantile_at",
    "coverage_radius",
    "peak_rate",
    "sample_layout",
    "compute_gamma_cell",
    "compute_cells",
    "cell_connectivity",
    "place_base_stations",
    "intersection_key",
    "point_key",
]

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class BaseStation:
    id: int
    position: Point
    tx_antennas: int = 128
    carrier_frequency: float = 2.0e9
    tx_power: float = 49.0
    channels: int = 1

    def __post_init__(self):
        if self.tx_antennas < 1:
            raise ValueError("tx_antennas must be >= 1")
        if not self.carrier_frequency > 0:
            raise ValueError("carrier_frequency must be positive")

    @property
    def array_gain_db(self) -> float:
        return 10.0 * math.log10(self.tx_antennas)


@dataclass(frozen=True)
class ChannelModel:
    """Log-distance path loss ``intercept + slope*log10(d)`` plus shadowing.

    Defaults are urban-macro NLOS style coefficients (25 m mast, 2 GHz).
    """

    intercept_db: float = 33.46
    slope_db: float = 35.74
    shadowing_std_db: float = 8.0
    noise_dbm: float = -92.0
    bandwidth_hz: float = 20e6
    doppler_penalty: float = 3.0
    tau: float = 1e-3
    min_distance: float = 1.0

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth must be positive")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing std must be non-negative")
        if not self.slope_db > 0:
            raise ValueError("path-loss slope must be positive")


@dataclass(frozen=True)
class RateSample:
    location: Point
    speed: float
    rate: float


def path_loss(distance, model: ChannelModel):
    d = np.maximum(np.asarray(distance, dtype=float), model.min_distance)
    out = model.intercept_db + model.slope_db * np.log10(d)
    return float(out) if out.ndim == 0 else out


def doppler_factor(speed, bs: BaseStation, model: ChannelModel):
    f_d = np.asarray(speed, dtype=float) * bs.carrier_frequency / SPEED_OF_LIGHT
    out = 1.0 / (1.0 + model.doppler_penalty * f_d * model.tau)
    return float(out) if out.ndim == 0 else out


def _check_eps(epsilon: float):
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")


def _link_budget_db(bs: BaseStation, epsilon: float, model: ChannelModel) -> float:
    # rate exceeded with probability 1-eps <=> shadowing at its eps quantile
    margin = model.shadowing_std_db * ndtri(1.0 - epsilon)
    return bs.tx_power + bs.array_gain_db - model.noise_dbm - margin


def _snr_quantile_db(distance, bs: BaseStation, epsilon: float, model: ChannelModel):
    return _link_budget_db(bs, epsilon, model) - path_loss(distance, model)


def rate_quantile_at(distance, bs: BaseStation, speed, epsilon: float, model: ChannelModel):
    """Vectorized epsilon-quantile rate (Mbps) at the given distances/speeds."""
    _check_eps(epsilon)
    snr = 10.0 ** (np.asarray(_snr_quantile_db(distance, bs, epsilon, model)) / 10.0)
    rate = model.bandwidth_hz * np.log2(1.0 + snr) * doppler_factor(speed, bs, model) / 1e6
    rate = np.asarray(rate)
    return float(rate) if rate.ndim == 0 else rate


def rate_quantile(point: Point, bs: BaseStation, speed: float, epsilon: float, model: ChannelModel) -> float:
    d = math.hypot(point[0] - bs.position.x, point[1] - bs.position.y)
    return rate_quantile_at(d, bs, speed, epsilon, model)


def peak_rate(bs: BaseStation, epsilon: float, model: ChannelModel) -> float:
    """Largest epsilon-quantile rate anywhere (at the BS, standing still)."""
    return rate_quantile_at(0.0, bs, 0.0, epsilon, model)


def coverage_radius(bs: BaseStation, gamma: float, speed, epsilon: float, model: ChannelModel):
    """Largest distance with ``rate_quantile >= gamma``.

    ``inf`` when gamma <= 0, ``-1`` when no distance qualifies.
    """
    _check_eps(epsilon)
    speed = np.asarray(speed, dtype=float)
    if gamma <= 0:
        out = np.full(speed.shape, np.inf)
        return float(out) if out.ndim == 0 else out
    eff = gamma * 1e6 / (model.bandwidth_hz * doppler_factor(speed, bs, model))
    with np.errstate(over="ignore"):
        need_db = 10.0 * np.log10(np.expm1(np.asarray(eff) * math.log(2.0)))
    allowed = _link_budget_db(bs, epsilon, model) - need_db
    floor = path_loss(model.min_distance, model)
    with np.errstate(over="ignore"):
        radius = 10.0 ** ((allowed - model.intercept_db) / model.slope_db)
    radius = np.where(allowed >= floor, np.maximum(radius, model.min_distance), -1.0)
    return float(radius) if radius.ndim == 0 else radius


def _radius2(radius):
    r = np.asarray(radius, dtype=float)
    return np.where(r < 0, -1.0, r * r)


# ---------------------------------------------------------------------------
# sampled road geometry


@dataclass(frozen=True)
class SampleLayout:
    """Sample points every ``spacing`` meters along every segment.

    Indices ``0..V-1`` are the intersections; interior samples follow.
    ``seg_ptr[s]:seg_ptr[s+1]`` slices ``seg_samples``/``seg_offsets`` in
    order from the segment's first endpoint to its second. Those per-segment
    positions are "slots": an intersection owns one slot on every incident
    segment, so it can be judged at each segment's own speed. Edge ``e``
    joins slots ``edge_slot[e]`` and ``edge_slot[e] + 1``.
    """

    spacing: float
    xy: np.ndarray
    sample_seg: np.ndarray
    seg_ptr: np.ndarray
    seg_samples: np.ndarray
    seg_offsets: np.ndarray
    slot_seg: np.ndarray
    edge_slot: np.ndarray
    edge_a: np.ndarray
    edge_b: np.ndarray

    @property
    def n(self) -> int:
        return len(self.xy)

    def segment(self, seg_id: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.seg_ptr[seg_id], self.seg_ptr[seg_id + 1]
        return self.seg_samples[lo:hi], self.seg_offsets[lo:hi]


def sample_layout(network: RoadNetwork, spacing: float = 5.0) -> SampleLayout:
    if not spacing > 0:
        raise ValueError("sample spacing must be positive")
    cache = network.__dict__.setdefault("_layout_cache", {})
    if spacing in cache:
        return cache[spacing]
    nv = network.n_intersections
    xy = [network.node_xy]
    sample_seg = [np.full(nv, -1, dtype=np.int64)]
    seg_ptr = [0]
    seg_samples = []
    seg_offsets = []
    nxt = nv
    for seg in network.segments:
        count = max(2, int(math.ceil(seg.length / spacing - 1e-9)) + 1)
        offs = np.linspace(0.0, seg.length, count)
        interior = count - 2
        a = network.node_xy[seg.endpoints[0]]
        b = network.node_xy[seg.endpoints[1]]
        t = offs[1:-1, None] / seg.length
        xy.append(a + t * (b - a))
        sample_seg.append(np.full(interior, seg.id, dtype=np.int64))
        idx = np.concatenate(([seg.endpoints[0]], np.arange(nxt, nxt + interior), [seg.endpoints[1]]))
        nxt += interior
        seg_samples.append(idx)
        seg_offsets.append(offs)
        seg_ptr.append(seg_ptr[-1] + count)
    samples = np.concatenate(seg_samples).astype(np.int64)
    offsets = np.concatenate(seg_offsets)
    ptr = np.asarray(seg_ptr, dtype=np.int64)
    # consecutive samples within a segment
    keep = np.ones(len(samples), dtype=bool)
    keep[ptr[1:] - 1] = False
    first = np.flatnonzero(keep)
    layout = SampleLayout(
        spacing=float(spacing),
        xy=np.vstack(xy),
        sample_seg=np.concatenate(sample_seg),
        seg_ptr=ptr,
        seg_samples=samples,
        seg_offsets=offsets,
        slot_seg=np.repeat(np.arange(network.n_segments), np.diff(ptr)),
        edge_slot=first,
        edge_a=samples[first],
        edge_b=samples[first + 1],
    )
    cache[spacing] = layout
    return layout


def sample_speeds(network: RoadNetwork, layout: SampleLayout, esm: EffectiveSpeedMap | None, reference: float):
    """Evaluation speed per slot (the slot's segment speed) and per sample.

    A sample's own speed is its segment speed, or the slowest incident speed
    at an intersection; it only picks the cell's anchor.
    """
    if esm is None:
        return np.full(len(layout.seg_samples), float(reference)), np.full(layout.n, float(reference))
    slot = esm.array[layout.slot_seg]
    point = np.full(layout.n, np.inf)
    np.minimum.at(point, layout.seg_samples, slot)
    return slot, point


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class GammaRateCell:
    """Contiguous covered part of the road network for one BS.

    ``intervals`` maps every touched segment to its covered offset ranges
    (meters from the segment's first endpoint).
    """

    bs: int
    gamma: float
    epsilon: float
    covered_intersections: frozenset
    covered_segments: frozenset
    intervals: dict = field(compare=False)
    network: RoadNetwork = field(repr=False, compare=False)

    @property
    def id(self) -> int:
        return self.bs

    @property
    def partially_covered_segments(self) -> dict:
        return {s: iv for s, iv in self.intervals.items() if s not in self.covered_segments}

    @property
    def is_empty(self) -> bool:
        return not self.covered_intersections and not self.intervals

    def covers_point(self, seg_id: int, offset: float) -> bool:
        return any(lo <= offset <= hi for lo, hi in self.intervals.get(seg_id, ()))

    def to_dict(self) -> dict:
        return {
            "bs": self.bs,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "covered_intersections": sorted(self.covered_intersections),
            "covered_segments": sorted(self.covered_segments),
            "partial_segments": {
                str(s): [list(iv) for iv in ivs] for s, ivs in sorted(self.partially_covered_segments.items())
            },
        }


def _empty_cell(bs_id, gamma, epsilon, network):
    return GammaRateCell(bs_id, gamma, epsilon, frozenset(), frozenset(), {}, network)


def compute_gamma_cell(
    network: RoadNetwork,
    bs: BaseStation,
    gamma: float,
    epsilon: float = 0.01,
    speed_for_eval: float = 20.0,
    sample_spacing: float = 5.0,
    model: ChannelModel | None = None,
    esm: EffectiveSpeedMap | None = None,
) -> GammaRateCell:
    """Gamma-rate cell of ``bs``: the connected covered region around its best sample.

    Coverage is evaluated at ESM speeds when ``esm`` is given, otherwise at
    ``speed_for_eval``.
    """
    model = model or ChannelModel()
    layout = sample_layout(network, sample_spacing)
    speeds = sample_speeds(network, layout, esm, speed_for_eval)
    return _cell_from_samples(network, layout, bs, gamma, epsilon, speeds, model)


def _cell_from_samples(network, layout, bs, gamma, epsilon, speeds, model):
    _check_eps(epsilon)
    slot_speed, point_speed = speeds
    dx = layout.xy[:, 0] - bs.position.x
    dy = layout.xy[:, 1] - bs.position.y
    d2 = dx * dx + dy * dy
    uniq, inv = np.unique(slot_speed, return_inverse=True)
    r2 = _radius2(coverage_radius(bs, gamma, uniq, epsilon, model))[inv]
    slot_ok = d2[layout.seg_samples] <= r2
    covered = np.zeros(layout.n, dtype=bool)
    covered[layout.seg_samples[slot_ok]] = True
    # anchor: best-rate sample, independent of gamma so cells nest
    rate = rate_quantile_at(np.sqrt(d2), bs, point_speed, epsilon, model)
    anchor = int(np.argmax(rate))
    if not covered[anchor]:
        return _empty_cell(bs.id, gamma, epsilon, network)
    e = layout.edge_slot
    both = slot_ok[e] & slot_ok[e + 1]
    n = layout.n
    g = sparse.coo_matrix(
        (np.ones(int(both.sum()), dtype=np.int8), (layout.edge_a[both], layout.edge_b[both])), shape=(n, n)
    )
    _, labels = connected_components(g, directed=False)
    in_cell = (labels == labels[anchor]) & covered
    return _cell_from_mask(network, layout, bs.id, gamma, epsilon, in_cell, slot_ok)


def _cell_from_mask(network, layout, bs_id, gamma, epsilon, in_cell, slot_ok=None):
    nv = network.n_intersections
    nodes = frozenset(np.flatnonzero(in_cell[:nv]).tolist())
    member = in_cell[layout.seg_samples]
    if slot_ok is not None:
        member &= slot_ok
    seg_of = layout.slot_seg
    touched = np.unique(seg_of[member])
    full = []
    intervals = {}
    for s in touched.tolist():
        lo, hi = layout.seg_ptr[s], layout.seg_ptr[s + 1]
        m = member[lo:hi]
        offs = layout.seg_offsets[lo:hi]
        if m.all():
            full.append(s)
            intervals[s] = ((0.0, float(offs[-1])),)
            continue
        runs = []
        k = 0
        count = len(m)
        while k < count:
            if not m[k]:
                k += 1
                continue
            start = k
            while k + 1 < count and m[k + 1]:
                k += 1
            # a lone endpoint is just the intersection itself
            if not (start == k and (k == 0 or k == count - 1)):
                runs.append((float(offs[start]), float(offs[k])))
            k += 1
        if runs:
            intervals[s] = tuple(runs)
    return GammaRateCell(bs_id, float(gamma), float(epsilon), nodes, frozenset(full), intervals, network)


def compute_cells(
    network: RoadNetwork,
    stations: Iterable[BaseStation],
    gamma: float,
    epsilon: float = 0.01,
    model: ChannelModel | None = None,
    esm: EffectiveSpeedMap | None = None,
    speed_for_eval: float = 20.0,
    sample_spacing: float = 5.0,
) -> list[GammaRateCell]:
    model = model or ChannelModel()
    layout = sample_layout(network, sample_spacing)
    speeds = sample_speeds(network, layout, esm, speed_for_eval)
    return [_cell_from_samples(network, layout, bs, gamma, epsilon, speeds, model) for bs in stations]


# ---------------------------------------------------------------------------
# core nodes


def intersection_key(node: int) -> tuple:
    return ("I", int(node))


def point_key(network: RoadNetwork, seg_id: int, offset: float) -> tuple:
    """Canonical hashable key of a road location; segment ends map to intersections."""
    seg = network.segments[seg_id]
    if offset <= 0.0:
        return ("I", seg.endpoints[0])
    if offset >= seg.length:
        return ("I", seg.endpoints[1])
    return ("S", int(seg_id), float(offset))


@dataclass(frozen=True, order=True)
class CoreNode:
    key: tuple
    kind: str
    location: Point = field(compare=False)
    between: tuple = field(compare=False)
    segment: int | None = field(default=None, compare=False)
    offset: float | None = field(default=None, compare=False)

    @property
    def id(self) -> str:
        if self.kind == "intersection":
            return f"I{self.key[1]}"
        return f"S{self.key[1]}@{self.key[2]:.3f}"


def cell_connectivity(a: GammaRateCell, b: GammaRateCell) -> tuple[CoreNode, ...]:
    """Core nodes shared by two cells; empty iff the cells are not connected."""
    network = a.network
    pair = tuple(sorted((a.bs, b.bs)))
    out = []
    for node in sorted(a.covered_intersections & b.covered_intersections):
        out.append(CoreNode(intersection_key(node), "intersection", network.position(node), pair))
    for s in sorted(set(a.intervals) & set(b.intervals)):
        length = network.segments[s].length
        for lo_a, hi_a in a.intervals[s]:
            for lo_b, hi_b in b.intervals[s]:
                lo, hi = max(lo_a, lo_b), min(hi_a, hi_b)
                if lo > hi or lo <= 0.0 or hi >= length:
                    # no overlap, or the overlap reaches a common intersection
                    continue
                off = 0.5 * (lo + hi)
                key = ("S", s, off)
                out.append(CoreNode(key, "midpoint", network.point_on(s, off), pair, s, off))
    return tuple(sorted(set(out)))


# ---------------------------------------------------------------------------
# deployment


def place_base_stations(
    network: RoadNetwork,
    count: int,
    rule: str = "lattice",
    seed: int = 0,
    **bs_kwargs,
) -> list[BaseStation]:
    """Spread ``count`` BSs over the network's bounding box.

    ``lattice``: rows x cols grid matching the area's aspect ratio.
    ``nested``: farthest-point order over a fine candidate lattice, so the
    first k stations are always a subset of the first k+1.
    ``random``: uniform over the box.
    """
    if count < 1:
        raise ValueError("need at least one base station")
    xy = network.node_xy
    x0, y0 = xy.min(axis=0)
    x1, y1 = xy.max(axis=0)
    w, h = max(x1 - x0, 1.0), max(y1 - y0, 1.0)
    if rule == "lattice":
        best = None
        for rows in range(1, count + 1):
            if count % rows:
                continue
            cols = count // rows
            score = abs(math.log((w / cols) / (h / rows)))
            if best is None or score < best[0]:
                best = (score, rows, cols)
        _, rows, cols = best
        pts = [
            (x0 + (i + 0.5) * w / cols, y0 + (j + 0.5) * h / rows) for j in range(rows) for i in range(cols)
        ]
    elif rule == "nested":
        pts = _farthest_point_order(x0, y0, w, h, count)
    elif rule == "random":
        rng = np.random.default_rng(seed)
        pts = [(x0 + rng.uniform() * w, y0 + rng.uniform() * h) for _ in range(count)]
    else:
        raise ValueError(f"unknown placement rule {rule!r}")
    return [BaseStation(k, Point(float(px), float(py)), **bs_kwargs) for k, (px, py) in enumerate(pts)]


def _farthest_point_order(x0, y0, w, h, count):
    n = 24
    gx, gy = np.meshgrid((np.arange(n) + 0.5) / n, (np.arange(n) + 0.5) / n)
    cand = np.column_stack((x0 + gx.ravel() * w, y0 + gy.ravel() * h))
    centre = np.array([x0 + w / 2, y0 + h / 2])
    first = int(np.argmin(((cand - centre) ** 2).sum(axis=1)))
    chosen = [first]
    # distance to the box edge counts too, keeping stations off the border
    edge = np.minimum.reduce([cand[:, 0] - x0, x0 + w - cand[:, 0], cand[:, 1] - y0, y0 + h - cand[:, 1]])
    dmin = np.sqrt(((cand - cand[first]) ** 2).sum(axis=1))
    while len(chosen) < count:
        score = np.minimum(dmin, 2.0 * edge)
        score[chosen] = -1.0
        k = int(np.argmax(score))
        chosen.append(k)
        dmin = np.minimum(dmin, np.sqrt(((cand - cand[k]) ** 2).sum(axis=1)))
    return [tuple(cand[k]) for k in chosen]
