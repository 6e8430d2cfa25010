"""Communication-constrained traffic control.

Per-channel AV capacity of a TDD MIMO cell, the flow-maximizing cell speed,
and spectrum balancing across the cells a road crosses.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import kernels

LIGHT_SPEED = 3e8
BUDGET_TOL = 1e-9
POLICIES = ("max_min", "max_total", "proportional")


@dataclass(frozen=True)
class CommRequirements:
    """Reliability, rate and latency floor for one level of automation.

    These enter the model only through the TDD parameters (a stricter
    requirement means longer pilots, more or longer messages, or smaller L).
    """

    reliability: float
    rate_mbps: float
    latency_s: float

    def __post_init__(self):
        if not 0.0 < self.reliability <= 1.0:
            raise ValueError("reliability must lie in (0, 1]")
        if self.rate_mbps <= 0 or self.latency_s <= 0:
            raise ValueError("rate and latency must be positive")


@dataclass(frozen=True)
class TddConfig:
    T_slot: float = 1e-4
    T_pilot: float = 5e-4
    T_m: float = 1e-2
    lambda_m: float = 25.0
    L: int = 10
    alpha: float = 2.0
    f_c: float = 1e9
    c: float = LIGHT_SPEED
    v_l: float = math.inf
    max_avs_per_channel: int | None = None

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1")
        if min(self.T_slot, self.T_pilot, self.T_m, self.lambda_m, self.f_c, self.c) <= 0:
            raise ValueError("timing, rate and frequency parameters must be positive")
        if not self.lambda_m * self.T_m < 1:
            raise ValueError("lambda_m * T_m must be below 1")
        k = self.T_m / self.T_slot
        if abs(k - round(k)) > 1e-6 * max(1.0, k):
            raise ValueError("T_m must be an integer multiple of T_slot")
        if self.v_l <= 0:
            raise ValueError("v_l must be positive")
        if self.max_avs_per_channel is not None and self.max_avs_per_channel < 1:
            raise ValueError("max_avs_per_channel must be at least 1")

    @property
    def load(self) -> float:
        """Downlink message occupancy lambda_m * T_m."""
        return self.lambda_m * self.T_m

    @property
    def cap(self) -> int:
        return self.max_avs_per_channel if self.max_avs_per_channel is not None else 10 * self.L

    def pilot_fraction(self, v):
        """T_pilot / T_v with T_v = c / (alpha v f_c)."""
        return self.T_pilot * self.alpha * np.asarray(v, dtype=float) * self.f_c / self.c

    def with_load(self, load: float) -> "TddConfig":
        """Same config with lambda_m rescaled so that lambda_m * T_m == load."""
        return replace(self, lambda_m=load / self.T_m)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if math.isinf(d["v_l"]):
            d["v_l"] = None
        return d

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TddConfig":
        doc = dict(doc)
        if "load" in doc:
            load = doc.pop("load")
            doc["lambda_m"] = load / doc.get("T_m", cls.T_m)
        if doc.get("v_l") is None:
            doc["v_l"] = math.inf
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown TDD parameter(s): {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class CellGeometry:
    lanes: int
    lane_width: float
    coverage: float

    def __post_init__(self):
        if self.lanes < 1 or self.lane_width <= 0 or self.coverage <= 0:
            raise ValueError("lanes, lane_width and coverage must be positive")


def _fits(n, p, q, L):
    return n * p + math.ceil(n / L) * q <= 1.0 + BUDGET_TOL


def n_controllable_one_channel(v: float, tdd: TddConfig) -> int:
    """Largest N with N*T_pilot/T_v + ceil(N/L)*lambda_m*T_m <= 1, capped."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    p = float(tdd.pilot_fraction(v))
    q, L, cap = tdd.load, tdd.L, tdd.cap
    if p <= 0.0:
        return int(min(cap, L * math.floor((1.0 + BUDGET_TOL) / q)))
    best = 0
    for j in range(1, int((1.0 + BUDGET_TOL) // q) + 1):
        room = (1.0 - j * q) / p
        if room < 0:
            break
        best = max(best, min(j * L, int(math.floor(room))))
        if best >= cap:
            break
    n = min(best, cap)
    # floor() of a value sitting on an integer may land either side
    while n < cap and _fits(n + 1, p, q, L):
        n += 1
    while n > 0 and not _fits(n, p, q, L):
        n -= 1
    return n


def n_controllable_grid(v, tdd: TddConfig) -> np.ndarray:
    """Vectorized :func:`n_controllable_one_channel` over an array of speeds."""
    v = np.asarray(v, dtype=float)
    return kernels.n_controllable_vec(tdd.pilot_fraction(v).ravel(), tdd.load, tdd.L, tdd.cap).reshape(v.shape)


def slot_pack_count(v: float, tdd: TddConfig) -> int:
    """Reference count: admit AVs one by one onto a unit timeline until it overflows."""
    p = float(tdd.pilot_fraction(v))
    return int(kernels.slot_pack(np.array([p]), np.array([tdd.load]), np.array([tdd.L]), np.array([tdd.cap]))[0])


def n_controllable(v: float, B: float, tdd: TddConfig) -> int:
    """AVs controllable with ``B`` (possibly fractional) channels."""
    if B < 0:
        raise ValueError("channel count must be non-negative")
    return int(math.floor(B * n_controllable_one_channel(v, tdd) + 1e-9))


def cell_sum_flow(geom: CellGeometry, n: float, v: float, min_spacing: float | None = None) -> float:
    """AVs per second entering (or leaving) the cell."""
    if min_spacing is not None and n > 0:
        gap = geom.coverage / (geom.lane_width * n)
        if gap < min_spacing:
            warnings.warn(f"implied AV spacing {gap:.2f} m is below {min_spacing} m", stacklevel=2)
    return geom.lanes * geom.lane_width / geom.coverage * n * v


class OptimalSpeed(NamedTuple):
    v: float
    n: int
    flow: float  # n * v, per channel and unit of lanes*W/C


def optimal_speed_closed_form(tdd: TddConfig) -> float:
    return min(tdd.v_l, tdd.c * (1.0 - tdd.load) / (tdd.alpha * tdd.f_c * tdd.T_pilot * tdd.L))


def optimal_speed(tdd: TddConfig, verify: bool = False, step: float = 0.01, v_max: float | None = None) -> OptimalSpeed:
    """Speed maximizing n*v for one channel, plus the matching AV count.

    With ``verify`` the result is cross-checked on a speed grid; a
    ``RuntimeError`` is raised if any grid speed beats it.
    """
    v = optimal_speed_closed_form(tdd)
    n = n_controllable_one_channel(v, tdd)
    if verify:
        res = speed_grid_check(tdd, step=step, v_max=v_max)
        if not res.ok:
            raise RuntimeError(f"grid speed {res.best_v} beats the closed form ({res.best_flow} > {n * v})")
    return OptimalSpeed(v, n, n * v)


class GridCheck(NamedTuple):
    ok: bool
    best_v: float  # literal first argmax on the grid
    best_flow: float
    located_v: float  # lowest grid speed whose step reaches the grid maximum
    v_star: float
    literal_ok: bool


def speed_grid_check(tdd: TddConfig, step: float = 0.01, v_max: float | None = None) -> GridCheck:
    """Scan n(v)*v on ``step, 2*step, ...`` and locate the optimum.

    n*v is a sawtooth: on each plateau of n it rises linearly and peaks at the
    plateau's right end, and for speeds above v* those peaks all tie with the
    optimum at v = L v*/n. A literal argmax can therefore land on any of them,
    depending on how the grid straddles each plateau end. The check here is
    that no grid point beats n* v*, and that the lowest grid speed which would
    overtake the grid maximum one step further on its plateau lies within one
    step of v*.
    """
    v_star = optimal_speed_closed_form(tdd)
    if v_max is None:
        v_max = max(100.0, 2.0 * v_star) if math.isfinite(v_star) else 100.0
        if math.isfinite(tdd.v_l):
            v_max = min(v_max, tdd.v_l)
    grid = step * np.arange(1, int(math.floor(v_max / step + 1e-9)) + 1)
    n = n_controllable_grid(grid, tdd)
    flow = n * grid
    k = int(np.argmax(flow))
    best = float(flow[k])
    target = n_controllable_one_channel(v_star, tdd) * v_star
    reach = n * (grid + step)
    j = int(np.flatnonzero(reach > best * (1 + 1e-12))[0])
    located = float(grid[j])
    ok = best <= target * (1 + 1e-12) and abs(located - v_star) <= step * (1 + 1e-9)
    literal = abs(float(grid[k]) - v_star) <= step * (1 + 1e-9)
    return GridCheck(bool(ok), float(grid[k]), best, located, v_star, bool(literal))


# ---------------------------------------------------------------------------
# spectrum balancing


@dataclass(frozen=True)
class CellSpec:
    geometry: CellGeometry
    tdd: TddConfig = field(default_factory=TddConfig)


@dataclass(frozen=True)
class RoadCellIncidence:
    """One-way roads and the ordered cells each one crosses.

    ``lanes[(cell, road)]`` is the road's lane count inside the cell;
    ``coverage`` optionally overrides the road's share of the cell's road
    area (default: the cell area split in proportion to lanes).
    """

    cells: dict
    roads: dict  # road -> tuple of cell ids, in travel order
    lanes: dict
    coverage: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.roads:
            raise ValueError("incidence has no roads")
        for r, seq in self.roads.items():
            if not seq:
                raise ValueError(f"road {r!r} crosses no cell")
            for c in seq:
                if c not in self.cells:
                    raise KeyError(f"road {r!r} references unknown cell {c!r}")
                if (c, r) not in self.lanes:
                    raise KeyError(f"no lane count for road {r!r} in cell {c!r}")
        for (c, r), n in self.lanes.items():
            if n < 0:
                raise ValueError(f"negative lane count for ({c!r}, {r!r})")

    @property
    def pairs(self) -> list[tuple]:
        return [(c, r) for r, seq in self.roads.items() for c in seq]

    def road_coverage(self, cell, road) -> float:
        if (cell, road) in self.coverage:
            return self.coverage[(cell, road)]
        g = self.cells[cell].geometry
        return g.coverage * self.lanes[(cell, road)] / g.lanes

    def coefficients(self, speeds: Mapping | None = None) -> dict:
        """Flow per channel ``a_ij`` of road j inside cell i (AVs/s per channel)."""
        out = {}
        for c, r in self.pairs:
            spec = self.cells[c]
            v = optimal_speed_closed_form(spec.tdd) if speeds is None else speeds[c]
            n1 = n_controllable_one_channel(v, spec.tdd)
            lanes = self.lanes[(c, r)]
            out[(c, r)] = lanes * spec.geometry.lane_width / self.road_coverage(c, r) * n1 * v if lanes else 0.0
        return out

    def optimal_speeds(self) -> dict:
        return {c: optimal_speed_closed_form(s.tdd) for c, s in self.cells.items()}

    def with_tdd(self, tdd: TddConfig) -> "RoadCellIncidence":
        cells = {c: replace(s, tdd=tdd) for c, s in self.cells.items()}
        return replace(self, cells=cells)


@dataclass(frozen=True)
class SpectrumAllocation:
    B: dict  # (cell, road) -> channels
    flows: dict  # (cell, road) -> AVs/s
    road_flow: dict  # road -> bottleneck AVs/s
    total_throughput: float
    policy: str
    infeasible_roads: tuple = ()

    @property
    def cell_channels(self) -> dict:
        out: dict = {}
        for (c, _), b in self.B.items():
            out[c] = out.get(c, 0.0) + b
        return out

    def to_rows(self) -> list[dict]:
        return [
            {"cell": c, "road": r, "channels": b, "flow": self.flows[(c, r)], "road_flow": self.road_flow[r]}
            for (c, r), b in self.B.items()
        ]


def road_throughput(B: Mapping, incidence: RoadCellIncidence, speeds: Mapping | None = None, coeffs: Mapping | None = None):
    """Per-road bottleneck flow (min over the road's cells) and the total."""
    a = incidence.coefficients(speeds) if coeffs is None else coeffs
    flows = {k: a[k] * B.get(k, 0.0) for k in incidence.pairs}
    road = {r: min(flows[(c, r)] for c in seq) for r, seq in incidence.roads.items()}
    return flows, road, float(sum(road.values()))


def _road_flow_targets(cost: dict, B0: float, policy: str) -> dict:
    roads = list(cost)
    if policy == "max_min":
        f = B0 / sum(cost.values())
        return {r: f for r in roads}
    if policy == "proportional":
        return {r: B0 / (len(roads) * cost[r]) for r in roads}
    if policy == "max_total":
        cmin = min(cost.values())
        best = [r for r in roads if cost[r] <= cmin * (1 + 1e-12)]
        return {r: (B0 / (len(best) * cmin) if r in best else 0.0) for r in roads}
    raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")


def balance_spectrum(
    incidence: RoadCellIncidence,
    B0: float,
    policy: str = "max_min",
    speeds: Mapping | None = None,
) -> SpectrumAllocation:
    """Split ``B0`` channels so every road has equal flow in all of its cells.

    Within a road the channels follow ``B_ij = F_j / a_ij``; ``policy`` picks
    the road flows ``F_j`` on the budget line ``sum_j F_j sum_i 1/a_ij = B0``:
    equal flows (``max_min``), largest sum (``max_total``) or largest sum of
    logs (``proportional``). Roads crossing a cell that cannot carry any AV
    get no channels and are reported as infeasible.
    """
    if B0 <= 0:
        raise ValueError("B0 must be positive")
    a = incidence.coefficients(speeds)
    bad = tuple(r for r, seq in incidence.roads.items() if any(a[(c, r)] <= 0 for c in seq))
    live = {r: seq for r, seq in incidence.roads.items() if r not in bad}
    if not live:
        raise ValueError("no road can carry traffic: every road crosses a cell with zero capacity")
    cost = {r: sum(1.0 / a[(c, r)] for c in seq) for r, seq in live.items()}
    target = _road_flow_targets(cost, B0, policy)
    B = {k: 0.0 for k in incidence.pairs}
    for r, seq in live.items():
        for c in seq:
            B[(c, r)] = target[r] / a[(c, r)]
    flows, road, total = road_throughput(B, incidence, coeffs=a)
    return SpectrumAllocation(B, flows, road, total, policy, bad)


def shift_balance(incidence: RoadCellIncidence, B: Mapping, speeds: Mapping | None = None, rtol: float = 1e-12, max_iter: int = 100_000):
    """Within-road balancing by repeated transfers from the fastest to the slowest cell.

    Each road keeps its channel total; every step moves channels from the cell
    with the highest flow to the one with the lowest until the two match.
    """
    a = incidence.coefficients(speeds)
    out = dict(B)
    for r, seq in incidence.roads.items():
        if len(seq) < 2 or any(a[(c, r)] <= 0 for c in seq):
            continue
        for _ in range(max_iter):
            f = {c: a[(c, r)] * out[(c, r)] for c in seq}
            hi = max(f, key=f.get)
            lo = min(f, key=f.get)
            if f[hi] - f[lo] <= rtol * max(f[hi], 1e-300):
                break
            ah, al = a[(hi, r)], a[(lo, r)]
            x = (f[hi] - f[lo]) / (ah + al)
            out[(hi, r)] -= x
            out[(lo, r)] += x
        else:
            raise RuntimeError(f"shift balancing did not converge on road {r!r}")
    return out


def equal_split(incidence: RoadCellIncidence, B0: float) -> dict:
    """``B0`` split evenly over cells, then over a cell's roads by road area."""
    cells = sorted({c for c, _ in incidence.pairs}, key=str)
    per_cell = B0 / len(cells)
    B = {}
    for c in cells:
        roads = [r for cc, r in incidence.pairs if cc == c]
        area = sum(incidence.road_coverage(c, r) for r in roads)
        for r in roads:
            B[(c, r)] = per_cell * incidence.road_coverage(c, r) / area
    return B


def policy_throughputs(incidence: RoadCellIncidence, B0: float, policy: str = "max_min") -> dict:
    """Road-network throughput (AVs/s) of three strategies.

    naive: every cell at half its optimal speed, equal channel split;
    lemma1: optimal speeds, equal split; lemma12: optimal speeds, balanced split.
    """
    v_opt = incidence.optimal_speeds()
    v_half = {c: v / 2.0 for c, v in v_opt.items()}
    eq = equal_split(incidence, B0)
    _, _, naive = road_throughput(eq, incidence, v_half)
    _, _, lemma1 = road_throughput(eq, incidence, v_opt)
    lemma12 = balance_spectrum(incidence, B0, policy, v_opt).total_throughput
    return {"naive": naive, "lemma1": lemma1, "lemma12": lemma12}


def two_cell_incidence(tdd: TddConfig | None = None, lane_width: float = 3.0, red_coverage: float = 12_000.0) -> RoadCellIncidence:
    """Red cell with one 2-lane road; green cell (twice the area) with that road plus a crossing 2-lane road."""
    tdd = tdd or TddConfig()
    cells = {
        "red": CellSpec(CellGeometry(2, lane_width, red_coverage), tdd),
        "green": CellSpec(CellGeometry(4, lane_width, 2 * red_coverage), tdd),
    }
    roads = {"horizontal": ("red", "green"), "vertical": ("green",)}
    lanes = {("red", "horizontal"): 2, ("green", "horizontal"): 2, ("green", "vertical"): 2}
    return RoadCellIncidence(cells, roads, lanes)


def incidence_from_dict(doc: Mapping) -> RoadCellIncidence:
    """Load ``{"tdd": {...}, "cells": {id: {lanes, lane_width, coverage, tdd?}}, "roads": {id: {cells: [...], lanes: {cell: n}}}}``."""
    base = doc.get("tdd", {})
    cells = {}
    for cid, c in doc["cells"].items():
        tdd = TddConfig.from_dict({**base, **c.get("tdd", {})})
        cells[cid] = CellSpec(CellGeometry(int(c["lanes"]), float(c["lane_width"]), float(c["coverage"])), tdd)
    roads, lanes, cov = {}, {}, {}
    for rid, r in doc["roads"].items():
        roads[rid] = tuple(r["cells"])
        for cid in r["cells"]:
            lanes[(cid, rid)] = int(r["lanes"][cid]) if isinstance(r["lanes"], Mapping) else int(r["lanes"])
            if "coverage" in r:
                cov[(cid, rid)] = float(r["coverage"][cid])
    return RoadCellIncidence(cells, roads, lanes, cov)


def load_incidence(path) -> RoadCellIncidence:
    with open(path) as fh:
        return incidence_from_dict(json.load(fh))
