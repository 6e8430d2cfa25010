"""Monte-Carlo harness: trip metrics, CDFs, success rates and parameter sweeps."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .io import config_hash, write_csv, write_json
from .net import EffectiveSpeedMap, RoadNetwork, assign_esm, generate_grid
from .radio import (
    BaseStation,
    ChannelModel,
    _link_budget_db,
    compute_cells,
    coverage_radius,
    doppler_factor,
    place_base_stations,
)
from .routing import (
    NoRoute,
    Route,
    greedy_route_cc,
    greedy_route_no_cc,
    shortest_time_route,
    two_layer_route,
)
from . import traffic

logger = logging.getLogger(__name__)

SCHEMES = ("two-layer", "greedy-cc", "greedy", "shortest-time")
COVER_RTOL = 1e-9


@dataclass(frozen=True)
class TrialConfig:
    avenues: int = 11
    streets: int = 21
    block_length: float = 250.0
    block_width: float = 100.0
    bs_count: int = 9
    bs_rule: str = "lattice"
    bs_params: dict = field(default_factory=dict)
    channel: ChannelModel = field(default_factory=ChannelModel)
    gamma: float = 54.0
    epsilon: float = 0.01
    speed_set: tuple = (10.0, 20.0, 30.0)
    sample_spacing: float = 5.0
    gamma_floor: float = 0.0
    gamma_step: float = 5.0
    fallback: bool = True
    max_paths: int = 10000
    max_segments: int | None = None
    trials: int = 1000
    seed: int = 0
    schemes: tuple = SCHEMES
    endpoints: str = "corners"
    accounting: str = "quantile"
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ValueError(f"unknown scheme(s) {sorted(bad)}")
        if self.endpoints not in ("corners", "random"):
            raise ValueError("endpoints must be 'corners' or 'random'")
        if self.accounting not in ("quantile", "realized"):
            raise ValueError("accounting must be 'quantile' or 'realized'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["speed_set"] = list(self.speed_set)
        d["schemes"] = list(self.schemes)
        return d

    @classmethod
    def from_config(cls, cfg: dict) -> "TrialConfig":
        g, b, r, m = cfg["grid"], cfg["base_stations"], cfg["routing"], cfg["montecarlo"]
        return cls(
            avenues=int(g["avenues"]),
            streets=int(g["streets"]),
            block_length=float(g["block_length"]),
            block_width=float(g["block_width"]),
            bs_count=int(b["count"]),
            bs_rule=b["rule"],
            bs_params={
                "tx_antennas": int(b["tx_antennas"]),
                "carrier_frequency": float(b["carrier_frequency"]),
                "tx_power": float(b["tx_power"]),
            },
            channel=ChannelModel(**cfg["channel"]),
            gamma=float(r["gamma"]),
            epsilon=float(r["epsilon"]),
            speed_set=tuple(float(s) for s in r["speed_set"]),
            sample_spacing=float(r["sample_spacing"]),
            gamma_floor=float(r["gamma_floor"]),
            gamma_step=float(r["gamma_step"]),
            fallback=bool(r["fallback"]),
            max_paths=int(r["max_paths"]),
            max_segments=None if r["max_segments"] is None else int(r["max_segments"]),
            trials=int(m["trials"]),
            seed=int(cfg["seed"]),
            schemes=tuple(m["schemes"]),
            endpoints=m["endpoints"],
            accounting=m["accounting"],
            workers=int(m["workers"]),
        )

    def network(self) -> RoadNetwork:
        return generate_grid(self.avenues, self.streets, self.block_length, self.block_width)

    def stations(self, network: RoadNetwork) -> list[BaseStation]:
        seed = int(np.random.SeedSequence([self.seed, 1]).generate_state(1)[0])
        return place_base_stations(network, self.bs_count, self.bs_rule, seed=seed, **self.bs_params)


@dataclass(frozen=True)
class TripMetrics:
    trial: int
    scheme: str
    trip_duration: float
    covered_duration: float
    P_c: float
    success: bool
    gamma_used: float | None
    n_segments: int
    routed: bool = True
    switch_index: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CdfSeries:
    scheme: str
    values: np.ndarray
    fractions: np.ndarray

    @classmethod
    def from_samples(cls, scheme: str, samples) -> "CdfSeries":
        x = np.sort(np.asarray([s for s in samples if s is not None and np.isfinite(s)], dtype=float))
        f = np.arange(1, x.size + 1) / x.size if x.size else np.zeros(0)
        return cls(scheme, x, f)

    def at(self, value: float) -> float:
        """Right-continuous step value F(value)."""
        if self.values.size == 0:
            return 0.0
        return float(np.searchsorted(self.values, value, side="right") / self.values.size)

    def rows(self, metric: str) -> list[dict]:
        return [
            {"scheme": self.scheme, "metric": metric, "value": float(v), "cdf": float(p)}
            for v, p in zip(self.values, self.fractions)
        ]


# ---------------------------------------------------------------------------
# trip sampling


def route_pieces(network: RoadNetwork, esm: EffectiveSpeedMap, route: Route):
    """Straight pieces (x0, y0, ux, uy, speed, t0) plus the trip duration."""
    n = max(1, len(route.traversals))
    x0, y0, ux, uy, sp, t0 = (np.zeros(n) for _ in range(6))
    if not route.traversals:
        p = network.node_xy[route.source]
        x0[0], y0[0] = p
        return x0, y0, ux, uy, sp, t0, 0.0
    t = 0.0
    for i, tr in enumerate(route.traversals):
        u, w = network.segments[tr.segment].endpoints
        a, b = network.node_xy[u], network.node_xy[w]
        d = (b - a) / network.seg_len[tr.segment]
        start = a + d * tr.entry
        x0[i], y0[i] = start
        ux[i], uy[i] = d * tr.direction
        sp[i] = esm[tr.segment]
        t0[i] = t
        t += tr.distance / sp[i]
    return x0, y0, ux, uy, sp, t0, t


def simulate_trip(
    route: Route,
    esm: EffectiveSpeedMap,
    network: RoadNetwork,
    stations: Sequence[BaseStation],
    gamma: float,
    epsilon: float = 0.01,
    model: ChannelModel | None = None,
    tau: float | None = None,
    accounting: str = "quantile",
    rng: np.random.Generator | None = None,
    trial: int = 0,
) -> TripMetrics:
    """Drive the route at ESM speeds and check the rate every ``tau`` seconds.

    In ``quantile`` mode a tick is covered when some BS's epsilon-quantile
    rate at that position and speed reaches ``gamma``. In ``realized`` mode
    each tick draws fresh shadowing per BS and compares the realized rate.
    """
    model = model or ChannelModel()
    tau = model.tau if tau is None else tau
    x0, y0, ux, uy, sp, t0, T = route_pieces(network, esm, route)
    n_ticks = max(1, math.ceil(T / tau - 1e-9))
    dt = T / n_ticks
    bx = np.array([b.position.x for b in stations], dtype=float)
    by = np.array([b.position.y for b in stations], dtype=float)
    if not len(stations):
        covered = 0
    elif accounting == "quantile":
        r2 = np.empty((len(sp), len(stations)))
        for j, bs in enumerate(stations):
            r = np.asarray(coverage_radius(bs, gamma, sp, epsilon, model), dtype=float)
            r2[:, j] = np.where(r < 0, -1.0, r * r * (1 + COVER_RTOL))
        covered = kernels.tick_coverage(x0, y0, ux, uy, sp, t0, r2, bx, by, n_ticks, dt)
    elif accounting == "realized":
        if rng is None:
            raise ValueError("realized accounting needs an rng")
        margin = _realized_margin(stations, gamma, sp, model)
        covered = 0
        for k0 in range(0, n_ticks, kernels.CHUNK):
            z = rng.standard_normal((min(kernels.CHUNK, n_ticks - k0), len(stations)))
            covered += kernels.tick_coverage_realized(
                x0, y0, ux, uy, sp, t0, margin, bx, by, k0, dt, z,
                model.shadowing_std_db, model.intercept_db, model.slope_db, model.min_distance,
            )
    else:
        raise ValueError(f"unknown accounting mode {accounting!r}")
    pc = covered / n_ticks
    return TripMetrics(
        trial, route.scheme, T, pc * T, pc, covered == n_ticks, route.gamma_used, route.n_segments,
        True, route.switch_index,
    )


def _realized_margin(stations, gamma, speeds, model):
    """Largest path loss (before shadowing) at which the realized rate still reaches gamma."""
    out = np.empty((len(speeds), len(stations)))
    if gamma <= 0:
        out[:] = np.inf
        return out
    for j, bs in enumerate(stations):
        eff = gamma * 1e6 / (model.bandwidth_hz * np.asarray(doppler_factor(speeds, bs, model)))
        with np.errstate(over="ignore"):
            need = 10.0 * np.log10(np.expm1(eff * math.log(2.0)))
        # epsilon = 0.5 puts the shadowing quantile at zero
        out[:, j] = _link_budget_db(bs, 0.5, model) - need
    return out


# ---------------------------------------------------------------------------
# Monte Carlo


def _failed(trial, scheme, gamma):
    return TripMetrics(trial, scheme, math.nan, math.nan, 0.0, False, gamma, 0, False, None)


def _trial_seeds(cfg: TrialConfig):
    return np.random.SeedSequence(cfg.seed).spawn(cfg.trials)


def run_trial(cfg: TrialConfig, trial: int, ss: np.random.SeedSequence, network=None, stations=None) -> list[TripMetrics]:
    network = network or cfg.network()
    stations = stations if stations is not None else cfg.stations(network)
    esm_seed, walk_seed, end_seed, shadow_seed = (int(x) for x in ss.generate_state(4))
    esm = assign_esm(network, cfg.speed_set, esm_seed)
    if cfg.endpoints == "corners":
        src, dst = network.corner_nodes()
    else:
        src, dst = (int(x) for x in np.random.default_rng(end_seed).choice(network.n_intersections, 2, replace=False))
    cell_kw = dict(epsilon=cfg.epsilon, model=cfg.channel, esm=esm, sample_spacing=cfg.sample_spacing)
    cells = None
    if {"two-layer", "greedy-cc"} & set(cfg.schemes):
        cells = compute_cells(network, stations, cfg.gamma, **cell_kw)
    rng = np.random.default_rng(shadow_seed)
    out = []
    for scheme in cfg.schemes:
        try:
            if scheme == "two-layer":
                recompute = (lambda g: compute_cells(network, stations, g, **cell_kw)) if cfg.fallback else None
                route = two_layer_route(
                    network, cells, esm, src, dst, gamma=cfg.gamma, gamma_floor=cfg.gamma_floor,
                    gamma_step=cfg.gamma_step, recompute=recompute, max_paths=cfg.max_paths,
                )
            elif scheme == "greedy-cc":
                route = greedy_route_cc(network, cells, esm, src, dst, cfg.gamma, cfg.max_segments, seed=walk_seed)
            elif scheme == "greedy":
                route = greedy_route_no_cc(network, esm, src, dst, seed=walk_seed)
            else:
                route = shortest_time_route(network, esm, src, dst)
        except NoRoute:
            out.append(_failed(trial, scheme, cfg.gamma))
            continue
        out.append(
            simulate_trip(route, esm, network, stations, cfg.gamma, cfg.epsilon, cfg.channel,
                          accounting=cfg.accounting, rng=rng, trial=trial)
        )
    return out


def _run_chunk(args):
    cfg, items = args
    network = cfg.network()
    stations = cfg.stations(network)
    rows = []
    for trial, ss in items:
        rows.extend(run_trial(cfg, trial, ss, network, stations))
    return rows


@dataclass
class MonteCarloResult:
    config: TrialConfig
    metrics: list
    cfg_hash: str

    def by_scheme(self, scheme: str) -> list[TripMetrics]:
        return [m for m in self.metrics if m.scheme == scheme]

    def duration_cdf(self, scheme: str) -> CdfSeries:
        return CdfSeries.from_samples(scheme, [m.trip_duration for m in self.by_scheme(scheme)])

    def pc_cdf(self, scheme: str) -> CdfSeries:
        return CdfSeries.from_samples(scheme, [m.P_c for m in self.by_scheme(scheme)])

    def summary(self) -> list[dict]:
        rows = []
        for s in self.config.schemes:
            ms = self.by_scheme(s)
            dur = np.array([m.trip_duration for m in ms if m.routed])
            rows.append({
                "scheme": s,
                "trials": len(ms),
                "routed_pct": 100.0 * sum(m.routed for m in ms) / len(ms),
                "success_pct": 100.0 * sum(m.success for m in ms) / len(ms),
                "mean_P_c": float(np.mean([m.P_c for m in ms])),
                "mean_duration": float(dur.mean()) if dur.size else math.nan,
                "median_duration": float(np.median(dur)) if dur.size else math.nan,
                "fallback_pct": 100.0 * sum(
                    1 for m in ms if m.routed and m.gamma_used is not None and m.gamma_used < self.config.gamma
                ) / len(ms),
            })
        return rows


def run_monte_carlo(cfg: TrialConfig, cfg_doc: dict | None = None) -> MonteCarloResult:
    """Run ``cfg.trials`` independent trials; output is identical for any worker count."""
    seeds = list(enumerate(_trial_seeds(cfg)))
    if cfg.workers > 1 and len(seeds) > 1:
        chunks = [seeds[i :: cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(_run_chunk, [(cfg, c) for c in chunks if c]))
        metrics = [m for p in parts for m in p]
    else:
        metrics = _run_chunk((cfg, seeds))
    order = {s: i for i, s in enumerate(cfg.schemes)}
    metrics.sort(key=lambda m: (m.trial, order[m.scheme]))
    return MonteCarloResult(cfg, metrics, config_hash(cfg_doc if cfg_doc is not None else cfg.to_dict()))


# ---------------------------------------------------------------------------
# sweeps

ROUTING_AXES = ("gamma", "bs_count")
TRAFFIC_AXES = ("f_c", "alpha", "lambda_m_T_m")


def sweep_routing(cfg: TrialConfig, axis: str, values: Sequence[float]) -> list[dict]:
    if list(values) != sorted(values):
        raise ValueError("sweep values must be sorted ascending")
    rows = []
    for v in values:
        if axis == "gamma":
            c = replace(cfg, gamma=float(v))
        elif axis == "bs_count":
            c = replace(cfg, bs_count=int(v))
        else:
            raise ValueError(f"unknown routing axis {axis!r}")
        res = run_monte_carlo(c)
        for s in res.summary():
            rows.append({"axis": axis, "value": v, **s})
    return rows


def sweep_traffic(axis: str, values: Sequence[float], tdd: traffic.TddConfig | None = None,
                  B0: float = 10.0, alphas: Sequence[float] | None = None,
                  incidence: traffic.RoadCellIncidence | None = None, policy: str = "max_min") -> list[dict]:
    """Throughput of the three strategies of policy_throughputs along one TDD axis."""
    if list(values) != sorted(values):
        raise ValueError("sweep values must be sorted ascending")
    tdd = tdd or traffic.TddConfig()
    base = incidence or traffic.two_cell_incidence(tdd)
    series = [None] if axis == "alpha" or not alphas else list(alphas)
    rows = []
    for a in series:
        for v in values:
            t = tdd if a is None else replace(tdd, alpha=float(a))
            if axis == "f_c":
                t = replace(t, f_c=float(v))
            elif axis == "alpha":
                t = replace(t, alpha=float(v))
            elif axis == "lambda_m_T_m":
                t = t.with_load(float(v))
            else:
                raise ValueError(f"unknown traffic axis {axis!r}")
            inc = base.with_tdd(t)
            tp = traffic.policy_throughputs(inc, B0, policy)
            for name, val in tp.items():
                rows.append({
                    "axis": axis, "value": v, "alpha": t.alpha, "f_c": t.f_c, "lambda_m_T_m": t.load,
                    "policy": name, "throughput_av_s": val, "throughput_av_min": 60.0 * val,
                })
    return rows


def sweep(cfg, axis: str, values: Sequence[float], **kw) -> list[dict]:
    if axis in ROUTING_AXES:
        return sweep_routing(cfg, axis, values)
    if axis in TRAFFIC_AXES:
        return sweep_traffic(axis, values, **kw)
    raise ValueError(f"unknown sweep axis {axis!r}")


# ---------------------------------------------------------------------------
# artifacts

FIG_FILES = {
    "fig4": "fig4_duration_cdf.csv",
    "fig5": "fig5_pc_cdf.csv",
    "fig6": "fig6_success_vs_gamma.csv",
    "fig7": "fig7_pc_vs_bs.csv",
    "fig8": "fig8_success_vs_bs.csv",
    "fig9": "fig9_throughput_vs_fc.csv",
    "fig10": "fig10_throughput_vs_lmtm.csv",
}


def write_montecarlo(res: MonteCarloResult, out_dir, fmt: str = "csv") -> list[Path]:
    out_dir = Path(out_dir)
    tag = {"cfg_hash": res.cfg_hash, "seed": res.config.seed}
    paths = []
    dur, pc = [], []
    for s in res.config.schemes:
        dur += res.duration_cdf(s).rows("trip_duration_s")
        pc += res.pc_cdf(s).rows("P_c")
    if fmt == "csv":
        for name, rows in (("fig4", dur), ("fig5", pc)):
            p = out_dir / FIG_FILES[name]
            write_csv(p, rows, ["scheme", "metric", "value", "cdf"], tag)
            paths.append(p)
        p = out_dir / "trials.csv"
        write_csv(p, [m.to_dict() for m in res.metrics], None, tag)
        paths.append(p)
    p = out_dir / "montecarlo_summary.json"
    doc = {**tag, "config": res.config.to_dict(), "summary": res.summary()}
    if fmt == "json":
        doc["duration_cdf"] = dur
        doc["pc_cdf"] = pc
    write_json(p, doc)
    paths.append(p)
    return paths


def write_sweep(rows: list[dict], axis: str, out_dir, cfg_hash: str, seed: int, fmt: str = "csv") -> list[Path]:
    out_dir = Path(out_dir)
    tag = {"cfg_hash": cfg_hash, "seed": seed}
    paths = []
    if fmt == "json":
        p = out_dir / f"sweep_{axis}.json"
        write_json(p, {**tag, "axis": axis, "rows": rows})
        return [p]
    if axis == "gamma":
        cols = ["axis", "value", "scheme", "trials", "success_pct", "mean_P_c", "routed_pct", "fallback_pct", "mean_duration"]
        p = out_dir / FIG_FILES["fig6"]
        write_csv(p, rows, cols, tag)
        paths.append(p)
    elif axis == "bs_count":
        cols = ["axis", "value", "scheme", "trials", "mean_P_c", "success_pct", "routed_pct", "mean_duration"]
        for fig in ("fig7", "fig8"):
            p = out_dir / FIG_FILES[fig]
            write_csv(p, rows, cols, tag)
            paths.append(p)
    else:
        cols = ["axis", "value", "alpha", "f_c", "lambda_m_T_m", "policy", "throughput_av_s", "throughput_av_min"]
        name = {"f_c": FIG_FILES["fig9"], "lambda_m_T_m": FIG_FILES["fig10"], "alpha": "throughput_vs_alpha.csv"}[axis]
        p = out_dir / name
        write_csv(p, rows, cols, tag)
        paths.append(p)
    p = out_dir / f"sweep_{axis}_summary.json"
    write_json(p, {**tag, "axis": axis, "rows": len(rows)})
    paths.append(p)
    return paths
