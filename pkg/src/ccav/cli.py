"""Command-line driver: ``ccav {cells,route,montecarlo,sweep,balance}``.

Exit codes: 0 ok, 2 bad configuration or arguments, 3 no feasible route.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, traffic
from .config import ConfigError, load_config, load_document
from .io import atomic_write_text, config_hash, write_csv, write_json
from .net import assign_esm
from .radio import compute_cells
from .routing import (
    NoRoute,
    greedy_route_cc,
    greedy_route_no_cc,
    shortest_time_route,
    two_layer_route,
)
from .routing.baselines import covered_segments
from .sim import (
    ROUTING_AXES,
    TRAFFIC_AXES,
    TrialConfig,
    run_monte_carlo,
    simulate_trip,
    sweep_routing,
    sweep_traffic,
    write_montecarlo,
    write_sweep,
)

log = logging.getLogger("ccav")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOROUTE = 3

_GLOBAL_DEFAULTS = {"config": None, "seed": None, "out": "out", "format": "csv", "preset": "desk"}


def _global_flags(parser, top=False):
    # on subparsers the defaults are suppressed so a flag given before the
    # subcommand is not clobbered by the subparser's own default
    d = (lambda k: _GLOBAL_DEFAULTS[k]) if top else (lambda k: argparse.SUPPRESS)
    parser.add_argument("--config", default=d("config"), help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=d("seed"), help="override the config seed")
    parser.add_argument("--out", default=d("out"), help="output directory (default: out)")
    parser.add_argument("--format", choices=("csv", "json"), default=d("format"))
    parser.add_argument("--preset", choices=("desk", "paper"), default=d("preset"))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccav", description="Communication-constrained AV routing and traffic control.")
    p.add_argument("--version", action="version", version=f"ccav {__version__}")
    _global_flags(p, top=True)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cells", help="compute the gamma-rate cells of every BS")
    _global_flags(c)
    c.add_argument("--gamma", type=float, help="rate threshold in Mbps")

    r = sub.add_parser("route", help="route one trip with one scheme")
    _global_flags(r)
    r.add_argument("--src", type=int, help="source intersection (default: south-west corner)")
    r.add_argument("--dst", type=int, help="destination intersection (default: north-east corner)")
    r.add_argument("--scheme", default="two-layer", choices=("two-layer", "greedy", "greedy-cc", "shortest-time"))
    r.add_argument("--gamma", type=float, help="rate threshold in Mbps")

    m = sub.add_parser("montecarlo", help="trip duration / coverage CDFs over many ESM draws")
    _global_flags(m)
    m.add_argument("--trials", type=int)
    m.add_argument("--workers", type=int)

    s = sub.add_parser("sweep", help="summary rows along one parameter axis")
    _global_flags(s)
    s.add_argument("axis", choices=ROUTING_AXES + TRAFFIC_AXES)
    s.add_argument("--values", type=float, nargs="+", help="override the configured axis values")
    s.add_argument("--trials", type=int, help="trials per point (routing axes)")

    b = sub.add_parser("balance", help="spectrum balancing report")
    _global_flags(b)
    b.add_argument("--B0", type=float, help="total channels")
    b.add_argument("--policy", choices=("max_min", "max_total", "proportional"))
    b.add_argument("--incidence", help="road/cell incidence JSON (default: two-cell example)")
    return p


def _overrides(args) -> dict:
    o: dict = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if getattr(args, "gamma", None) is not None:
        o.setdefault("routing", {})["gamma"] = args.gamma
    if getattr(args, "trials", None) is not None:
        key = "sweeps" if args.command == "sweep" else "montecarlo"
        o.setdefault(key, {})["trials"] = args.trials
    if getattr(args, "workers", None) is not None:
        o.setdefault("montecarlo", {})["workers"] = args.workers
    if getattr(args, "B0", None) is not None:
        o.setdefault("traffic", {})["B0"] = args.B0
    if getattr(args, "policy", None) is not None:
        o.setdefault("traffic", {})["policy"] = args.policy
    if getattr(args, "incidence", None) is not None:
        o.setdefault("traffic", {})["incidence"] = args.incidence
    return o


def _scenario(cfg):
    tc = TrialConfig.from_config(cfg)
    net = tc.network()
    stations = tc.stations(net)
    esm = assign_esm(net, tc.speed_set, int(np.random.SeedSequence([tc.seed, 2]).generate_state(1)[0]))
    return tc, net, stations, esm


def _cells(tc, net, stations, esm, gamma=None):
    return compute_cells(
        net, stations, tc.gamma if gamma is None else gamma, epsilon=tc.epsilon, model=tc.channel,
        esm=esm, sample_spacing=tc.sample_spacing,
    )


def _print_table(rows, cols, fh=None):
    fh = fh or sys.stdout
    cells = [[_cell(r.get(c)) for c in cols] for r in rows]
    width = [max(len(c), *(len(x[i]) for x in cells)) if cells else len(c) for i, c in enumerate(cols)]
    print("  ".join(c.rjust(w) for c, w in zip(cols, width)), file=fh)
    for x in cells:
        print("  ".join(v.rjust(w) for v, w in zip(x, width)), file=fh)


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else str(v)


# ---------------------------------------------------------------------------
# subcommands


def cmd_cells(args, cfg) -> int:
    tc, net, stations, esm = _scenario(cfg)
    cells = _cells(tc, net, stations, esm)
    covered = covered_segments(net, cells)
    tag = {"cfg_hash": config_hash(cfg), "seed": tc.seed}
    rows = [
        {
            "bs": c.bs,
            "x": stations[c.bs].position.x,
            "y": stations[c.bs].position.y,
            "covered_segments": len(c.covered_segments),
            "partial_segments": len(c.partially_covered_segments),
            "covered_intersections": len(c.covered_intersections),
        }
        for c in cells
    ]
    summary = {
        **tag,
        "gamma": tc.gamma,
        "cells": len(cells),
        "empty_cells": sum(c.is_empty for c in cells),
        "segments": net.n_segments,
        "segments_covered": int(covered.sum()),
        "coverage_pct": 100.0 * float(covered.mean()),
    }
    out = Path(args.out)
    write_json(out / "cells.json", {**summary, "per_bs": rows, "cells": [c.to_dict() for c in cells]})
    if args.format == "csv":
        write_csv(out / "cells_summary.csv", rows, None, tag)
    _print_table(rows, ["bs", "covered_segments", "partial_segments", "covered_intersections"])
    print(f"gamma {tc.gamma:g} Mbps: {summary['segments_covered']}/{net.n_segments} segments fully covered "
          f"({summary['coverage_pct']:.1f}%), {summary['empty_cells']} empty cells")
    return EXIT_OK


def cmd_route(args, cfg) -> int:
    tc, net, stations, esm = _scenario(cfg)
    corner_src, corner_dst = net.corner_nodes()
    src = corner_src if args.src is None else args.src
    dst = corner_dst if args.dst is None else args.dst
    for name, node in (("src", src), ("dst", dst)):
        if not 0 <= node < net.n_intersections:
            raise ConfigError(f"'--{name}' {node} is not an intersection (0..{net.n_intersections - 1})")
    if args.gamma is not None and args.scheme in ("shortest-time", "greedy"):
        log.warning("scheme %s ignores the rate threshold; --gamma only affects coverage accounting", args.scheme)
    walk_seed = int(np.random.SeedSequence([tc.seed, 3]).generate_state(1)[0])
    cells = _cells(tc, net, stations, esm) if args.scheme in ("two-layer", "greedy-cc") else None
    if args.scheme == "two-layer":
        recompute = (lambda g: _cells(tc, net, stations, esm, g)) if tc.fallback else None
        route = two_layer_route(
            net, cells, esm, src, dst, gamma=tc.gamma, gamma_floor=tc.gamma_floor,
            gamma_step=tc.gamma_step, recompute=recompute, max_paths=tc.max_paths,
        )
    elif args.scheme == "greedy-cc":
        route = greedy_route_cc(net, cells, esm, src, dst, tc.gamma, tc.max_segments, seed=walk_seed)
    elif args.scheme == "greedy":
        route = greedy_route_no_cc(net, esm, src, dst, seed=walk_seed)
    else:
        route = shortest_time_route(net, esm, src, dst)
    m = simulate_trip(route, esm, net, stations, tc.gamma, tc.epsilon, tc.channel)
    tag = {"cfg_hash": config_hash(cfg), "seed": tc.seed}
    metrics = {k: v for k, v in m.to_dict().items() if k not in ("trial", "routed")}
    out = Path(args.out)
    write_json(out / "route.json", {**tag, "route": route.to_dict(esm), "metrics": metrics})
    if args.format == "csv":
        atomic_write_text(out / "route.csv", route.to_csv(esm))
    print(f"{route.scheme}: {src} -> {dst}, {route.n_segments} pieces, {route.total_time:.3f} s, "
          f"P_c {m.P_c:.6f}, success {m.success}, gamma_used {route.gamma_used}")
    return EXIT_OK


def cmd_montecarlo(args, cfg) -> int:
    tc = TrialConfig.from_config(cfg)
    res = run_monte_carlo(tc, cfg)
    write_montecarlo(res, args.out, args.format)
    _print_table(res.summary(), ["scheme", "trials", "success_pct", "mean_P_c", "mean_duration", "fallback_pct"])
    return EXIT_OK


def _incidence(cfg, config_path):
    src = cfg["traffic"]["incidence"]
    tdd = traffic.TddConfig.from_dict(cfg["traffic"]["tdd"])
    if src is None:
        return traffic.two_cell_incidence(tdd)
    if isinstance(src, dict):
        doc = src
    else:
        path = Path(src)
        if not path.is_absolute() and config_path is not None and not path.exists():
            path = Path(config_path).parent / path
        doc = load_document(path)
    try:
        return traffic.incidence_from_dict({"tdd": cfg["traffic"]["tdd"], **doc})
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"'traffic.incidence' is malformed: {e}") from None


def cmd_sweep(args, cfg) -> int:
    axis = args.axis
    values = list(args.values) if args.values else list(cfg["sweeps"][axis])
    if values != sorted(values):
        raise ConfigError(f"'sweeps.{axis}' values must be sorted ascending")
    sw = cfg["sweeps"]
    if axis in ROUTING_AXES:
        tc = TrialConfig.from_config(cfg)
        tc = replace(tc, trials=int(sw["trials"]))
        if axis == "bs_count":
            tc = replace(tc, bs_rule=sw["bs_rule"])
            values = [int(v) for v in values]
        rows = sweep_routing(tc, axis, values)
        cols = ["value", "scheme", "success_pct", "mean_P_c", "mean_duration"]
    else:
        tdd = traffic.TddConfig.from_dict(cfg["traffic"]["tdd"])
        rows = sweep_traffic(
            axis, values, tdd, float(cfg["traffic"]["B0"]), alphas=sw["alpha"],
            incidence=_incidence(cfg, args.config), policy=cfg["traffic"]["policy"],
        )
        cols = ["value", "alpha", "policy", "throughput_av_min"]
    write_sweep(rows, axis, args.out, config_hash(cfg), int(cfg["seed"]), args.format)
    _print_table(rows, cols)
    return EXIT_OK


def cmd_balance(args, cfg) -> int:
    inc = _incidence(cfg, args.config)
    B0 = float(cfg["traffic"]["B0"])
    policy = cfg["traffic"]["policy"]
    v_opt = inc.optimal_speeds()
    alloc = traffic.balance_spectrum(inc, B0, policy, v_opt)
    eq = traffic.equal_split(inc, B0)
    eq_flows, eq_road, eq_total = traffic.road_throughput(eq, inc, v_opt)
    gain = alloc.total_throughput / eq_total - 1.0 if eq_total > 0 else float("inf")
    tag = {"cfg_hash": config_hash(cfg), "seed": int(cfg["seed"])}
    rows = [
        {**r, "v_opt": v_opt[r["cell"]], "equal_channels": eq[(r["cell"], r["road"])],
         "equal_flow": eq_flows[(r["cell"], r["road"])]}
        for r in alloc.to_rows()
    ]
    roads = [
        {"road": r, "F": alloc.road_flow[r], "F_av_min": 60.0 * alloc.road_flow[r],
         "equal_F": eq_road[r], "equal_F_av_min": 60.0 * eq_road[r]}
        for r in inc.roads
    ]
    summary = {
        **tag,
        "B0": B0,
        "policy": policy,
        "balanced_av_s": alloc.total_throughput,
        "balanced_av_min": 60.0 * alloc.total_throughput,
        "equal_split_av_s": eq_total,
        "equal_split_av_min": 60.0 * eq_total,
        "gain_pct": 100.0 * gain,
        "cell_channels": alloc.cell_channels,
        "infeasible_roads": list(alloc.infeasible_roads),
    }
    out = Path(args.out)
    if args.format == "csv":
        write_csv(out / "balance_allocation.csv", rows, None, tag)
        write_csv(out / "balance_roads.csv", roads, None, tag)
    write_json(out / "balance_summary.json", {**summary, "allocation": rows, "roads": roads})
    print("per-road flow F_j:")
    _print_table(roads, ["road", "F_av_min", "equal_F_av_min"])
    print("allocation:")
    _print_table(rows, ["cell", "road", "channels", "flow", "equal_channels"])
    print(f"balanced {summary['balanced_av_min']:.4g} AV/min vs equal split {summary['equal_split_av_min']:.4g} AV/min: "
          f"{summary['gain_pct']:+.1f}%")
    if alloc.infeasible_roads:
        log.warning("roads with no capacity: %s", ", ".join(map(str, alloc.infeasible_roads)))
    return EXIT_OK


COMMANDS = {
    "cells": cmd_cells,
    "route": cmd_route,
    "montecarlo": cmd_montecarlo,
    "sweep": cmd_sweep,
    "balance": cmd_balance,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="ccav: %(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    for k, v in _GLOBAL_DEFAULTS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    try:
        cfg = load_config(args.config, args.preset, _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        print(f"ccav: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NoRoute as e:
        print(f"ccav: no route: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NOROUTE


if __name__ == "__main__":
    sys.exit(main())
