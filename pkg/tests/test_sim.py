import math
from dataclasses import replace

import numpy as np
import pytest

from ccav.io import read_csv
from ccav.net import Point, assign_esm, generate_grid
from ccav.radio import BaseStation, ChannelModel, compute_cells
from ccav.routing import NoRoute, shortest_time_route, two_layer_route
from ccav.sim import (
    SCHEMES,
    CdfSeries,
    TrialConfig,
    run_monte_carlo,
    simulate_trip,
    sweep,
    sweep_traffic,
    write_montecarlo,
    write_sweep,
)

from conftest import random_instance

SMALL = TrialConfig(avenues=6, streets=7, bs_count=4, gamma=60.0, trials=12, seed=3)


@pytest.fixture(scope="module")
def small_result():
    return run_monte_carlo(SMALL)


def test_cdf_validity(small_result):
    for s in SCHEMES:
        for cdf in (small_result.duration_cdf(s), small_result.pc_cdf(s)):
            if cdf.values.size == 0:
                continue
            assert np.all(np.diff(cdf.values) >= 0)
            assert np.all(np.diff(cdf.fractions) > 0)
            assert cdf.fractions[-1] == 1.0
            assert cdf.at(cdf.values[-1]) == 1.0
            assert cdf.at(cdf.values[0] - 1e-9) == 0.0


def test_cdf_step_is_right_continuous():
    c = CdfSeries.from_samples("x", [3.0, 1.0, 2.0, 2.0, math.nan, None])
    assert c.values.tolist() == [1.0, 2.0, 2.0, 3.0]
    assert c.at(2.0) == 0.75
    assert c.at(1.999) == 0.25
    assert c.at(10.0) == 1.0
    assert CdfSeries.from_samples("x", []).at(1.0) == 0.0


def test_metric_invariants(small_result):
    assert len(small_result.metrics) == SMALL.trials * len(SMALL.schemes)
    for m in small_result.metrics:
        assert 0.0 <= m.P_c <= 1.0
        if m.routed:
            assert m.covered_duration <= m.trip_duration * (1 + 1e-12)
        # success is exactly full coverage in quantile accounting
        assert m.success == (m.P_c == 1.0)


def test_shortest_time_never_slower(small_result):
    by = {}
    for m in small_result.metrics:
        by.setdefault(m.trial, {})[m.scheme] = m
    for row in by.values():
        st = row["shortest-time"].trip_duration
        for s, m in row.items():
            if m.routed:
                assert st <= m.trip_duration * (1 + 1e-12)


def test_monte_carlo_is_deterministic(small_result):
    again = run_monte_carlo(SMALL)
    assert [m.to_dict() for m in again.metrics] == [m.to_dict() for m in small_result.metrics]
    other = run_monte_carlo(replace(SMALL, seed=4))
    assert [m.trip_duration for m in other.metrics] != [m.trip_duration for m in small_result.metrics]


def test_worker_count_does_not_change_output(small_result):
    par = run_monte_carlo(replace(SMALL, workers=3))
    assert [m.to_dict() for m in par.metrics] == [m.to_dict() for m in small_result.metrics]


def test_csv_bytes_identical(tmp_path, small_result):
    a, b = tmp_path / "a", tmp_path / "b"
    write_montecarlo(small_result, a)
    write_montecarlo(run_monte_carlo(SMALL), b)
    for name in ("fig4_duration_cdf.csv", "fig5_pc_cdf.csv", "trials.csv", "montecarlo_summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_artifacts_embed_hash_and_seed(tmp_path, small_result):
    write_montecarlo(small_result, tmp_path)
    rows = read_csv(tmp_path / "fig4_duration_cdf.csv")
    assert rows and all(r["cfg_hash"] == small_result.cfg_hash and r["seed"] == "3" for r in rows)
    import json

    doc = json.loads((tmp_path / "montecarlo_summary.json").read_text())
    assert doc["cfg_hash"] == small_result.cfg_hash and doc["seed"] == 3


def test_json_format_embeds_cdfs(tmp_path, small_result):
    paths = write_montecarlo(small_result, tmp_path, fmt="json")
    assert [p.name for p in paths] == ["montecarlo_summary.json"]


def test_gamma_zero_single_trial():
    res = run_monte_carlo(replace(SMALL, gamma=0.0, trials=1))
    assert all(m.success for m in res.metrics)
    st = res.by_scheme("shortest-time")[0].trip_duration
    assert all(st <= m.trip_duration * (1 + 1e-12) for m in res.metrics)


def test_no_route_rows_do_not_abort():
    res = run_monte_carlo(replace(SMALL, gamma=1e4, trials=3, fallback=False))
    tl = res.by_scheme("two-layer")
    assert len(tl) == 3 and not any(m.routed or m.success for m in tl)
    assert all(m.routed for m in res.by_scheme("shortest-time"))
    summary = {r["scheme"]: r for r in res.summary()}
    assert summary["two-layer"]["success_pct"] == 0.0


def test_one_cell_with_margin_is_covered():
    net = generate_grid(3, 3, 250.0, 100.0)
    esm = assign_esm(net, (10.0, 20.0, 30.0), 0)
    bs = [BaseStation(0, Point(250.0, 100.0))]
    route = shortest_time_route(net, esm, 0, 8)
    m = simulate_trip(route, esm, net, bs, gamma=10.0)
    assert m.P_c == 1.0 and m.success


def test_no_coverage_gives_zero():
    net = generate_grid(3, 3, 250.0, 100.0)
    esm = assign_esm(net, (10.0, 20.0, 30.0), 0)
    route = shortest_time_route(net, esm, 0, 8)
    far = [BaseStation(0, Point(1e6, 1e6))]
    assert simulate_trip(route, esm, net, far, gamma=10.0).P_c == 0.0
    assert simulate_trip(route, esm, net, [], gamma=10.0).P_c == 0.0


def test_empty_route():
    net = generate_grid(3, 3, 250.0, 100.0)
    esm = assign_esm(net, (10.0, 20.0, 30.0), 0)
    m = simulate_trip(shortest_time_route(net, esm, 4, 4), esm, net, [BaseStation(0, Point(250.0, 100.0))], 10.0)
    assert m.trip_duration == 0.0


@pytest.mark.parametrize("seed", range(40))
def test_two_layer_route_is_fully_covered(seed):
    net, stations, esm, gamma = random_instance(seed)
    model = ChannelModel()
    cells = compute_cells(net, stations, gamma, esm=esm, model=model)
    src, dst = net.corner_nodes()
    try:
        route = two_layer_route(net, cells, esm, src, dst, gamma=gamma)
    except NoRoute:
        return
    m = simulate_trip(route, esm, net, stations, route.gamma_used, 0.01, model)
    assert m.success


def test_realized_accounting_is_seeded():
    c = replace(SMALL, accounting="realized", trials=3)
    a, b = run_monte_carlo(c), run_monte_carlo(c)
    assert [m.P_c for m in a.metrics] == [m.P_c for m in b.metrics]
    assert all(0.0 <= m.P_c <= 1.0 for m in a.metrics)


def test_realized_needs_rng():
    net = generate_grid(3, 3, 250.0, 100.0)
    esm = assign_esm(net, (10.0,), 0)
    route = shortest_time_route(net, esm, 0, 8)
    with pytest.raises(ValueError):
        simulate_trip(route, esm, net, [BaseStation(0, Point(0.0, 0.0))], 10.0, accounting="realized")


def test_trial_config_rejects():
    with pytest.raises(ValueError):
        TrialConfig(trials=0)
    with pytest.raises(ValueError):
        TrialConfig(schemes=("teleport",))
    with pytest.raises(ValueError):
        TrialConfig(endpoints="middle")


def test_routing_sweep_rows():
    rows = sweep(replace(SMALL, trials=3), "gamma", [30.0, 40.0, 55.0, 70.0])
    for s in SCHEMES:
        assert [r["value"] for r in rows if r["scheme"] == s] == [30.0, 40.0, 55.0, 70.0]
    with pytest.raises(ValueError):
        sweep(SMALL, "gamma", [70.0, 30.0])
    with pytest.raises(ValueError):
        sweep(SMALL, "colour", [1.0])


def test_traffic_sweep_rows_and_files(tmp_path):
    rows = sweep_traffic("f_c", [1e9, 2e9], alphas=[2.0, 4.0])
    assert len(rows) == 2 * 2 * 3
    paths = write_sweep(rows, "f_c", tmp_path, "h", 0)
    assert (tmp_path / "fig9_throughput_vs_fc.csv") in paths
    assert len(read_csv(tmp_path / "fig9_throughput_vs_fc.csv")) == 12
    # alpha is its own axis, so the alpha series collapses to one
    assert len(sweep_traffic("alpha", [2.0, 4.0], alphas=[2.0, 4.0])) == 2 * 3
