import math
from dataclasses import replace

import numpy as np
import pytest

from ccav.traffic import (
    CellGeometry,
    CellSpec,
    RoadCellIncidence,
    TddConfig,
    balance_spectrum,
    cell_sum_flow,
    equal_split,
    incidence_from_dict,
    n_controllable,
    n_controllable_grid,
    n_controllable_one_channel,
    optimal_speed,
    optimal_speed_closed_form,
    policy_throughputs,
    road_throughput,
    shift_balance,
    slot_pack_count,
    speed_grid_check,
    two_cell_incidence,
)

# default TddConfig: pilot fraction p(v) = v/300, message load q = 0.25, L = 10
TDD = TddConfig()


def random_tdd(rng):
    return TddConfig(
        T_pilot=float(rng.choice([1e-4, 2e-4, 5e-4, 1e-3])),
        lambda_m=float(rng.uniform(1.0, 80.0)),
        L=int(rng.integers(1, 21)),
        alpha=float(rng.uniform(1.5, 6.0)),
        f_c=float(rng.uniform(0.5e9, 6e9)),
    )


def random_incidence(rng):
    n_cells = int(rng.integers(1, 6))
    cells = {}
    for i in range(n_cells):
        lanes = int(rng.integers(2, 9))
        cells[f"c{i}"] = CellSpec(CellGeometry(lanes, float(rng.uniform(2.5, 4.0)), float(rng.uniform(5e3, 5e4))), random_tdd(rng))
    roads, lanes = {}, {}
    for j in range(int(rng.integers(1, 5))):
        k = int(rng.integers(1, n_cells + 1))
        seq = tuple(rng.choice(list(cells), k, replace=False))
        roads[f"r{j}"] = seq
        for c in seq:
            lanes[(c, f"r{j}")] = int(rng.integers(1, cells[c].geometry.lanes + 1))
    return RoadCellIncidence(cells, roads, lanes)


# --- controllable AVs per channel --------------------------------------------

@pytest.mark.parametrize("v,expected", [(22.5, 10), (45.0, 5), (225.0, 1), (250.0, 0), (1e4, 0)])
def test_n_controllable_examples(v, expected):
    assert n_controllable_one_channel(v, TDD) == expected


def test_n_at_zero_speed_is_capped():
    # no pilots: only the message groups bound N, 4 groups of L at load 0.25
    assert n_controllable_one_channel(0.0, TDD) == 40
    assert n_controllable_one_channel(0.0, replace(TDD, lambda_m=1.0)) == TDD.cap == 100
    assert n_controllable_one_channel(0.0, replace(TDD, max_avs_per_channel=7)) == 7
    with pytest.raises(ValueError):
        n_controllable_one_channel(-1.0, TDD)


@pytest.mark.parametrize("B,expected", [(0, 0), (1, 10), (3, 30), (1.5, 15)])
def test_n_controllable_channels(B, expected):
    assert n_controllable(22.5, B, TDD) == expected


def test_n_controllable_rejects_negative_channels():
    with pytest.raises(ValueError):
        n_controllable(22.5, -1, TDD)


@pytest.mark.parametrize("seed", range(20))
def test_channel_linearity(seed):
    rng = np.random.default_rng(seed)
    tdd, v = random_tdd(rng), float(rng.uniform(0.1, 60))
    b1, b2 = (int(x) for x in rng.integers(0, 8, 2))
    assert n_controllable(v, b1 + b2, tdd) == n_controllable(v, b1, tdd) + n_controllable(v, b2, tdd)


@pytest.mark.parametrize("seed", range(30))
def test_n_matches_slot_packer_and_budget(seed):
    rng = np.random.default_rng(seed)
    tdd = random_tdd(rng)
    for v in rng.uniform(0.01, 80.0, 50):
        n = n_controllable_one_channel(v, tdd)
        assert n == slot_pack_count(v, tdd)
        p = float(tdd.pilot_fraction(v))
        assert n * p + math.ceil(n / tdd.L) * tdd.load <= 1 + 1e-9
        if n < tdd.cap:
            assert (n + 1) * p + math.ceil((n + 1) / tdd.L) * tdd.load > 1 + 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_n_matches_closed_form_branches(seed):
    # jL < N <= (j+1)L  =>  N = min((j+1)L, floor((1 - (j+1)q)/p)); N = iL  =>  N <= floor(1/(p + q/L))
    rng = np.random.default_rng(seed)
    tdd = random_tdd(rng)
    q, L = tdd.load, tdd.L
    for v in rng.uniform(0.5, 60.0, 200):
        n = n_controllable_one_channel(v, tdd)
        if n == 0 or n == tdd.cap:
            continue
        p = float(tdd.pilot_fraction(v))
        j = (n - 1) // L
        room = (1 - (j + 1) * q) / p
        if abs(room - round(room)) < 1e-6:
            continue
        assert n == min((j + 1) * L, math.floor(room))
        if n % L == 0:
            assert n <= math.floor(1 / (p + q / L) + 1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_n_non_increasing_in_speed(seed):
    tdd = random_tdd(np.random.default_rng(seed))
    n = n_controllable_grid(np.linspace(0.0, 100.0, 5001), tdd)
    assert np.all(np.diff(n) <= 0)


def test_grid_matches_scalar():
    rng = np.random.default_rng(3)
    tdd = random_tdd(rng)
    v = rng.uniform(0, 80, 300)
    assert n_controllable_grid(v, tdd).tolist() == [n_controllable_one_channel(x, tdd) for x in v]


# --- cell flow and optimal speed ----------------------------------------------

def test_cell_sum_flow_examples():
    g = CellGeometry(2, 3.0, 12_000.0)
    assert cell_sum_flow(g, 10, 22.5) == pytest.approx(0.1125, rel=1e-12)
    assert cell_sum_flow(g, 0, 22.5) == 0.0
    assert cell_sum_flow(g, 10, 0.0) == 0.0
    assert cell_sum_flow(g, 20, 22.5) == pytest.approx(2 * cell_sum_flow(g, 10, 22.5), rel=1e-12)


def test_cell_sum_flow_spacing_guard():
    with pytest.warns(UserWarning, match="spacing"):
        cell_sum_flow(CellGeometry(2, 3.0, 100.0), 10, 20.0, min_spacing=5.0)


def test_cell_geometry_rejects():
    with pytest.raises(ValueError):
        CellGeometry(0, 3.0, 100.0)


def test_optimal_speed_reference():
    v, n, f = optimal_speed(TDD, verify=True)
    assert v == pytest.approx(22.5, rel=1e-12)
    assert n == 10
    assert f == pytest.approx(225.0, rel=1e-12)


def test_optimal_speed_limit_clamp():
    v, n, _ = optimal_speed(replace(TDD, v_l=10.0))
    assert v == 10.0
    assert n == n_controllable_one_channel(10.0, TDD)


def test_doubling_L_halves_speed():
    assert optimal_speed_closed_form(replace(TDD, L=20)) == pytest.approx(optimal_speed_closed_form(TDD) / 2, rel=1e-12)


def test_grid_check_reference():
    r = speed_grid_check(TDD)
    assert r.ok
    assert r.v_star == pytest.approx(22.5)
    assert r.best_flow == pytest.approx(225.0)
    assert abs(r.located_v - 22.5) <= 0.01 + 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_grid_check_random(seed):
    tdd = random_tdd(np.random.default_rng(100 + seed))
    assert speed_grid_check(tdd, step=0.01).ok


def test_tdd_validation():
    with pytest.raises(ValueError):
        TddConfig(L=0)
    with pytest.raises(ValueError):
        TddConfig(alpha=1.0)
    with pytest.raises(ValueError):
        TddConfig(lambda_m=100.0)  # load 1
    with pytest.raises(ValueError):
        TddConfig(T_m=1.5e-4)
    with pytest.raises(KeyError):
        TddConfig.from_dict({"bogus": 1})


def test_tdd_round_trip():
    t = TddConfig.from_dict({"load": 0.3, "v_l": None})
    assert t.load == pytest.approx(0.3)
    assert TddConfig.from_dict(t.to_dict()) == t


# --- spectrum balancing -------------------------------------------------------

def test_two_cell_balanced_allocation():
    inc = two_cell_incidence()
    alloc = balance_spectrum(inc, 10.0)
    ch = alloc.cell_channels
    assert ch["green"] == pytest.approx(20 / 3, rel=1e-12)
    assert ch["red"] == pytest.approx(10 / 3, rel=1e-12)
    assert alloc.road_flow["horizontal"] == pytest.approx(0.375, rel=1e-12)
    assert alloc.road_flow["vertical"] == pytest.approx(0.375, rel=1e-12)
    assert alloc.total_throughput == pytest.approx(0.75, rel=1e-12)


def test_two_cell_gain_over_equal_split():
    inc = two_cell_incidence()
    _, road, eq = road_throughput(equal_split(inc, 10.0), inc)
    assert eq == pytest.approx(0.5625, rel=1e-12)
    assert road["horizontal"] == pytest.approx(0.28125, rel=1e-12)
    assert balance_spectrum(inc, 10.0).total_throughput / eq == pytest.approx(4 / 3, rel=1e-12)


def test_single_road_single_cell_gets_everything():
    cells = {"a": CellSpec(CellGeometry(2, 3.0, 10_000.0))}
    inc = RoadCellIncidence(cells, {"r": ("a",)}, {("a", "r"): 2})
    assert balance_spectrum(inc, 7.0).B[("a", "r")] == pytest.approx(7.0)


def test_road_through_identical_cells_splits_equally():
    spec = CellSpec(CellGeometry(2, 3.0, 10_000.0))
    inc = RoadCellIncidence({"a": spec, "b": spec}, {"r": ("a", "b")}, {("a", "r"): 2, ("b", "r"): 2})
    B = balance_spectrum(inc, 6.0).B
    assert B[("a", "r")] == pytest.approx(3.0)
    assert B[("b", "r")] == pytest.approx(3.0)


def test_zero_channel_cell_zeroes_road():
    inc = two_cell_incidence()
    B = balance_spectrum(inc, 10.0).B
    B[("red", "horizontal")] = 0.0
    _, road, _ = road_throughput(B, inc)
    assert road["horizontal"] == 0.0
    assert road["vertical"] > 0


def test_infeasible_road_is_reported():
    inc = two_cell_incidence()
    dead = replace(inc.cells["red"], tdd=replace(TDD, v_l=1e-9, lambda_m=99.0))  # load 0.99, speed ~0
    inc = replace(inc, cells={**inc.cells, "red": dead})
    # a positive speed with almost no room gives zero AVs per channel
    alloc = balance_spectrum(inc, 10.0, speeds={"red": 30.0, "green": 22.5})
    assert alloc.infeasible_roads == ("horizontal",)
    assert alloc.B[("green", "horizontal")] == 0.0
    assert alloc.B[("green", "vertical")] == pytest.approx(10.0)


def test_balance_rejects():
    with pytest.raises(ValueError):
        balance_spectrum(two_cell_incidence(), 0.0)
    with pytest.raises(ValueError):
        balance_spectrum(two_cell_incidence(), 1.0, policy="nope")


@pytest.mark.parametrize("seed", range(100))
def test_balance_certificate_random_incidence(seed):
    rng = np.random.default_rng(seed)
    inc = random_incidence(rng)
    B0 = float(rng.uniform(1.0, 50.0))
    alloc = balance_spectrum(inc, B0)
    assert sum(alloc.B.values()) == pytest.approx(B0, rel=1e-12)
    a = inc.coefficients()
    for r, seq in inc.roads.items():
        f = [alloc.flows[(c, r)] for c in seq]
        assert max(f) - min(f) <= 1e-9 * max(f)
        if len(seq) < 2:
            continue
        # moving any channel mass between two cells of the road lowers its bottleneck
        for _ in range(5):
            i, j = rng.choice(len(seq), 2, replace=False)
            eps = float(rng.uniform(1e-6, 1e-2)) * alloc.B[(seq[i], r)]
            B = dict(alloc.B)
            B[(seq[i], r)] -= eps
            B[(seq[j], r)] += eps
            _, road, _ = road_throughput(B, inc, coeffs=a)
            assert road[r] < alloc.road_flow[r]


@pytest.mark.parametrize("seed", range(20))
def test_shift_balance_agrees_with_closed_form(seed):
    rng = np.random.default_rng(seed)
    inc = random_incidence(rng)
    alloc = balance_spectrum(inc, 20.0)
    start = {}
    for r, seq in inc.roads.items():
        w = rng.dirichlet(np.ones(len(seq)))
        tot = sum(alloc.B[(c, r)] for c in seq)
        for c, x in zip(seq, w):
            start[(c, r)] = tot * x
    out = shift_balance(inc, start)
    for k in inc.pairs:
        assert out[k] == pytest.approx(alloc.B[k], rel=1e-9, abs=1e-12)


def test_pareto_random_search_two_cell():
    inc = two_cell_incidence()
    bal = balance_spectrum(inc, 10.0)
    a = inc.coefficients()
    keys = [("red", "horizontal"), ("green", "horizontal"), ("green", "vertical")]
    rng = np.random.default_rng(0)
    B = 10.0 * rng.dirichlet(np.ones(3), 100_000)
    fh = np.minimum(a[keys[0]] * B[:, 0], a[keys[1]] * B[:, 1])
    fv = a[keys[2]] * B[:, 2]
    tol = 1e-12
    dominated = (fh >= bal.road_flow["horizontal"] - tol) & (fv >= bal.road_flow["vertical"] - tol)
    assert not np.any(dominated & (fh + fv > bal.total_throughput + tol))


def test_policy_ordering():
    for seed in range(30):
        inc = random_incidence(np.random.default_rng(seed))
        t = {p: balance_spectrum(inc, 10.0, p).total_throughput for p in ("max_min", "proportional", "max_total")}
        assert t["max_min"] <= t["proportional"] * (1 + 1e-12)
        assert t["proportional"] <= t["max_total"] * (1 + 1e-12)


def test_max_min_equalizes_roads():
    inc = random_incidence(np.random.default_rng(5))
    flows = list(balance_spectrum(inc, 10.0).road_flow.values())
    assert max(flows) - min(flows) <= 1e-9 * max(flows)


def test_policy_throughputs_two_cell():
    tp = policy_throughputs(two_cell_incidence(), 10.0)
    assert tp["lemma12"] == pytest.approx(0.75, rel=1e-12)
    assert tp["lemma1"] == pytest.approx(0.5625, rel=1e-12)
    # v*/2 = 11.25 m/s: p = 0.0375, N = 13 (13p + 2q = 0.9875, 14 overflows)
    assert n_controllable_one_channel(11.25, TDD) == 13
    assert tp["naive"] == pytest.approx(0.5625 * 13 * 11.25 / 225.0, rel=1e-12)
    assert tp["naive"] <= tp["lemma1"] <= tp["lemma12"]


@pytest.mark.parametrize("seed", range(20))
def test_policy_ordering_random(seed):
    # with several roads only the total-maximizing split is guaranteed to beat equal split
    rng = np.random.default_rng(seed)
    tp = policy_throughputs(random_incidence(rng), 10.0, policy="max_total")
    assert tp["naive"] <= tp["lemma1"] * (1 + 1e-12)
    assert tp["lemma1"] <= tp["lemma12"] * (1 + 1e-12)


@pytest.mark.parametrize("field_,values", [
    ("f_c", [0.5e9, 1e9, 2e9, 3.5e9, 6e9]),
    ("alpha", [1.5, 2.0, 3.0, 4.0, 6.0]),
    ("load", [0.05, 0.1, 0.25, 0.4, 0.6, 0.8]),
])
def test_throughput_monotone(field_, values):
    inc = two_cell_incidence()
    prev = None
    for x in values:
        t = TDD.with_load(x) if field_ == "load" else replace(TDD, **{field_: x})
        tp = policy_throughputs(inc.with_tdd(t), 10.0)
        if prev is not None:
            for k in tp:
                assert tp[k] <= prev[k] * (1 + 1e-12)
        prev = tp


def test_incidence_from_dict():
    doc = {
        "tdd": {"L": 10},
        "cells": {
            "red": {"lanes": 2, "lane_width": 3.0, "coverage": 12000.0},
            "green": {"lanes": 4, "lane_width": 3.0, "coverage": 24000.0},
        },
        "roads": {
            "horizontal": {"cells": ["red", "green"], "lanes": 2},
            "vertical": {"cells": ["green"], "lanes": {"green": 2}},
        },
    }
    inc = incidence_from_dict(doc)
    assert inc.coefficients() == pytest.approx(two_cell_incidence().coefficients(), rel=1e-12)


def test_incidence_validation():
    spec = CellSpec(CellGeometry(2, 3.0, 100.0))
    with pytest.raises(KeyError):
        RoadCellIncidence({"a": spec}, {"r": ("b",)}, {})
    with pytest.raises(KeyError):
        RoadCellIncidence({"a": spec}, {"r": ("a",)}, {})
    with pytest.raises(ValueError):
        RoadCellIncidence({"a": spec}, {}, {})
