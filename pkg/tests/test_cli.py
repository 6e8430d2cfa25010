import json
import logging
from pathlib import Path

import pytest

from ccav import cli
from ccav.io import read_csv

DATA = Path(__file__).parent / "data"
CONFIGS = Path(__file__).parent.parent / "configs"
SMALL = ["--config", str(DATA / "corridor.json")]


def run(argv, tmp_path):
    return cli.main([*argv, "--out", str(tmp_path)])


def test_route_matches_golden(tmp_path, capsys):
    assert run([*SMALL, "route", "--scheme", "two-layer"], tmp_path) == 0
    got = json.loads((tmp_path / "route.json").read_text())
    gold = json.loads((DATA / "golden_route.json").read_text())
    r = got["route"]
    assert (r["source"], r["destination"]) == (gold["source"], gold["destination"])
    assert r["total_time"] == pytest.approx(gold["total_time"], rel=1e-12)
    assert len(r["traversals"]) == len(gold["traversals"])
    for a, b in zip(r["traversals"], gold["traversals"]):
        assert (a["segment"], a["direction"]) == (b["segment"], b["direction"])
        assert a["entry"] == pytest.approx(b["entry"], abs=1e-9)
        assert a["exit"] == pytest.approx(b["exit"], abs=1e-9)
    assert got["metrics"]["success"] is True
    assert (tmp_path / "route.csv").exists()
    assert "two-layer" in capsys.readouterr().out


def test_route_src_equals_dst(tmp_path):
    assert run([*SMALL, "route", "--src", "5", "--dst", "5"], tmp_path) == 0
    r = json.loads((tmp_path / "route.json").read_text())["route"]
    assert r["traversals"] == [] and r["total_time"] == 0.0


def test_gamma_ignored_warning(tmp_path, caplog):
    with caplog.at_level(logging.WARNING, logger="ccav"):
        assert run([*SMALL, "route", "--scheme", "shortest-time", "--gamma", "70"], tmp_path) == 0
    assert any("ignores the rate threshold" in r.message for r in caplog.records)


def test_no_route_exit_code(tmp_path, capsys):
    assert run([*SMALL, "route", "--gamma", "500"], tmp_path) == cli.EXIT_NOROUTE
    assert "no route" in capsys.readouterr().err
    assert not (tmp_path / "route.json").exists()


def test_config_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": {"avenuez": 3}}')
    assert run(["--config", str(bad), "cells"], tmp_path / "o") == cli.EXIT_CONFIG
    assert "grid.avenuez" in capsys.readouterr().err
    bad.write_text('{"grid": {\n  "avenues": 3,,\n}}')
    assert run(["--config", str(bad), "cells"], tmp_path / "o") == cli.EXIT_CONFIG
    assert ":2:" in capsys.readouterr().err
    assert run(["--config", str(tmp_path / "missing.json"), "cells"], tmp_path / "o") == cli.EXIT_CONFIG
    assert run([*SMALL, "route", "--src", "999"], tmp_path / "o") == cli.EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_cells_command(tmp_path, capsys):
    assert run([*SMALL, "cells"], tmp_path) == 0
    doc = json.loads((tmp_path / "cells.json").read_text())
    assert doc["cells"] and len(doc["per_bs"]) == 3
    assert len(read_csv(tmp_path / "cells_summary.csv")) == 3
    assert "segments fully covered" in capsys.readouterr().out


def test_cells_gamma_zero_and_unreachable(tmp_path):
    assert run([*SMALL, "cells", "--gamma", "0"], tmp_path / "a") == 0
    assert json.loads((tmp_path / "a" / "cells.json").read_text())["coverage_pct"] == 100.0
    assert run([*SMALL, "cells", "--gamma", "1e5"], tmp_path / "b") == 0
    doc = json.loads((tmp_path / "b" / "cells.json").read_text())
    assert doc["coverage_pct"] == 0.0 and doc["empty_cells"] == 3


def test_paper_preset_cell_count(tmp_path):
    assert cli.main(["--preset", "paper", "cells", "--out", str(tmp_path)]) == 0
    assert len(json.loads((tmp_path / "cells.json").read_text())["per_bs"]) == 21


def test_balance_two_cell(tmp_path, capsys):
    assert run(["--config", str(CONFIGS / "two_cell.json"), "balance"], tmp_path) == 0
    out = capsys.readouterr().out
    assert "+33.3%" in out
    doc = json.loads((tmp_path / "balance_summary.json").read_text())
    assert doc["gain_pct"] == pytest.approx(100 / 3, abs=0.01)
    assert doc["cell_channels"]["green"] == pytest.approx(2 * doc["cell_channels"]["red"], rel=1e-12)
    assert doc["balanced_av_min"] == pytest.approx(45.0, rel=1e-12)


def test_balance_default_incidence(tmp_path, capsys):
    assert cli.main(["balance", "--out", str(tmp_path)]) == 0
    assert "+33.3%" in capsys.readouterr().out


def test_sweep_gamma_rows(tmp_path):
    argv = [*SMALL, "sweep", "gamma", "--values", "30", "40", "55", "70", "--trials", "2"]
    assert run(argv, tmp_path) == 0
    rows = read_csv(tmp_path / "fig6_success_vs_gamma.csv")
    for s in ("two-layer", "greedy-cc", "greedy", "shortest-time"):
        assert [float(r["value"]) for r in rows if r["scheme"] == s] == [30.0, 40.0, 55.0, 70.0]


def test_sweep_traffic(tmp_path):
    assert run(["sweep", "lambda_m_T_m", "--values", "0.1", "0.5"], tmp_path) == 0
    rows = read_csv(tmp_path / "fig10_throughput_vs_lmtm.csv")
    assert len(rows) == 2 * 2 * 3  # values x alphas x policies


def test_sweep_unsorted_values(tmp_path):
    assert run(["sweep", "f_c", "--values", "2e9", "1e9"], tmp_path) == cli.EXIT_CONFIG


def test_montecarlo_byte_identical(tmp_path):
    argv = [*SMALL, "montecarlo", "--trials", "4"]
    assert run(argv, tmp_path / "a") == 0
    assert run(argv, tmp_path / "b") == 0
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_global_flags_after_subcommand(tmp_path):
    assert cli.main(["cells", *SMALL, "--seed", "1", "--format", "json", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "cells.json").read_text())["seed"] == 1
    assert not (tmp_path / "cells_summary.csv").exists()


def test_seed_changes_route(tmp_path):
    run([*SMALL, "route", "--scheme", "shortest-time"], tmp_path / "a")
    run([*SMALL, "--seed", "8", "route", "--scheme", "shortest-time"], tmp_path / "b")
    a = json.loads((tmp_path / "a" / "route.json").read_text())
    b = json.loads((tmp_path / "b" / "route.json").read_text())
    assert a["cfg_hash"] != b["cfg_hash"]
    assert a["route"]["total_time"] != b["route"]["total_time"]
