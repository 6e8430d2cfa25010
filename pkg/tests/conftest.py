import os

import numpy as np
import pytest

from ccav import ChannelModel, assign_esm, generate_grid


@pytest.fixture
def grid55():
    return generate_grid(5, 5, 250.0, 100.0)


@pytest.fixture
def model():
    return ChannelModel()


def random_instance(seed, sizes=(5, 8), bs_range=(2, 5), gamma_range=(40.0, 120.0)):
    """Small seeded grid with random BSs and ESM, shared by the routing tests."""
    from ccav.radio import place_base_stations

    rng = np.random.default_rng(seed)
    a, s = (int(x) for x in rng.integers(sizes[0], sizes[1] + 1, 2))
    net = generate_grid(a, s, 250.0, 100.0)
    k = int(rng.integers(bs_range[0], bs_range[1] + 1))
    stations = place_base_stations(net, k, "random", seed=int(rng.integers(2**31)))
    esm = assign_esm(net, (10.0, 20.0, 30.0), int(rng.integers(2**31)))
    gamma = float(rng.uniform(*gamma_range))
    return net, stations, esm, gamma


def pytest_report_header(config):
    from ccav import _accel

    return f"ccav kernels: {_accel.backend()} (CCAV_NO_NUMBA={os.environ.get('CCAV_NO_NUMBA', '')!r})"


# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE: dict = {}


def record(criterion: str, ok: bool, detail: str, seconds: float):
    prev = ACCEPTANCE.get(criterion)
    if prev is not None:
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
        seconds += prev[2]
    ACCEPTANCE[criterion] = (ok, detail, seconds)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0])):
        ok, detail, sec = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({sec:.1f} s) {detail}")
