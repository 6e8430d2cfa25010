"""Regenerate tests/data/golden_route.json with the brute-force oracle.

    python3 scripts/make_golden_route.py

The CLI test checks that ``ccav route --scheme two-layer`` on the corridor
fixture reproduces this route exactly.
"""
import json
from pathlib import Path

from ccav.cli import _cells, _scenario
from ccav.config import load_config
from ccav.routing import oracle_constrained_shortest

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def main():
    cfg = load_config(DATA / "corridor.json")
    tc, net, stations, esm = _scenario(cfg)
    src, dst = net.corner_nodes()
    route = oracle_constrained_shortest(net, _cells(tc, net, stations, esm), esm, src, dst)
    doc = route.to_dict(esm)
    keep = {k: doc[k] for k in ("source", "destination", "total_time", "traversals")}
    (DATA / "golden_route.json").write_text(json.dumps(keep, indent=1) + "\n")
    print(f"{len(route.traversals)} traversals, {route.total_time:.6f} s")


if __name__ == "__main__":
    main()
