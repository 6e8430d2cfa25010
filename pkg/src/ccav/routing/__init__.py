from .baselines import covered_segments, greedy_route_cc, greedy_route_no_cc, shortest_time_route
from .oracle import oracle_constrained_shortest
from .two_layer import (
    KeyGraph,
    TopLayerGraph,
    build_top_layer,
    enumerate_top_paths,
    intra_cell_times,
    two_layer_route,
)
from .types import DestinationUncovered, NoRoute, Route, SourceUncovered, Traversal

__all__ = [
    "DestinationUncovered",
    "KeyGraph",
    "NoRoute",
    "Route",
    "SourceUncovered",
    "TopLayerGraph",
    "Traversal",
    "build_top_layer",
    "covered_segments",
    "enumerate_top_paths",
    "greedy_route_cc",
    "greedy_route_no_cc",
    "intra_cell_times",
    "oracle_constrained_shortest",
    "shortest_time_route",
    "two_layer_route",
]
