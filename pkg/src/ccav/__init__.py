"""Communication-constrained routing and traffic control for autonomous vehicles."""
from .net import (
    EffectiveSpeedMap,
    Intersection,
    Point,
    RoadNetwork,
    Segment,
    assign_esm,
    edge_travel_time,
    generate_grid,
)
from .radio import (
    BaseStation,
    ChannelModel,
    CoreNode,
    GammaRateCell,
    cell_connectivity,
    compute_cells,
    compute_gamma_cell,
    coverage_radius,
    path_loss,
    place_base_stations,
    rate_quantile,
)

__version__ = "0.1.0"
