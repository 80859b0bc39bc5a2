"""
Travel times in supercritical site percolation on Z³.

A site is open with probability p and closed otherwise; the travel time
between two sites is the least number of closed sites on a nearest-neighbour
path joining them. The package samples configurations on boxes
Λ(n) = [-n, n]³, computes exact travel times, builds the onion layers,
quarter squares and thickened spherical triangles used by the waypoint walks,
checks the events that make those walks cheap, and runs seeded Monte Carlo
experiments on the tails and the (ln n)² scaling of the maximum.
"""

from .clusters import (
    ClusterLayers,
    onion_layers,
    open_cluster,
    reaches_boundary,
    reaches_boundary_sampled,
)
from .events import (
    EventReport,
    Violation,
    check_event_E,
    check_event_F,
    recheck,
    travel_E,
    travel_F,
)
from .geometry import (
    QuarterSquare,
    ThickSet,
    TriangleIndex,
    all_triangles,
    canonicalize_direction,
    contraction_radius,
    coverage_check,
    coverage_witness,
    longest_arc,
    max_dot_over_triangle,
    quarter_square,
    quarter_squares,
    thick_set_diameter,
    thickened_triangle,
    triangle_distance,
)
from .lattice import (
    BallSpec,
    BoxSpec,
    Configuration,
    Site,
    SiteSet,
    admissible_radii,
    box,
    inner_boundary,
    load_configuration,
    mix_seed,
    outer_boundary,
    sample_configuration,
    save_configuration,
)
from .montecarlo import (
    ExperimentReport,
    coverage_scan,
    estimate_theta,
    scaling_scan,
    tail_exit,
    tail_square,
)
from .traveltime import (
    UNREACHABLE,
    DistanceField,
    TravelResult,
    cluster_index,
    path_cost,
    travel_field,
    travel_to_set,
)
from .walks import (
    Leg,
    WalkBudget,
    WalkTrace,
    cube_walk,
    sphere_walk,
    theorem_path,
)

__version__ = "0.1.0"
