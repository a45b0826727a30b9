"""Multi-lane formation control for connected vehicles at lane drops.

The package is layered bottom-up: `grid` defines the moving slot
coordinate system and formation layouts, `assignment` matches vehicles
to layout cells and routes them, `pathmap` resolves the synchronized
cell table, `trajectory` turns cell rows into road-frame Bezier
segments, `control` supplies speed profiles and the tracking
controller, and `scenario` plus `cli` run the lane-drop corridor
experiment end to end.
"""

from .assignment import (
    ConflictKind,
    GroupPlan,
    classify_conflict,
    conflict_free_assignment,
    min_cost_assignment,
    shortest_path,
)
from .control import (
    MAX_STEER,
    MotionLimits,
    SpeedPlan,
    VehicleState,
    preview_steer,
    replan_speed_profile,
    road_heading,
    solve_speed_profile,
    step_bicycle,
)
from .errors import (
    ConfigError,
    GeometryError,
    InfeasibleSegmentError,
    LaneformError,
    MalformedInstanceError,
    ResolutionBudgetError,
    SimulationError,
    TrackingLostError,
)
from .fuel import FuelParams, fuel_rate, liters_per_100km
from .grid import (
    FormationShape,
    GridPos,
    cost_matrix,
    formation_targets,
    grid_distance,
    is_valid_pos,
    is_valid_step,
)
from .idm import IdmParams, gap_acceptable, idm_accel
from .pathmap import (
    PathTable,
    ResolveEvent,
    TableViolation,
    build_table,
    parse_table,
    resolve_table,
    resolve_table_events,
    serialize_table,
    verify_table,
)
from .scenario import (
    CASE_IDS,
    CaseResult,
    Episode,
    RunResult,
    ScenarioConfig,
    build_arrivals,
    demo_case,
    load_config,
    metrics_to_json,
    run_scenario,
    write_case_artifacts,
    write_heatmap_csv,
    write_metrics_json,
    write_run_log_csv,
    write_summary_csv,
)
from .trajectory import (
    BezierSegment,
    RoadPoint,
    cell_to_road,
    compile_row,
    dump_trajectory_csv,
    eval_segment,
    make_segment,
)

__version__ = "0.1.0"

__all__ = [
    "BezierSegment",
    "CASE_IDS",
    "CaseResult",
    "ConfigError",
    "ConflictKind",
    "Episode",
    "FormationShape",
    "FuelParams",
    "GeometryError",
    "GridPos",
    "GroupPlan",
    "IdmParams",
    "InfeasibleSegmentError",
    "LaneformError",
    "MAX_STEER",
    "MalformedInstanceError",
    "MotionLimits",
    "PathTable",
    "ResolutionBudgetError",
    "ResolveEvent",
    "RoadPoint",
    "RunResult",
    "ScenarioConfig",
    "SimulationError",
    "SpeedPlan",
    "TableViolation",
    "TrackingLostError",
    "VehicleState",
    "build_arrivals",
    "build_table",
    "cell_to_road",
    "classify_conflict",
    "compile_row",
    "conflict_free_assignment",
    "cost_matrix",
    "demo_case",
    "dump_trajectory_csv",
    "eval_segment",
    "formation_targets",
    "fuel_rate",
    "gap_acceptable",
    "grid_distance",
    "idm_accel",
    "is_valid_pos",
    "is_valid_step",
    "liters_per_100km",
    "load_config",
    "make_segment",
    "metrics_to_json",
    "min_cost_assignment",
    "parse_table",
    "preview_steer",
    "replan_speed_profile",
    "resolve_table",
    "resolve_table_events",
    "road_heading",
    "run_scenario",
    "serialize_table",
    "solve_speed_profile",
    "step_bicycle",
    "verify_table",
    "write_case_artifacts",
    "write_heatmap_csv",
    "write_metrics_json",
    "write_run_log_csv",
    "write_summary_csv",
]
