"""STL mission planning for quad-rotor fleets.

Plans feasible fleet trajectories from Signal Temporal Logic mission
specifications by maximizing a smooth robustness measure over quintic
motion primitives; includes an energy-aware variant and an
event-triggered replanning simulator.
"""
from .config import Disturbance, PlannerConfig, ReplanSettings, TriggerConfig
from .mission import (
    Box,
    ConvexPolyhedron,
    DroneSpec,
    Mission,
    assign_targets,
    build_formula,
    load_scenario,
    save_scenario,
)
from .planner import (
    PlanResult,
    Problem,
    ValidationReport,
    build_problem,
    exact_validate,
    solve,
    solve_energy_aware,
)
from .replanner import (
    ExecutionLog,
    TriggerEvent,
    apply_disturbances,
    monitor,
    replan_segment,
    simulate_mission,
)
from .splines import (
    AxisState,
    AxisTrajectory,
    SplineSegment,
    evaluate,
    propagate,
    sample,
    segment_feasible,
    solve_boundary,
)
from .stl import (
    AffineHalfspace,
    Always,
    And,
    BoxMembership,
    Eventually,
    Not,
    Or,
    PairDistanceAtLeast,
    Pred,
    RegionAvoid,
    TimeGrid,
    Trace,
    Until,
    interval_to_indices,
    robustness,
    smooth_max,
    smooth_min,
    smooth_robustness,
    smooth_robustness_gradient,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
