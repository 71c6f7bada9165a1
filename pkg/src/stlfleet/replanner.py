"""Event-triggered replanning simulator.

Runtime deviations are modeled as decaying position offsets added on top
of the active reference trajectory (the planner layer carries no vehicle
dynamics). At every event-check instant the deviation is compared with
the trigger threshold; on a trigger, the segment from the runtime state
to the next topic waypoint is re-optimized and spliced into the
reference, and the triggering disturbance is absorbed (the vehicle then
tracks the replanned segment exactly).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import PlannerConfig, TriggerConfig
from .errors import OutOfRangeError, ScenarioError
from .mission import Mission, assign_targets, build_formula
from .planner import (
    CONVERGED,
    INFEASIBLE,
    FreeDrone,
    KnotProblem,
    PlanResult,
    minimize_with_peak_rounds,
)
from .stl import (
    Always,
    And,
    BoxMembership,
    PairDistanceAtLeast,
    Pred,
    RegionAvoid,
    TimeGrid,
    Trace,
    robustness,
)


@dataclass
class TriggerEvent:
    drone: str
    time: float
    runtime_position: np.ndarray
    planned_position: np.ndarray
    deviation: float

    def __post_init__(self):
        self.runtime_position = np.asarray(self.runtime_position, dtype=float)
        self.planned_position = np.asarray(self.planned_position, dtype=float)


@dataclass
class ReplanRecord:
    drone: str
    window: tuple  # (t_trigger, t_topic) seconds
    status: str
    iterations: int
    window_robustness: float
    knots: np.ndarray | None = None


@dataclass
class ExecutionLog:
    executed: Trace
    reference: Trace
    triggers: list = field(default_factory=list)
    replans: list = field(default_factory=list)
    exact_robustness: float = 0.0


def _disturbance_offsets(disturbances, drone_ids, times):
    """Position and velocity offset arrays (q, N+1, 3) from the model."""
    q, n = len(drone_ids), len(times)
    dp = np.zeros((q, n, 3))
    dv = np.zeros((q, n, 3))
    for dist in disturbances:
        d = drone_ids.index(dist.drone)
        mask = times >= dist.onset - 1e-12
        decay = np.exp(-dist.decay * (times[mask] - dist.onset))
        dp[d, mask] += decay[:, None] * dist.offset_vector
        dv[d, mask] += -dist.decay * decay[:, None] * dist.offset_vector
    return dp, dv


def apply_disturbances(plan: PlanResult, disturbances) -> Trace:
    """Open-loop runtime trace: planned trajectory plus decaying offsets."""
    p, v, _ = plan.trace_arrays()
    times = plan.grid.times()
    for dist in disturbances:
        if dist.onset > plan.grid.horizon:
            raise OutOfRangeError(f"disturbance onset {dist.onset} past the horizon")
    dp, dv = _disturbance_offsets(disturbances, plan.drone_ids, times)
    return Trace(plan.grid, p + dp, v + dv)


def _event_indices(grid: TimeGrid, config: TriggerConfig):
    m = round(config.event_period / grid.sample_period)
    return list(range(0, grid.count, m))


def _topic_indices(grid: TimeGrid, config: TriggerConfig):
    m = round(config.topic_period / grid.sample_period)
    return list(range(0, grid.count, m))


def monitor(runtime: Trace, plan: PlanResult, config: TriggerConfig) -> list:
    """Trigger events where the deviation from the plan exceeds eta.

    After a trigger the replanning window is pending until the next topic
    instant; checks inside a pending window are skipped.
    """
    config.validate(plan.grid.sample_period)
    if runtime.grid != plan.grid:
        raise ScenarioError("runtime trace and plan are on different grids")
    ref_p, _, _ = plan.trace_arrays()
    times = plan.grid.times()
    topic = [times[i] for i in _topic_indices(plan.grid, config)]
    events = []
    pending_until = {d: -math.inf for d in plan.drone_ids}
    for i in _event_indices(plan.grid, config):
        t = times[i]
        for d, drone_id in enumerate(plan.drone_ids):
            if t < pending_until[drone_id]:
                continue
            dev = float(np.linalg.norm(runtime.positions[d, i] - ref_p[d, i]))
            if dev > config.eta:
                events.append(
                    TriggerEvent(drone_id, float(t), runtime.positions[d, i], ref_p[d, i], dev)
                )
                later = [tt for tt in topic if tt > t + 1e-12]
                pending_until[drone_id] = later[0] if later else math.inf
    return events


def _window_segments(n_samples: int, sample_period: float, knot_period: float) -> int:
    """Segment count tiling the window grid, closest to the knot period."""
    target = knot_period / sample_period
    divisors = [k for k in range(2, n_samples + 1) if n_samples % k == 0]
    if not divisors:
        raise ScenarioError("replanning window is too short to split into segments")
    return min(divisors, key=lambda k: abs(n_samples / k - target))


def _window_formula(mission: Mission, drone_idx: int, horizon: float):
    conjuncts = [
        Always((0.0, horizon), Pred(BoxMembership.from_region(drone_idx, mission.workspace)))
    ]
    for obstacle in mission.obstacles:
        conjuncts.append(
            Always((0.0, horizon), Pred(RegionAvoid.from_region(drone_idx, obstacle)))
        )
    for h in range(len(mission.drones)):
        if h != drone_idx:
            conjuncts.append(
                Always(
                    (0.0, horizon),
                    Pred(PairDistanceAtLeast(drone_idx, h, mission.delta_min)),
                )
            )
    return And(conjuncts)


def _replan_on_reference(
    ref_arrays,
    mission: Mission,
    drone_id: str,
    state,
    window,
    config: PlannerConfig,
):
    """Re-optimize one drone's segment from `state` to the reference state
    at the window end; other drones follow the reference unchanged."""
    ref_p, ref_v, ref_a = ref_arrays
    grid = TimeGrid.from_horizon(mission.horizon, config.sample_period)
    t0, t1 = window
    i0, i1 = grid.index_of(t0), grid.index_of(t1)
    n = i1 - i0
    if n < 2:
        raise ScenarioError("replanning window must span at least two samples")
    drone_idx = mission.drone_index(drone_id)
    seg_count = _window_segments(n, config.sample_period, config.knot_period)
    m = n // seg_count
    seg_duration = m * config.sample_period
    wgrid = TimeGrid(config.sample_period, n + 1)
    k = seg_count
    base = np.zeros((k + 1, 3, 3))
    p0, v0, a0 = (np.asarray(s, dtype=float) for s in state)
    # middle knots start from the reference, blending away the initial offset
    for j in range(k + 1):
        idx = i0 + j * m
        base[j, :, 0] = ref_p[drone_idx, idx]
        base[j, :, 1] = ref_v[drone_idx, idx]
        base[j, :, 2] = ref_a[drone_idx, idx]
    offset0 = p0 - ref_p[drone_idx, i0]
    for j in range(k):
        base[j, :, 0] += offset0 * (1.0 - j / k)
    base[0, :, 0], base[0, :, 1], base[0, :, 2] = p0, v0, a0
    free = np.arange(1, k)
    fixed_samples = {
        d: (ref_p[d, i0 : i1 + 1], ref_v[d, i0 : i1 + 1], ref_a[d, i0 : i1 + 1])
        for d in range(len(mission.drones))
        if d != drone_idx
    }
    formula = _window_formula(mission, drone_idx, wgrid.horizon)
    model = KnotProblem(
        grid=wgrid,
        formula=formula,
        c=config.c,
        seg_duration=seg_duration,
        seg_count=k,
        drone_count=len(mission.drones),
        free_drones=[FreeDrone(index=drone_idx, base_knots=base, free=free)],
        fixed_samples=fixed_samples,
        v_max=config.v_max,
        a_max=config.a_max,
    )
    if len(free):
        best = None
        iters = 0
        for start in range(config.multistart_count):
            guess = base
            if start > 0:
                # jitter the free knot positions to escape symmetric traps
                rng = np.random.default_rng([int(config.rng_seed), start])
                guess = base.copy()
                guess[free, :, 0] += rng.uniform(-0.1, 0.1, size=(len(free), 3))
            x0 = model.pack([guess])
            x, nit, hit, _ = minimize_with_peak_rounds(model, x0, config, 0.0)
            iters += nit
            cand = model.unpack(x)[0]
            p, v, a = model.assemble([cand])
            rob = robustness(formula, Trace(wgrid, p, v), 0)
            ok = rob > 0 and model.peak_violations([cand]) == 0
            if best is None or (ok, rob) > (best[0], best[1]):
                best = (ok, rob, cand)
            if ok:
                break
        feasible, rob, knots = best
    else:
        knots, iters = base, 0
        p, v, a = model.assemble([knots])
        rob = robustness(formula, Trace(wgrid, p, v), 0)
        feasible = rob > 0 and model.peak_violations([knots]) == 0
    p, v, a = model.assemble([knots])
    status = CONVERGED if feasible else INFEASIBLE
    return ReplanRecord(
        drone=drone_id,
        window=(t0, t1),
        status=status,
        iterations=iters,
        window_robustness=float(rob),
        knots=knots,
    ), (p[drone_idx], v[drone_idx], a[drone_idx])


def replan_segment(
    state,
    drone_id: str,
    plan: PlanResult,
    mission: Mission,
    window,
    config: PlannerConfig | None = None,
) -> ReplanRecord:
    """Replan one drone from `state` (p, v, a) back to the plan at window end."""
    config = config or mission.planner
    record, _ = _replan_on_reference(
        plan.trace_arrays(), mission, drone_id, state, window, config
    )
    return record


def simulate_mission(
    plan: PlanResult, disturbances, mission: Mission, config: TriggerConfig
) -> ExecutionLog:
    """Closed loop: inject disturbances, monitor, replan, splice, re-check."""
    pconfig = mission.planner
    config.validate(plan.grid.sample_period)
    grid = plan.grid
    times = grid.times()
    ref_p, ref_v, ref_a = plan.trace_arrays()
    topic = [times[i] for i in _topic_indices(grid, config)]
    drone_ids = plan.drone_ids
    active = list(disturbances)
    absorb_time = {id(d): math.inf for d in disturbances}
    pending_until = {d: -math.inf for d in drone_ids}
    triggers = []
    replans = []
    for i in _event_indices(grid, config):
        t = times[i]
        for d, drone_id in enumerate(drone_ids):
            if t < pending_until[drone_id]:
                continue
            dev_p = np.zeros(3)
            dev_v = np.zeros(3)
            for dist in active:
                if dist.drone != drone_id or t < dist.onset - 1e-12:
                    continue
                if absorb_time[id(dist)] <= t:
                    continue
                decay = math.exp(-dist.decay * (t - dist.onset))
                dev_p += dist.offset_vector * decay
                dev_v += -dist.decay * dist.offset_vector * decay
            dev = float(np.linalg.norm(dev_p))
            if dev <= config.eta:
                continue
            runtime_p = ref_p[d, i] + dev_p
            triggers.append(TriggerEvent(drone_id, float(t), runtime_p, ref_p[d, i].copy(), dev))
            later = [tt for tt in topic if tt > t + 1e-12 and tt <= grid.horizon + 1e-12]
            # need a window of at least two samples to fit a primitive
            later = [tt for tt in later if round((tt - t) / grid.sample_period) >= 2]
            if not later:
                pending_until[drone_id] = math.inf
                continue
            t_topic = later[0]
            state = (runtime_p, ref_v[d, i] + dev_v, ref_a[d, i])
            record, samples = _replan_on_reference(
                (ref_p, ref_v, ref_a), mission, drone_id, state, (t, t_topic), pconfig
            )
            replans.append(record)
            if record.status == CONVERGED:
                i1 = grid.index_of(t_topic)
                ref_p[d, i : i1 + 1] = samples[0]
                ref_v[d, i : i1 + 1] = samples[1]
                ref_a[d, i : i1 + 1] = samples[2]
            for dist in active:
                if dist.drone == drone_id and dist.onset <= t + 1e-12:
                    absorb_time[id(dist)] = min(absorb_time[id(dist)], float(t))
            pending_until[drone_id] = t_topic
    # executed trace: spliced reference plus unabsorbed disturbance offsets
    exec_p = ref_p.copy()
    exec_v = ref_v.copy()
    for dist in active:
        d = drone_ids.index(dist.drone)
        cut = absorb_time[id(dist)]
        mask = (times >= dist.onset - 1e-12) & (times < cut - 1e-12)
        decay = np.exp(-dist.decay * (times[mask] - dist.onset))
        exec_p[d, mask] += decay[:, None] * dist.offset_vector
        exec_v[d, mask] += -dist.decay * decay[:, None] * dist.offset_vector
    executed = Trace(grid, exec_p, exec_v)
    reference = Trace(grid, ref_p, ref_v)
    formula = build_formula(mission, assign_targets(mission))
    log = ExecutionLog(
        executed=executed,
        reference=reference,
        triggers=triggers,
        replans=replans,
        exact_robustness=float(robustness(formula, executed, 0)),
    )
    return log
