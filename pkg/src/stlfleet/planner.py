"""Robustness-maximizing trajectory planner over knot decision variables.

The decision variables are the free knot states (position, velocity,
acceleration per axis) of every drone; the quintic primitives joining the
knots are linear in those states, so the smooth-robustness gradient maps
back to the knots by an exact chain rule. Knot velocity/acceleration box
bounds are enforced by the L-BFGS-B projection; intra-segment peak
overshoot is handled by an escalating quadratic penalty followed by a
hard re-verification with the closed-form peak finder.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .config import PlannerConfig
from .errors import NumericalFailureError, ScenarioError
from .mission import Mission, assign_targets, build_formula, target_deadline
from .splines import AxisState, AxisTrajectory, boundary_basis, propagate, segment_feasible
from .stl import (
    AffineHalfspace,
    BoxMembership,
    PairDistanceAtLeast,
    RegionAvoid,
    TimeGrid,
    Trace,
    formula_predicates,
    lse_depth_arity,
    robustness,
    smooth_robustness,
    smooth_robustness_gradient,
)

_PEAK_MARGIN = 0.98  # penalty pushes sampled peaks below the hard bound with
# enough slack that the true between-sample extremum also clears it
_PEAK_ROUNDS = 5
_PEAK_LAMBDA0 = 100.0

CONVERGED = "Converged"
ITERATION_LIMIT = "IterationLimit"
INFEASIBLE = "Infeasible"


# ---------------------------------------------------------------------------
# knot-space machinery


def knots_to_samples(knots: np.ndarray, seg_duration: float, samples_per_seg: int):
    """Dense (P, V, A) samples, each (K*M+1, 3), from knots (K+1, 3, 3)."""
    k = knots.shape[0] - 1
    bp, bv, ba = boundary_basis(
        np.arange(samples_per_seg) * seg_duration / samples_per_seg, seg_duration
    )
    seg = np.concatenate([knots[:-1], knots[1:]], axis=2)  # (K, 3, 6)
    out = []
    for basis, comp in ((bp, 0), (bv, 1), (ba, 2)):
        body = np.einsum("kaj,mj->kma", seg, basis).reshape(k * samples_per_seg, 3)
        out.append(np.vstack([body, knots[-1, :, comp][None]]))
    return tuple(out)


@dataclass
class FreeDrone:
    index: int
    base_knots: np.ndarray  # (K+1, 3, 3); fixed entries stay as given
    free: np.ndarray  # free knot indices


class KnotProblem:
    """Joint smooth optimization problem over the free knots of a fleet."""

    def __init__(
        self,
        grid: TimeGrid,
        formula,
        c: float,
        seg_duration: float,
        seg_count: int,
        drone_count: int,
        free_drones: list,
        fixed_samples: dict,
        v_max: float,
        a_max: float,
    ):
        self.grid = grid
        self.formula = formula
        self.c = float(c)
        self.seg_duration = float(seg_duration)
        self.seg_count = seg_count
        self.drone_count = drone_count
        self.free_drones = free_drones
        self.v_max = v_max
        self.a_max = a_max
        m = round(seg_duration / grid.sample_period)
        if seg_count * m + 1 != grid.count:
            raise ValueError("segment layout does not tile the sampling grid")
        self.samples_per_seg = m
        offsets = np.arange(m) * grid.sample_period
        self.b_p, self.b_v, self.b_a = boundary_basis(offsets, seg_duration)
        self.base_P = np.zeros((drone_count, grid.count, 3))
        self.base_V = np.zeros_like(self.base_P)
        self.base_A = np.zeros_like(self.base_P)
        free_idx = {fd.index for fd in free_drones}
        for d in range(drone_count):
            if d in free_idx:
                continue
            p, v, a = fixed_samples[d]
            self.base_P[d], self.base_V[d], self.base_A[d] = p, v, a

    @property
    def n_free_variables(self) -> int:
        return sum(9 * len(fd.free) for fd in self.free_drones)

    def pack(self, knots_list) -> np.ndarray:
        return np.concatenate(
            [knots[fd.free].ravel() for fd, knots in zip(self.free_drones, knots_list)]
        )

    def unpack(self, x: np.ndarray):
        out = []
        pos = 0
        for fd in self.free_drones:
            knots = fd.base_knots.copy()
            n = 9 * len(fd.free)
            knots[fd.free] = x[pos : pos + n].reshape(len(fd.free), 3, 3)
            pos += n
            out.append(knots)
        return out

    def bounds(self):
        out = []
        for fd in self.free_drones:
            for _ in range(len(fd.free) * 3):  # per free knot, per axis
                out.append((None, None))
                out.append((-self.v_max, self.v_max))
                out.append((-self.a_max, self.a_max))
        return out

    def assemble(self, knots_list):
        P, V, A = self.base_P.copy(), self.base_V.copy(), self.base_A.copy()
        seg_all = []
        for fd, knots in zip(self.free_drones, knots_list):
            seg = np.concatenate([knots[:-1], knots[1:]], axis=2)  # (K, 3, 6)
            seg_all.append(seg)
            for arr, basis, comp in (
                (P, self.b_p, 0),
                (V, self.b_v, 1),
                (A, self.b_a, 2),
            ):
                body = np.einsum("kaj,mj->kma", seg, basis)
                arr[fd.index, :-1] = body.reshape(-1, 3)
                arr[fd.index, -1] = knots[-1, :, comp]
        return P, V, A

    def _samples_to_knot_grad(self, fd, gP, gV, gA):
        k, m = self.seg_count, self.samples_per_seg
        g_knots = np.zeros_like(fd.base_knots)
        g_seg = np.zeros((k, 3, 6))
        for g_arr, basis in ((gP, self.b_p), (gV, self.b_v), (gA, self.b_a)):
            body = g_arr[:-1].reshape(k, m, 3)
            g_seg += np.einsum("kma,mj->kaj", body, basis)
        g_knots[:-1] += g_seg[:, :, :3].transpose(0, 1, 2)
        g_knots[1:] += g_seg[:, :, 3:]
        g_knots[-1, :, 0] += gP[-1]
        g_knots[-1, :, 1] += gV[-1]
        g_knots[-1, :, 2] += gA[-1]
        return g_knots

    def objective(self, x, energy_weight: float = 0.0, peak_lambda: float = 0.0):
        """(f, grad) for minimization: f = -(rho_smooth - energy - peaks)."""
        knots_list = self.unpack(x)
        P, V, A = self.assemble(knots_list)
        trace = Trace(self.grid, P, V)
        grad = smooth_robustness_gradient(self.formula, trace, 0, self.c)
        value = grad.value
        gP, gV = grad.positions, grad.velocities
        gA = np.zeros_like(gP)
        if energy_weight > 0:
            for fd, knots in zip(self.free_drones, knots_list):
                value -= energy_weight * float(np.sum(knots[:, :, 2] ** 2))
        if peak_lambda > 0:
            v_soft, a_soft = _PEAK_MARGIN * self.v_max, _PEAK_MARGIN * self.a_max
            for fd in self.free_drones:
                for arr, soft, g_arr in ((V, v_soft, gV), (A, a_soft, gA)):
                    s = arr[fd.index]
                    over = np.maximum(np.abs(s) - soft, 0.0)
                    value -= peak_lambda * float(np.sum(over**2))
                    g_arr[fd.index] -= 2.0 * peak_lambda * over * np.sign(s)
        if not np.isfinite(value):
            raise NumericalFailureError("objective is non-finite")
        g_parts = []
        for fd, knots in zip(self.free_drones, knots_list):
            g_knots = self._samples_to_knot_grad(fd, gP[fd.index], gV[fd.index], gA[fd.index])
            if energy_weight > 0:
                g_knots[:, :, 2] -= 2.0 * energy_weight * knots[:, :, 2]
            g_parts.append(g_knots[fd.free].ravel())
        return -value, -np.concatenate(g_parts)

    def peak_violations(self, knots_list) -> int:
        count = 0
        for knots in knots_list:
            for axis in range(3):
                traj = propagate(
                    [AxisState(*knots[k, axis]) for k in range(knots.shape[0])],
                    self.seg_duration,
                )
                for seg in traj.segments:
                    peaks = segment_feasible(seg, self.v_max, self.a_max)
                    if not peaks.feasible:
                        count += 1
        return count


def minimize_with_peak_rounds(problem: KnotProblem, x0, config, energy_weight: float):
    """L-BFGS-B ascent with escalating intra-segment peak penalties."""
    history = []
    recent = deque(maxlen=8)  # (x, f) of the latest evaluations

    def record(xk):
        # the accepted iterate was evaluated during the line search; find it
        for xx, f in reversed(recent):
            if np.array_equal(xx, xk):
                history.append(f)
                return
        history.append(recent[-1][1] if recent else np.nan)

    total_iters = 0
    hit_limit = False
    x = np.asarray(x0, dtype=float)
    lam = _PEAK_LAMBDA0
    for round_idx in range(_PEAK_ROUNDS + 1):
        def fun(xx):
            f, g = problem.objective(xx, energy_weight, lam)
            recent.append((np.array(xx), f))
            return f, g

        res = minimize(
            fun,
            x,
            jac=True,
            method="L-BFGS-B",
            bounds=problem.bounds(),
            callback=record,
            options={
                "maxiter": config.max_iterations,
                "gtol": config.tolerance,
                "ftol": 1e-14,
            },
        )
        x = res.x
        total_iters += res.nit
        hit_limit = hit_limit or res.nit >= config.max_iterations
        if problem.peak_violations(problem.unpack(x)) == 0:
            break
        lam *= 2.0
    return x, total_iters, hit_limit, history


# ---------------------------------------------------------------------------
# problems and results


@dataclass
class Problem:
    mission: Mission
    assignment: dict
    formula: object
    grid: TimeGrid
    config: PlannerConfig
    coupled: bool

    @property
    def knot_count(self) -> int:
        return round(self.config.horizon / self.config.knot_period)

    @property
    def n_free_variables(self) -> int:
        return 9 * self.knot_count * len(self.mission.drones)


def _couples_axes(pred) -> bool:
    """True when a predicate mixes several axes in one scalar margin."""
    if isinstance(pred, PairDistanceAtLeast):
        return True
    if isinstance(pred, AffineHalfspace):
        return int(np.count_nonzero(pred.normal)) > 1
    if isinstance(pred, (BoxMembership, RegionAvoid)):
        return int(np.count_nonzero(np.any(pred.normals, axis=0))) > 1
    return True  # unknown predicate types are treated as coupling


def build_problem(
    mission: Mission, config: PlannerConfig | None = None, strict_until: bool = False
) -> Problem:
    config = config or mission.planner
    config.validate()
    if abs(config.horizon - mission.horizon) > 1e-9:
        raise ScenarioError("planner horizon differs from the mission horizon")
    assignment = assign_targets(mission)
    formula = build_formula(mission, assignment, strict_until=strict_until)
    grid = TimeGrid.from_horizon(mission.horizon, config.sample_period)
    coupled = any(_couples_axes(p) for p in formula_predicates(formula))
    if config.decouple_axes and coupled:
        raise ScenarioError(
            "decouple_axes requires an axis-separable formula; this mission "
            "couples axes through region or distance predicates"
        )
    return Problem(mission, assignment, formula, grid, config, coupled)


@dataclass
class Violation:
    kind: str
    drone: str
    time: float
    value: float
    limit: float


@dataclass
class ValidationReport:
    exact_robustness: float
    violations: list
    min_pair_distance: float
    smooth_exact_gap: float
    gap_bound: float

    @property
    def passed(self) -> bool:
        return self.exact_robustness > 0 and not self.violations


@dataclass
class PlanResult:
    drone_ids: list
    knots: dict  # drone id -> (K+1, 3, 3)
    trajectories: dict  # drone id -> (x, y, z) AxisTrajectory triple
    grid: TimeGrid
    knot_period: float
    exact_robustness: float
    smooth_robustness: float
    energy_total: dict  # drone id -> sum over knots of ||a_k||^2
    iterations: int
    status: str
    constraint_report: ValidationReport | None = None
    objective_history: list = field(default_factory=list)

    def trace_arrays(self):
        """(P, V, A) arrays of shape (q, N+1, 3) sampled on the grid."""
        m = round(self.knot_period / self.grid.sample_period)
        ps, vs, accs = [], [], []
        for drone_id in self.drone_ids:
            p, v, a = knots_to_samples(self.knots[drone_id], self.knot_period, m)
            ps.append(p)
            vs.append(v)
            accs.append(a)
        return np.stack(ps), np.stack(vs), np.stack(accs)

    def trace(self) -> Trace:
        p, v, _ = self.trace_arrays()
        return Trace(self.grid, p, v)


def _initial_fleet_knots(problem: Problem, rng=None) -> list:
    """Piecewise-linear positions through assigned targets, zero v/a knots."""
    mission, config = problem.mission, problem.config
    k = problem.knot_count
    times = np.arange(k + 1) * config.knot_period
    t_split = target_deadline(mission)
    out = []
    for drone in mission.drones:
        targets = problem.assignment.get(drone.id, [])
        wp_t = [0.0]
        wp_p = [drone.initial_position]
        n = len(targets)
        for i, target in enumerate(targets):
            wp_t.append((i + 1) * t_split / (n + 1))
            wp_p.append(target.center())
        t_home = 0.5 * (t_split + mission.horizon)
        wp_t += [t_home, mission.horizon]
        wp_p += [drone.initial_position, drone.initial_position]
        wp_p = np.asarray(wp_p)
        knots = np.zeros((k + 1, 3, 3))
        for axis in range(3):
            knots[:, axis, 0] = np.interp(times, wp_t, wp_p[:, axis])
        knots[0, :, 0] = drone.initial_position
        knots[0, :, 1] = drone.initial_velocity
        knots[0, :, 2] = drone.initial_acceleration
        if rng is not None:
            knots[1:, :, 0] += rng.uniform(-0.1, 0.1, size=(k, 3))
        out.append(knots)
    return out


def _knot_problem(problem: Problem, base_knots: list) -> KnotProblem:
    k = problem.knot_count
    free = np.arange(1, k + 1)
    free_drones = [
        FreeDrone(index=i, base_knots=base_knots[i], free=free)
        for i in range(len(problem.mission.drones))
    ]
    return KnotProblem(
        grid=problem.grid,
        formula=problem.formula,
        c=problem.config.c,
        seg_duration=problem.config.knot_period,
        seg_count=k,
        drone_count=len(problem.mission.drones),
        free_drones=free_drones,
        fixed_samples={},
        v_max=problem.config.v_max,
        a_max=problem.config.a_max,
    )


def _drone_energy(knots: np.ndarray) -> float:
    return float(np.sum(knots[:, :, 2] ** 2))


def _result_from_knots(problem: Problem, knots_list, iterations, hit_limit, history):
    mission, config = problem.mission, problem.config
    knots = {d.id: knots_list[i] for i, d in enumerate(mission.drones)}
    trajectories = {}
    for i, d in enumerate(mission.drones):
        axes = []
        for axis in range(3):
            states = [AxisState(*knots_list[i][k, axis]) for k in range(knots_list[i].shape[0])]
            axes.append(propagate(states, config.knot_period))
        trajectories[d.id] = tuple(axes)
    result = PlanResult(
        drone_ids=[d.id for d in mission.drones],
        knots=knots,
        trajectories=trajectories,
        grid=problem.grid,
        knot_period=config.knot_period,
        exact_robustness=0.0,
        smooth_robustness=0.0,
        energy_total={d.id: _drone_energy(knots[d.id]) for d in mission.drones},
        iterations=iterations,
        status=INFEASIBLE,
        objective_history=history,
    )
    trace = result.trace()
    result.exact_robustness = robustness(problem.formula, trace, 0)
    result.smooth_robustness = smooth_robustness(problem.formula, trace, 0, config.c)
    report = exact_validate(result, mission, config)
    result.constraint_report = report
    if report.passed:
        result.status = CONVERGED
    elif hit_limit:
        result.status = ITERATION_LIMIT
    else:
        result.status = INFEASIBLE
    return result


def _run_multistart(problem: Problem, config: PlannerConfig, energy_weight: float):
    runs = []
    total_iters = 0
    any_limit = False
    for start in range(config.multistart_count):
        rng = (
            None
            if start == 0
            else np.random.default_rng([int(config.rng_seed), start])
        )
        base = _initial_fleet_knots(problem, rng)
        model = _knot_problem(problem, base)
        x0 = model.pack(base)
        lo = np.array([b[0] if b[0] is not None else -np.inf for b in model.bounds()])
        hi = np.array([b[1] if b[1] is not None else np.inf for b in model.bounds()])
        x0 = np.clip(x0, lo, hi)
        x, iters, hit, history = minimize_with_peak_rounds(model, x0, config, energy_weight)
        total_iters += iters
        any_limit = any_limit or hit
        knots_list = model.unpack(x)
        trace = Trace(problem.grid, *_assemble_pv(model, knots_list))
        exact = robustness(problem.formula, trace, 0)
        energy = sum(_drone_energy(kk) for kk in knots_list)
        runs.append((exact, energy, start, x, model, knots_list, hit, history))
    runs.sort(key=lambda r: (-r[0], r[1], r[2]))
    return runs[0], total_iters, any_limit


def _assemble_pv(model: KnotProblem, knots_list):
    p, v, _ = model.assemble(knots_list)
    return p, v


def solve(problem: Problem, config: PlannerConfig | None = None) -> PlanResult:
    """Maximize the smooth mission robustness over the free knots."""
    config = config or problem.config
    best, total_iters, any_limit = _run_multistart(problem, config, energy_weight=0.0)
    _, _, _, x, model, knots_list, hit, history = best
    return _result_from_knots(problem, knots_list, total_iters, any_limit, history)


def solve_energy_aware(problem: Problem, config: PlannerConfig | None = None) -> PlanResult:
    """Maximize smooth robustness minus the quadratic energy penalty.

    The slack variables bounding the squared acceleration are active at
    any optimum with a positive-diagonal penalty matrix, so they are
    eliminated analytically: the penalty reduces to
    energy_weight * sum ||a_k||^2 over the knot accelerations. The basic
    optimum seeds the penalized solve, so robustness can only be traded
    away, never gained, relative to the plain planner.
    """
    config = config or problem.config
    if config.energy_weight == 0:
        return solve(problem, config)
    best, total_iters, any_limit = _run_multistart(problem, config, energy_weight=0.0)
    _, _, _, x, model, knots_list, hit, history = best
    x2, iters2, hit2, history2 = minimize_with_peak_rounds(
        model, x, config, config.energy_weight
    )
    knots_list = model.unpack(x2)
    return _result_from_knots(
        problem, knots_list, total_iters + iters2, any_limit or hit2, history + history2
    )


# ---------------------------------------------------------------------------
# exact re-validation


def exact_validate(
    result: PlanResult, mission: Mission, config: PlannerConfig | None = None
) -> ValidationReport:
    """Exact-semantics re-check of a plan: robustness, bounds, separation."""
    config = config or mission.planner
    p, v, a = result.trace_arrays()
    trace = Trace(result.grid, p, v)
    assignment = assign_targets(mission)
    formula = build_formula(mission, assignment)
    exact = robustness(formula, trace, 0)
    smooth = smooth_robustness(formula, trace, 0, config.c)
    depth, arity = lse_depth_arity(formula, result.grid)
    gap_bound = depth * np.log(max(arity, 2)) / config.c
    violations = []
    times = result.grid.times()
    for i, drone_id in enumerate(result.drone_ids):
        knots = result.knots[drone_id]
        knot_times = np.arange(knots.shape[0]) * result.knot_period
        for k in range(knots.shape[0]):
            for axis in range(3):
                if abs(knots[k, axis, 1]) > config.v_max + 1e-9:
                    violations.append(
                        Violation("knot_velocity", drone_id, knot_times[k], knots[k, axis, 1], config.v_max)
                    )
                if abs(knots[k, axis, 2]) > config.a_max + 1e-9:
                    violations.append(
                        Violation("knot_acceleration", drone_id, knot_times[k], knots[k, axis, 2], config.a_max)
                    )
        for axis, traj in enumerate(result.trajectories[drone_id]):
            for s, seg in enumerate(traj.segments):
                peaks = segment_feasible(seg, config.v_max, config.a_max)
                if not peaks.feasible:
                    kind = "segment_velocity" if peaks.peak_v > config.v_max else "segment_acceleration"
                    value = max(peaks.peak_v, peaks.peak_a)
                    limit = config.v_max if kind == "segment_velocity" else config.a_max
                    violations.append(
                        Violation(kind, drone_id, s * result.knot_period, value, limit)
                    )
    min_pair = np.inf
    q = len(result.drone_ids)
    for i in range(q):
        for h in range(i + 1, q):
            dist = np.linalg.norm(p[i] - p[h], axis=1)
            min_pair = min(min_pair, float(dist.min()))
            bad = np.nonzero(dist < mission.delta_min - 1e-9)[0]
            if len(bad):
                k = int(bad[0])
                violations.append(
                    Violation(
                        "pair_distance",
                        f"{result.drone_ids[i]}/{result.drone_ids[h]}",
                        float(times[k]),
                        float(dist[k]),
                        mission.delta_min,
                    )
                )
    return ValidationReport(
        exact_robustness=float(exact),
        violations=violations,
        min_pair_distance=float(min_pair),
        smooth_exact_gap=abs(smooth - exact),
        gap_bound=float(gap_bound),
    )
