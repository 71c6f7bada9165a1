"""Command-line front end: plan, simulate disturbances, validate traces.

Outputs are plot-ready CSV/JSON files written atomically. Exit codes:
0 success, 1 input error, 2 planning/validation failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .errors import StlFleetError
from .mission import Mission, assign_targets, load_scenario, target_deadline
from .planner import (
    CONVERGED,
    PlanResult,
    build_problem,
    exact_validate,
    solve,
    solve_energy_aware,
)
from .replanner import simulate_mission
from .stl import TimeGrid, Trace, robustness

TRACE_HEADER = "t,drone,px,py,pz,vx,vy,vz,ax,ay,az"


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _atomic_write(path, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace_csv(path, drone_ids, grid, p, v, a):
    times = grid.times()
    lines = [TRACE_HEADER]
    for k in range(grid.count):
        for d, drone_id in enumerate(drone_ids):
            row = [_fmt(times[k]), drone_id]
            row += [_fmt(x) for x in p[d, k]]
            row += [_fmt(x) for x in v[d, k]]
            row += [_fmt(x) for x in a[d, k]]
            lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_trace_csv(path):
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != TRACE_HEADER:
        raise StlFleetError(f"{path}: expected header {TRACE_HEADER!r}")
    drone_ids = []
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 11:
            raise StlFleetError(f"{path}:{lineno}: expected 11 columns")
        try:
            t = float(parts[0])
            values = [float(x) for x in parts[2:]]
        except ValueError as exc:
            raise StlFleetError(f"{path}:{lineno}: non-numeric value") from exc
        drone = parts[1]
        if drone not in drone_ids:
            drone_ids.append(drone)
        rows.append((t, drone, values))
    times = sorted({r[0] for r in rows})
    if len(times) < 2:
        raise StlFleetError(f"{path}: need at least two sample instants")
    ts = times[1] - times[0]
    grid = TimeGrid.from_horizon(times[-1], ts)
    q, n = len(drone_ids), grid.count
    p = np.zeros((q, n, 3))
    v = np.zeros((q, n, 3))
    a = np.zeros((q, n, 3))
    for t, drone, values in rows:
        k = grid.index_of(t)
        d = drone_ids.index(drone)
        p[d, k] = values[0:3]
        v[d, k] = values[3:6]
        a[d, k] = values[6:9]
    return drone_ids, grid, p, v, a


def remaining_mission_robustness(mission: Mission, p: np.ndarray, grid: TimeGrid):
    """Per-drone, per-sample robustness of the not-yet-expired target/home
    conjuncts, evaluated over each conjunct's remaining window."""
    from .stl import BoxMembership, Trace as _Trace

    assignment = assign_targets(mission)
    i_split = grid.index_of(target_deadline(mission))
    trace = _Trace(grid, p, np.zeros_like(p))
    out = np.zeros((len(mission.drones), grid.count))
    for d, drone in enumerate(mission.drones):
        conjuncts = []
        for target in assignment.get(drone.id, []):
            mu = BoxMembership.from_region(d, target).values(trace, 0, i_split)
            suffix = np.maximum.accumulate(mu[::-1])[::-1]
            conjuncts.append((0, i_split, suffix))
        mu = BoxMembership.from_region(d, mission.homes[drone.id]).values(
            trace, i_split, grid.count - 1
        )
        suffix = np.maximum.accumulate(mu[::-1])[::-1]
        conjuncts.append((i_split, grid.count - 1, suffix))
        for k in range(grid.count):
            vals = [
                s[max(k - start, 0)]
                for start, end, s in conjuncts
                if k <= end
            ]
            out[d, k] = min(vals) if vals else out[d, k - 1]
    return out


def result_to_dict(result: PlanResult, mission: Mission, seed: int) -> dict:
    return {
        "status": result.status,
        "exact_robustness": result.exact_robustness,
        "smooth_robustness": result.smooth_robustness,
        "iterations": result.iterations,
        "energy_total": {k: result.energy_total[k] for k in sorted(result.energy_total)},
        "seed": seed,
        "sample_period": result.grid.sample_period,
        "horizon": result.grid.horizon,
        "knot_period": result.knot_period,
        "drones": list(result.drone_ids),
        "knots": {k: result.knots[k].tolist() for k in result.drone_ids},
        "min_pair_distance": (
            result.constraint_report.min_pair_distance if result.constraint_report else None
        ),
        "violations": (
            [
                {
                    "kind": v.kind,
                    "drone": v.drone,
                    "time": v.time,
                    "value": v.value,
                    "limit": v.limit,
                }
                for v in result.constraint_report.violations
            ]
            if result.constraint_report
            else []
        ),
    }


def load_plan(plan_dir, mission: Mission) -> PlanResult:
    path = os.path.join(plan_dir, "result.json")
    with open(path) as fh:
        doc = json.load(fh)
    from .planner import _result_from_knots, build_problem as _bp

    problem = _bp(mission)
    knots_list = [np.asarray(doc["knots"][d.id]) for d in mission.drones]
    result = _result_from_knots(problem, knots_list, int(doc["iterations"]), False, [])
    return result


# ---------------------------------------------------------------------------
# subcommands


def cmd_plan(args) -> int:
    mission = load_scenario(args.scenario)
    if args.seed is not None:
        mission.planner.rng_seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    problem = build_problem(mission)
    if args.energy:
        result = solve_energy_aware(problem)
    else:
        result = solve(problem)
    p, v, a = result.trace_arrays()
    write_trace_csv(os.path.join(args.out, "trace.csv"), result.drone_ids, result.grid, p, v, a)
    times = result.grid.times()
    rob = remaining_mission_robustness(mission, p, result.grid)
    lines = ["t,drone,robustness"]
    for k in range(result.grid.count):
        for d, drone_id in enumerate(result.drone_ids):
            lines.append(f"{_fmt(times[k])},{drone_id},{_fmt(rob[d, k])}")
    _atomic_write(os.path.join(args.out, "robustness.csv"), "\n".join(lines) + "\n")
    energy = np.cumsum(np.sum(a**2, axis=2) * result.grid.sample_period, axis=1)
    lines = ["t,drone,energy"]
    for k in range(result.grid.count):
        for d, drone_id in enumerate(result.drone_ids):
            lines.append(f"{_fmt(times[k])},{drone_id},{_fmt(energy[d, k])}")
    _atomic_write(os.path.join(args.out, "energy.csv"), "\n".join(lines) + "\n")
    doc = result_to_dict(result, mission, mission.planner.rng_seed)
    _atomic_write(
        os.path.join(args.out, "result.json"),
        json.dumps(doc, indent=2, sort_keys=True) + "\n",
    )
    if result.status != CONVERGED:
        print(f"planning did not converge: {result.status}", file=sys.stderr)
        print(f"exact robustness: {result.exact_robustness:.6g}", file=sys.stderr)
        return 2
    print(f"Converged: exact robustness {result.exact_robustness:.6g}")
    return 0


def cmd_simulate(args) -> int:
    mission = load_scenario(args.scenario)
    if mission.replanner is None:
        raise StlFleetError("scenario carries no replanner section")
    plan = load_plan(args.plan, mission)
    os.makedirs(args.out, exist_ok=True)
    log = simulate_mission(
        plan, mission.replanner.disturbances, mission, mission.replanner.trigger
    )
    accel = np.zeros_like(log.executed.positions)
    write_trace_csv(
        os.path.join(args.out, "executed_trace.csv"),
        plan.drone_ids,
        plan.grid,
        log.executed.positions,
        log.executed.velocities,
        accel,
    )
    lines = ["t,drone,deviation,px,py,pz,ref_px,ref_py,ref_pz"]
    for ev in log.triggers:
        row = [_fmt(ev.time), ev.drone, _fmt(ev.deviation)]
        row += [_fmt(x) for x in ev.runtime_position]
        row += [_fmt(x) for x in ev.planned_position]
        lines.append(",".join(row))
    _atomic_write(os.path.join(args.out, "triggers.csv"), "\n".join(lines) + "\n")
    replans = [
        {
            "drone": r.drone,
            "window": list(r.window),
            "status": r.status,
            "iterations": r.iterations,
            "window_robustness": r.window_robustness,
        }
        for r in log.replans
    ]
    _atomic_write(
        os.path.join(args.out, "replans.json"),
        json.dumps(
            {
                "replans": replans,
                "triggers": len(log.triggers),
                "executed_exact_robustness": log.exact_robustness,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    failed = [r for r in log.replans if r.status != CONVERGED]
    if failed:
        print(f"{len(failed)} replan(s) failed to converge", file=sys.stderr)
        return 2
    print(f"{len(log.triggers)} trigger(s), {len(log.replans)} replan(s), all converged")
    return 0


def cmd_validate(args) -> int:
    mission = load_scenario(args.scenario)
    drone_ids, grid, p, v, a = read_trace_csv(args.trace)
    expected = [d.id for d in mission.drones]
    if drone_ids != expected:
        raise StlFleetError(
            f"trace drones {drone_ids} do not match scenario drones {expected}"
        )
    from .mission import build_formula

    formula = build_formula(mission, assign_targets(mission))
    trace = Trace(grid, p, v)
    exact = robustness(formula, trace, 0)
    config = mission.planner
    ok = exact > 0
    print(f"exact robustness: {exact:.6g}")
    times = grid.times()
    for d, drone_id in enumerate(drone_ids):
        for arr, bound, name in ((v, config.v_max, "velocity"), (a, config.a_max, "acceleration")):
            bad = np.nonzero(np.abs(arr[d]).max(axis=1) > bound + 1e-9)[0]
            if len(bad):
                k = int(bad[0])
                print(
                    f"violation: {name} bound at row t={times[k]:.6g} drone {drone_id} "
                    f"(|{name}| = {np.abs(arr[d, k]).max():.6g} > {bound})"
                )
                ok = False
    q = len(drone_ids)
    for i in range(q):
        for h in range(i + 1, q):
            dist = np.linalg.norm(p[i] - p[h], axis=1)
            bad = np.nonzero(dist < mission.delta_min - 1e-9)[0]
            if len(bad):
                k = int(bad[0])
                print(
                    f"violation: pair distance {drone_ids[i]}/{drone_ids[h]} at "
                    f"t={times[k]:.6g} ({dist[k]:.6g} < {mission.delta_min})"
                )
                ok = False
    if ok:
        print("all checks passed")
        return 0
    return 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stlfleet",
        description="STL mission planning for quad-rotor fleets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="plan trajectories for a scenario")
    p_plan.add_argument("--scenario", required=True)
    p_plan.add_argument("--out", required=True)
    p_plan.add_argument("--energy", action="store_true", help="use the energy-aware planner")
    p_plan.add_argument("--seed", type=int, default=None)
    p_plan.set_defaults(func=cmd_plan)

    p_sim = sub.add_parser("simulate", help="simulate disturbances and replanning")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--plan", required=True, help="directory with cmd_plan outputs")
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_val = sub.add_parser("validate", help="validate a trace against a scenario")
    p_val.add_argument("--trace", required=True)
    p_val.add_argument("--scenario", required=True)
    p_val.set_defaults(func=cmd_validate)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (StlFleetError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # exit-code contract: never a traceback
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
