"""Shared fixtures and randomized-formula helpers for the test suite."""
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = REPO_ROOT / "scenarios"

from stlfleet import (
    AffineHalfspace,
    Always,
    And,
    Box,
    BoxMembership,
    DroneSpec,
    Eventually,
    Mission,
    Not,
    Or,
    PairDistanceAtLeast,
    PlannerConfig,
    Pred,
    RegionAvoid,
    TimeGrid,
    Trace,
    Until,
)


# ---------------------------------------------------------------------------
# small missions (fast to solve)


def toy_planner(**overrides) -> PlannerConfig:
    base = dict(
        c=5.0,
        sample_period=0.1,
        horizon=10.0,
        knot_period=1.0,
        v_max=3.0,
        a_max=3.0,
        max_iterations=300,
        tolerance=1e-6,
        multistart_count=1,
        rng_seed=0,
    )
    base.update(overrides)
    return PlannerConfig(**base)


def reach_mission(**planner_overrides) -> Mission:
    """One drone at the origin must visit [5,6]x[-1,1]x[-1,1] and come home."""
    return Mission(
        workspace=Box("workspace", [-8.0, -8.0, -8.0], [8.0, 8.0, 8.0]),
        obstacles=[],
        targets=[Box("goal", [5.0, -1.0, -1.0], [6.0, 1.0, 1.0])],
        drones=[DroneSpec("d1", [0.0, 0.0, 0.0])],
        delta_min=1.0,
        horizon=10.0,
        planner=toy_planner(**planner_overrides),
    )


def hover_mission(horizon=10.0, **planner_overrides) -> Mission:
    """Target box already contains the initial hover state."""
    return Mission(
        workspace=Box("workspace", [-8.0, -8.0, -8.0], [8.0, 8.0, 8.0]),
        obstacles=[],
        targets=[Box("here", [-1.0, -1.0, -1.0], [1.0, 1.0, 1.0])],
        drones=[DroneSpec("d1", [0.0, 0.0, 0.0])],
        delta_min=1.0,
        horizon=horizon,
        planner=toy_planner(horizon=horizon, **planner_overrides),
    )


def pair_mission(**planner_overrides) -> Mission:
    """Two drones crossing the workspace with a separation constraint."""
    return Mission(
        workspace=Box("workspace", [-8.0, -8.0, -8.0], [8.0, 8.0, 8.0]),
        obstacles=[],
        targets=[
            Box("east", [4.0, -1.0, -1.0], [6.0, 1.0, 1.0]),
            Box("west", [-6.0, -1.0, -1.0], [-4.0, 1.0, 1.0]),
        ],
        drones=[
            DroneSpec("d1", [-3.0, 3.0, 0.0]),
            DroneSpec("d2", [3.0, -3.0, 0.0]),
        ],
        delta_min=2.0,
        horizon=10.0,
        planner=toy_planner(**planner_overrides),
    )


@pytest.fixture(scope="session")
def reach_plan():
    from stlfleet import build_problem, solve

    problem = build_problem(reach_mission())
    return problem, solve(problem)


# ---------------------------------------------------------------------------
# randomized traces and formulas


def random_trace(rng, drones=2, count=30, sample_period=0.5) -> Trace:
    grid = TimeGrid(sample_period, count)
    p = rng.normal(0.0, 2.0, (drones, count, 3))
    v = rng.normal(0.0, 1.0, (drones, count, 3))
    return Trace(grid, p, v)


def random_predicate(rng, drones: int):
    kind = rng.integers(0, 4 if drones > 1 else 3)
    d = int(rng.integers(0, drones))
    if kind == 0:
        normal = rng.normal(size=3)
        while not np.any(normal):
            normal = rng.normal(size=3)
        channel = "position" if rng.random() < 0.7 else "velocity"
        return AffineHalfspace(d, channel, normal, float(rng.normal()))
    if kind == 1:
        lo = rng.uniform(-3.0, 0.0, 3)
        hi = lo + rng.uniform(0.5, 4.0, 3)
        return BoxMembership.from_region(d, Box("b", lo, hi))
    if kind == 2:
        lo = rng.uniform(-3.0, 0.0, 3)
        hi = lo + rng.uniform(0.5, 4.0, 3)
        return RegionAvoid.from_region(d, Box("b", lo, hi))
    other = int(rng.integers(0, drones))
    while other == d:
        other = int(rng.integers(0, drones))
    return PairDistanceAtLeast(d, other, float(rng.uniform(0.5, 4.0)))


def random_interval(rng, grid: TimeGrid, budget: int):
    ia = int(rng.integers(0, budget + 1))
    ib = int(rng.integers(ia, budget + 1))
    return (ia * grid.sample_period, ib * grid.sample_period), ib


def random_formula(rng, grid: TimeGrid, drones: int, depth: int, budget: int):
    """Random formula whose windows, stacked, fit inside `budget` samples."""
    if depth == 0:
        return Pred(random_predicate(rng, drones))
    op = rng.integers(0, 6)
    if op == 0:
        return Pred(random_predicate(rng, drones))
    if op == 1:
        return Not(random_formula(rng, grid, drones, depth - 1, budget))
    if op in (2, 3):
        n = int(rng.integers(2, 4))
        subs = [random_formula(rng, grid, drones, depth - 1, budget) for _ in range(n)]
        return And(subs) if op == 2 else Or(subs)
    interval, used = random_interval(rng, grid, max(budget // 2, 1))
    sub = random_formula(rng, grid, drones, depth - 1, budget - used)
    if op == 4:
        return Always(interval, sub)
    if op == 5:
        return Eventually(interval, sub)
    return sub


def random_until(rng, grid: TimeGrid, drones: int, budget: int):
    interval, used = random_interval(rng, grid, budget)
    left = Pred(random_predicate(rng, drones))
    right = Pred(random_predicate(rng, drones))
    return Until(interval, left, right)


# ---------------------------------------------------------------------------
# brute-force reference evaluator (index enumeration, no shared code paths)


def brute_robustness(node, trace: Trace, k: int) -> float:
    grid = trace.grid

    def idx(interval):
        a, b = interval
        return round(a / grid.sample_period), round(b / grid.sample_period)

    if isinstance(node, Pred):
        return float(node.predicate.values(trace, k, k)[0])
    if isinstance(node, Not):
        return -brute_robustness(node.sub, trace, k)
    if isinstance(node, And):
        return min(brute_robustness(s, trace, k) for s in node.subs)
    if isinstance(node, Or):
        return max(brute_robustness(s, trace, k) for s in node.subs)
    if isinstance(node, Always):
        ia, ib = idx(node.interval)
        return min(brute_robustness(node.sub, trace, k + j) for j in range(ia, ib + 1))
    if isinstance(node, Eventually):
        ia, ib = idx(node.interval)
        return max(brute_robustness(node.sub, trace, k + j) for j in range(ia, ib + 1))
    if isinstance(node, Until):
        ia, ib = idx(node.interval)
        best = -np.inf
        for tp in range(k + ia, k + ib + 1):
            rho2 = brute_robustness(node.right, trace, tp)
            rho1 = min(brute_robustness(node.left, trace, s) for s in range(k, tp + 1))
            best = max(best, min(rho2, rho1))
        return float(best)
    raise TypeError(node)
