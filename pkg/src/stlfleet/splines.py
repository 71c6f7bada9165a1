"""Quintic motion primitives for a single axis.

Each segment joins two (position, velocity, acceleration) boundary states
over a fixed duration with a closed-form quintic polynomial. Position uses
the a0*tau^2/2 term so that velocity and acceleration are its exact first
and second derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MisalignmentError, OutOfRangeError
from .stl import TimeGrid

_CHAIN_TOL = 1e-9


@dataclass(frozen=True)
class AxisState:
    p: float
    v: float
    a: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.v, self.a])


@dataclass(frozen=True)
class SplineSegment:
    start: AxisState
    alpha: float
    beta: float
    gamma: float
    duration: float


@dataclass(frozen=True)
class AxisTrajectory:
    knots: tuple  # of AxisState, length K+1
    segments: tuple  # of SplineSegment, length K
    knot_period: float

    @property
    def horizon(self) -> float:
        return len(self.segments) * self.knot_period


def _coeff_matrix(t: float) -> np.ndarray:
    return np.array(
        [
            [720.0, -360.0 * t, 60.0 * t**2],
            [-360.0 * t, 168.0 * t**2, -24.0 * t**3],
            [60.0 * t**2, -24.0 * t**3, 3.0 * t**4],
        ]
    ) / t**5


def solve_boundary(start: AxisState, end: AxisState, duration: float) -> SplineSegment:
    """Closed-form quintic joining `start` to `end` over `duration`."""
    t = float(duration)
    if t <= 0:
        raise ValueError("duration must be positive")
    dp = end.p - start.p - start.v * t - 0.5 * start.a * t**2
    dv = end.v - start.v - start.a * t
    da = end.a - start.a
    alpha, beta, gamma = _coeff_matrix(t) @ np.array([dp, dv, da])
    return SplineSegment(start, float(alpha), float(beta), float(gamma), t)


def evaluate(segment: SplineSegment, tau: float) -> AxisState:
    """State of the segment at local time tau in [0, duration]."""
    t = float(tau)
    if t < 0 or t > segment.duration:
        raise OutOfRangeError(f"tau {tau} outside [0, {segment.duration}]")
    a0, v0, p0 = segment.start.a, segment.start.v, segment.start.p
    al, be, ga = segment.alpha, segment.beta, segment.gamma
    p = al / 120 * t**5 + be / 24 * t**4 + ga / 6 * t**3 + a0 / 2 * t**2 + v0 * t + p0
    v = al / 24 * t**4 + be / 6 * t**3 + ga / 2 * t**2 + a0 * t + v0
    a = al / 6 * t**3 + be / 2 * t**2 + ga * t + a0
    return AxisState(p, v, a)


def _real_roots_in(coeffs, lo: float, hi: float) -> list[float]:
    """Real roots of the polynomial (numpy coeff order) inside (lo, hi)."""
    c = np.asarray(coeffs, dtype=float)
    scale = np.abs(c).max()
    if scale == 0:
        return []
    nz = np.nonzero(np.abs(c) > 1e-14 * scale)[0]
    c = c[nz[0] :]
    if len(c) <= 1:
        return []
    roots = np.roots(c)
    out = []
    for r in roots:
        if abs(r.imag) < 1e-9 * max(1.0, abs(r.real)) and lo < r.real < hi:
            out.append(float(r.real))
    return out


@dataclass(frozen=True)
class SegmentPeaks:
    feasible: bool
    peak_v: float
    peak_a: float


def segment_feasible(
    segment: SplineSegment, v_max: float, a_max: float, cross_check: bool = False
) -> SegmentPeaks:
    """Peak |v| and |a| over the segment via critical-point analysis.

    cross_check also evaluates 1000 dense samples and keeps the larger
    value, guarding the closed-form root finding.
    """
    if v_max <= 0 or a_max <= 0:
        raise ValueError("bounds must be positive")
    a0, v0 = segment.start.a, segment.start.v
    al, be, ga = segment.alpha, segment.beta, segment.gamma
    t = segment.duration
    # acceleration extrema at jerk roots (quadratic), velocity extrema at
    # acceleration roots (cubic)
    a_pts = [0.0, t] + _real_roots_in([al / 2, be, ga], 0.0, t)
    v_pts = [0.0, t] + _real_roots_in([al / 6, be / 2, ga, a0], 0.0, t)
    accel = lambda x: al / 6 * x**3 + be / 2 * x**2 + ga * x + a0
    vel = lambda x: al / 24 * x**4 + be / 6 * x**3 + ga / 2 * x**2 + a0 * x + v0
    peak_a = max(abs(accel(x)) for x in a_pts)
    peak_v = max(abs(vel(x)) for x in v_pts)
    if cross_check:
        xs = np.linspace(0.0, t, 1000)
        peak_a = max(peak_a, np.abs(accel(xs)).max())
        peak_v = max(peak_v, np.abs(vel(xs)).max())
    return SegmentPeaks(peak_v <= v_max and peak_a <= a_max, float(peak_v), float(peak_a))


def propagate(knots, knot_period: float) -> AxisTrajectory:
    """Chain one boundary-solved segment per adjacent knot pair."""
    knots = tuple(knots)
    if len(knots) < 2:
        raise ValueError("need at least two knots")
    segments = tuple(
        solve_boundary(knots[k], knots[k + 1], knot_period) for k in range(len(knots) - 1)
    )
    for k, seg in enumerate(segments):
        end = evaluate(seg, knot_period)
        nxt = knots[k + 1]
        if (
            abs(end.p - nxt.p) > _CHAIN_TOL
            or abs(end.v - nxt.v) > _CHAIN_TOL
            or abs(end.a - nxt.a) > _CHAIN_TOL
        ):
            raise ValueError(f"segment {k} does not reproduce knot {k + 1}")
    return AxisTrajectory(knots, segments, float(knot_period))


def sample(trajectory: AxisTrajectory, grid: TimeGrid) -> list[AxisState]:
    """Dense samples of the trajectory on the grid; knots reproduced exactly."""
    ratio = trajectory.knot_period / grid.sample_period
    m = round(ratio)
    if abs(ratio - m) > 1e-9 * max(1.0, ratio) or m < 1:
        raise MisalignmentError(
            "knot_period must be an integer multiple of the sample period"
        )
    if abs(trajectory.horizon - grid.horizon) > 1e-9 * max(1.0, grid.horizon):
        raise MisalignmentError("grid horizon differs from the trajectory horizon")
    out = []
    for k in range(grid.count):
        seg, r = divmod(k, m)
        if r == 0:
            out.append(trajectory.knots[seg])
        else:
            out.append(evaluate(trajectory.segments[seg], r * grid.sample_period))
    return out


def boundary_basis(offsets, duration: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear maps from boundary states to in-segment samples.

    For local times `offsets`, returns (B_p, B_v, B_a), each of shape
    (len(offsets), 6), such that the sampled position / velocity /
    acceleration equals B @ (p0, v0, a0, p1, v1, a1). The whole primitive
    is linear in its boundary states, which the planner exploits for
    exact chain-rule gradients.
    """
    t = float(duration)
    if t <= 0:
        raise ValueError("duration must be positive")
    m = _coeff_matrix(t)
    # delta terms (dp, dv, da) as linear functions of the boundary states
    amap = np.array(
        [
            [-1.0, -t, -0.5 * t**2, 1.0, 0.0, 0.0],
            [0.0, -1.0, -t, 0.0, 1.0, 0.0],
            [0.0, 0.0, -1.0, 0.0, 0.0, 1.0],
        ]
    )
    g = m @ amap  # (alpha, beta, gamma) from the 6 boundary numbers
    tau = np.asarray(offsets, dtype=float)[:, None]
    cp = np.hstack([tau**5 / 120, tau**4 / 24, tau**3 / 6])
    cv = np.hstack([tau**4 / 24, tau**3 / 6, tau**2 / 2])
    ca = np.hstack([tau**3 / 6, tau**2 / 2, tau])
    base_p = np.zeros((len(tau), 6))
    base_p[:, 0] = 1.0
    base_p[:, 1] = tau[:, 0]
    base_p[:, 2] = tau[:, 0] ** 2 / 2
    base_v = np.zeros((len(tau), 6))
    base_v[:, 1] = 1.0
    base_v[:, 2] = tau[:, 0]
    base_a = np.zeros((len(tau), 6))
    base_a[:, 2] = 1.0
    return cp @ g + base_p, cv @ g + base_v, ca @ g + base_a
