"""Quintic motion primitives: boundary solve, evaluation, peaks, chaining."""
import numpy as np
import pytest

from stlfleet import (
    AxisState,
    TimeGrid,
    evaluate,
    propagate,
    sample,
    segment_feasible,
    solve_boundary,
)
from stlfleet.errors import MisalignmentError, OutOfRangeError
from stlfleet.splines import boundary_basis

REST = AxisState(0.0, 0.0, 0.0)


def random_state(rng, scale=2.0):
    return AxisState(*rng.normal(0.0, scale, 3))


class TestSolveBoundary:
    def test_zero_motion(self):
        seg = solve_boundary(REST, REST, 1.0)
        assert (seg.alpha, seg.beta, seg.gamma) == (0.0, 0.0, 0.0)

    def test_rest_to_rest_unit(self):
        seg = solve_boundary(REST, AxisState(1.0, 0.0, 0.0), 1.0)
        assert seg.alpha == pytest.approx(720.0, abs=1e-9)
        assert seg.beta == pytest.approx(-360.0, abs=1e-9)
        assert seg.gamma == pytest.approx(60.0, abs=1e-9)
        # endpoint check: p(1) = 720/120 - 360/24 + 60/6 = 1
        assert seg.alpha / 120 + seg.beta / 24 + seg.gamma / 6 == pytest.approx(1.0)

    def test_rest_to_rest_double_duration(self):
        seg = solve_boundary(REST, AxisState(1.0, 0.0, 0.0), 2.0)
        assert seg.alpha == pytest.approx(720.0 / 32, abs=1e-9)
        end = evaluate(seg, 2.0)
        assert end.p == pytest.approx(1.0, abs=1e-9)
        assert end.v == pytest.approx(0.0, abs=1e-9)
        assert end.a == pytest.approx(0.0, abs=1e-9)

    def test_nonpositive_duration(self):
        with pytest.raises(ValueError):
            solve_boundary(REST, REST, 0.0)

    def test_endpoint_reproduction_random(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            start = random_state(rng)
            end = random_state(rng)
            duration = float(rng.uniform(0.2, 3.0))
            seg = solve_boundary(start, end, duration)
            got = evaluate(seg, duration)
            assert got.p == pytest.approx(end.p, abs=1e-9)
            assert got.v == pytest.approx(end.v, abs=1e-9)
            assert got.a == pytest.approx(end.a, abs=1e-9)


class TestEvaluate:
    def test_zero_segment(self):
        seg = solve_boundary(REST, REST, 1.0)
        state = evaluate(seg, 0.37)
        assert (state.p, state.v, state.a) == (0.0, 0.0, 0.0)

    def test_rest_to_rest_midpoint(self):
        seg = solve_boundary(REST, AxisState(1.0, 0.0, 0.0), 1.0)
        mid = evaluate(seg, 0.5)
        assert mid.p == pytest.approx(0.5, abs=1e-12)
        assert mid.v == pytest.approx(1.875, abs=1e-12)
        assert mid.a == pytest.approx(0.0, abs=1e-12)

    def test_tau_out_of_range(self):
        seg = solve_boundary(REST, REST, 1.0)
        with pytest.raises(OutOfRangeError):
            evaluate(seg, 1.5)

    def test_derivative_consistency(self):
        rng = np.random.default_rng(1)
        h = 1e-5
        for _ in range(200):
            seg = solve_boundary(random_state(rng), random_state(rng), 2.0)
            tau = float(rng.uniform(h, 2.0 - h))
            up, dn = evaluate(seg, tau + h), evaluate(seg, tau - h)
            mid = evaluate(seg, tau)
            v_fd = (up.p - dn.p) / (2 * h)
            a_fd = (up.v - dn.v) / (2 * h)
            assert v_fd == pytest.approx(mid.v, rel=1e-6, abs=1e-6)
            assert a_fd == pytest.approx(mid.a, rel=1e-6, abs=1e-6)


class TestSegmentFeasible:
    def test_zero_segment(self):
        seg = solve_boundary(REST, REST, 1.0)
        peaks = segment_feasible(seg, 3.0, 3.0)
        assert peaks.feasible and peaks.peak_v == 0.0 and peaks.peak_a == 0.0

    def test_rest_to_rest_peaks(self):
        # peak velocity 1.875 at mid; peak |a| = 10/sqrt(3) ~ 5.77 exceeds 3,
        # so the unit rest-to-rest segment is *not* feasible at a_max = 3
        seg = solve_boundary(REST, AxisState(1.0, 0.0, 0.0), 1.0)
        peaks = segment_feasible(seg, 3.0, 3.0)
        assert peaks.peak_v == pytest.approx(1.875, abs=1e-9)
        assert peaks.peak_a == pytest.approx(10.0 / np.sqrt(3.0), abs=1e-9)
        assert not peaks.feasible
        assert segment_feasible(seg, 3.0, 6.0).feasible

    def test_velocity_bound(self):
        seg = solve_boundary(REST, AxisState(1.0, 0.0, 0.0), 1.0)
        assert not segment_feasible(seg, 1.5, 6.0).feasible

    def test_rest_to_rest_family_scaling(self):
        # peak_v = 1.875 * dp / T for the rest-to-rest family
        rng = np.random.default_rng(2)
        for _ in range(100):
            dp = float(rng.uniform(0.1, 5.0))
            t = float(rng.uniform(0.2, 4.0))
            seg = solve_boundary(REST, AxisState(dp, 0.0, 0.0), t)
            peaks = segment_feasible(seg, 1e9, 1e9)
            assert peaks.peak_v == pytest.approx(1.875 * dp / t, abs=1e-9)

    def test_peaks_match_dense_sampling(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            seg = solve_boundary(random_state(rng), random_state(rng), 1.0)
            peaks = segment_feasible(seg, 1e9, 1e9)
            xs = np.linspace(0.0, seg.duration, 100_000)
            a0, v0 = seg.start.a, seg.start.v
            al, be, ga = seg.alpha, seg.beta, seg.gamma
            a = al / 6 * xs**3 + be / 2 * xs**2 + ga * xs + a0
            v = al / 24 * xs**4 + be / 6 * xs**3 + ga / 2 * xs**2 + a0 * xs + v0
            assert peaks.peak_a == pytest.approx(np.abs(a).max(), abs=1e-6)
            assert peaks.peak_v == pytest.approx(np.abs(v).max(), abs=1e-6)
            assert peaks.peak_a >= np.abs(a).max() - 1e-9  # closed form never under
            assert peaks.peak_v >= np.abs(v).max() - 1e-9

    def test_cross_check_mode(self):
        rng = np.random.default_rng(4)
        seg = solve_boundary(random_state(rng), random_state(rng), 1.0)
        plain = segment_feasible(seg, 3.0, 3.0)
        checked = segment_feasible(seg, 3.0, 3.0, cross_check=True)
        assert checked.peak_v >= plain.peak_v - 1e-12
        assert checked.peak_a >= plain.peak_a - 1e-12
        assert checked.peak_v == pytest.approx(plain.peak_v, abs=1e-6)


class TestPropagate:
    def test_two_identical_knots(self):
        traj = propagate([REST, REST], 1.0)
        assert len(traj.segments) == 1
        seg = traj.segments[0]
        assert (seg.alpha, seg.beta, seg.gamma) == (0.0, 0.0, 0.0)

    def test_constant_velocity_line(self):
        knots = [AxisState(float(k), 1.0, 0.0) for k in range(3)]
        traj = propagate(knots, 1.0)
        for k, seg in enumerate(traj.segments):
            assert seg.alpha == pytest.approx(0.0, abs=1e-9)
            assert seg.beta == pytest.approx(0.0, abs=1e-9)
            assert seg.gamma == pytest.approx(0.0, abs=1e-9)
            mid = evaluate(seg, 0.5)
            assert mid.p == pytest.approx(k + 0.5, abs=1e-9)
            assert mid.v == pytest.approx(1.0, abs=1e-9)
            assert mid.a == pytest.approx(0.0, abs=1e-9)

    def test_random_chaining(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            knots = [random_state(rng) for _ in range(6)]
            traj = propagate(knots, 0.5)
            for k, seg in enumerate(traj.segments):
                end = evaluate(seg, 0.5)
                assert end.p == pytest.approx(knots[k + 1].p, abs=1e-9)
                assert end.v == pytest.approx(knots[k + 1].v, abs=1e-9)
                assert end.a == pytest.approx(knots[k + 1].a, abs=1e-9)

    def test_single_knot_rejected(self):
        with pytest.raises(ValueError):
            propagate([REST], 1.0)


class TestSample:
    def test_knot_period_equals_sample_period(self):
        knots = [AxisState(float(k), 0.0, 0.0) for k in range(4)]
        traj = propagate(knots, 0.5)
        grid = TimeGrid(0.5, 4)
        states = sample(traj, grid)
        assert states == list(traj.knots)

    def test_zero_trajectory(self):
        traj = propagate([REST] * 3, 1.0)
        states = sample(traj, TimeGrid(0.25, 9))
        assert all(s.p == 0.0 and s.v == 0.0 and s.a == 0.0 for s in states)

    def test_rest_to_rest_midpoint_sample(self):
        traj = propagate([REST, AxisState(1.0, 0.0, 0.0)], 1.0)
        states = sample(traj, TimeGrid(0.5, 3))
        assert states[1].p == pytest.approx(0.5, abs=1e-12)
        assert states[1].v == pytest.approx(1.875, abs=1e-12)

    def test_misaligned_grid_rejected(self):
        traj = propagate([REST, REST], 1.0)
        with pytest.raises(MisalignmentError):
            sample(traj, TimeGrid(0.3, 4))


class TestBoundaryBasis:
    def test_matches_direct_evaluation(self):
        rng = np.random.default_rng(6)
        offsets = np.array([0.0, 0.1, 0.35, 0.5, 0.99])
        bp, bv, ba = boundary_basis(offsets, 1.0)
        for _ in range(50):
            start, end = random_state(rng), random_state(rng)
            seg = solve_boundary(start, end, 1.0)
            bound = np.array([start.p, start.v, start.a, end.p, end.v, end.a])
            for j, tau in enumerate(offsets):
                state = evaluate(seg, float(tau))
                assert bp[j] @ bound == pytest.approx(state.p, abs=1e-9)
                assert bv[j] @ bound == pytest.approx(state.v, abs=1e-9)
                assert ba[j] @ bound == pytest.approx(state.a, abs=1e-9)

    def test_linearity_shape(self):
        bp, bv, ba = boundary_basis([0.0, 0.5], 2.0)
        assert bp.shape == bv.shape == ba.shape == (2, 6)
        # at tau = 0 the sample is exactly the start state
        np.testing.assert_allclose(bp[0], [1, 0, 0, 0, 0, 0], atol=1e-12)
        np.testing.assert_allclose(bv[0], [0, 1, 0, 0, 0, 0], atol=1e-12)
        np.testing.assert_allclose(ba[0], [0, 0, 1, 0, 0, 0], atol=1e-12)
