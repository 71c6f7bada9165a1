"""Exact and smooth robustness semantics, gradients, and error bounds."""
import math

import numpy as np
import pytest

from conftest import (
    brute_robustness,
    random_formula,
    random_predicate,
    random_trace,
    random_until,
)
from stlfleet import (
    AffineHalfspace,
    Always,
    And,
    Eventually,
    Not,
    Or,
    PairDistanceAtLeast,
    Pred,
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
from stlfleet.errors import HorizonOverflowError, MisalignmentError, OutOfRangeError
from stlfleet.stl import lse_depth_arity


def const_trace(positions, sample_period=0.05, count=1201):
    grid = TimeGrid(sample_period, count)
    p = np.tile(np.asarray(positions, dtype=float)[:, None, :], (1, count, 1))
    return Trace(grid, p, np.zeros_like(p))


def signal_trace(values, sample_period=1.0):
    """1-drone trace whose x-position carries `values`; y = z = 0."""
    values = np.asarray(values, dtype=float)
    grid = TimeGrid(sample_period, len(values))
    p = np.zeros((1, len(values), 3))
    p[0, :, 0] = values
    return Trace(grid, p, np.zeros_like(p))


X_GE = lambda off: Pred(AffineHalfspace(0, "position", [1.0, 0.0, 0.0], off))


class TestIntervalToIndices:
    def test_full_horizon(self):
        grid = TimeGrid(0.05, 1201)
        assert interval_to_indices((0.0, 60.0), grid) == (0, 1200)

    def test_return_window(self):
        grid = TimeGrid(0.05, 1201)
        assert interval_to_indices((40.0, 60.0), grid) == (800, 1200)

    def test_degenerate(self):
        grid = TimeGrid(0.05, 1201)
        assert interval_to_indices((0.0, 0.0), grid) == (0, 0)

    def test_misaligned_endpoint(self):
        grid = TimeGrid(0.05, 1201)
        with pytest.raises(MisalignmentError):
            interval_to_indices((0.0, 0.07), grid)

    def test_outside_horizon(self):
        grid = TimeGrid(0.05, 1201)
        with pytest.raises(OutOfRangeError):
            interval_to_indices((0.0, 61.0), grid)


class TestExactSemantics:
    def test_predicate_value(self):
        trace = const_trace([[2.0, 0.0, 0.0]], count=5)
        assert robustness(X_GE(1.0), trace) == 1.0

    def test_always_window_min(self):
        trace = signal_trace([1.0, -0.5, 3.0])
        assert robustness(Always((0.0, 2.0), X_GE(0.0)), trace) == -0.5

    def test_until_example(self):
        # left constant 1, right [-1, 2, -1] over window {0,1,2}
        trace = signal_trace([-1.0, 2.0, -1.0])
        left = Pred(AffineHalfspace(0, "velocity", [1.0, 0.0, 0.0], -1.0))
        # velocity is zero everywhere -> left-values are 1 at every sample
        right = X_GE(0.0)
        assert robustness(Until((0.0, 2.0), left, right), trace) == 1.0

    def test_negation_duality_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            trace = random_trace(rng)
            phi = random_formula(rng, trace.grid, 2, 2, 10)
            k = int(rng.integers(0, 5))
            assert robustness(Not(phi), trace, k) == -robustness(phi, trace, k)

    def test_window_overflow(self):
        trace = signal_trace([0.0, 1.0, 2.0])
        with pytest.raises(HorizonOverflowError):
            robustness(Always((0.0, 2.0), X_GE(0.0)), trace, k=1)

    def test_root_out_of_range(self):
        trace = signal_trace([0.0, 1.0])
        with pytest.raises(OutOfRangeError):
            robustness(X_GE(0.0), trace, k=5)


class TestBruteForceOracle:
    def test_single_operator_formulas(self):
        # one temporal or boolean operator over random predicates
        rng = np.random.default_rng(11)
        makers = [
            lambda g: Pred(random_predicate(rng, 2)),
            lambda g: Not(Pred(random_predicate(rng, 2))),
            lambda g: And([Pred(random_predicate(rng, 2)) for _ in range(3)]),
            lambda g: Or([Pred(random_predicate(rng, 2)) for _ in range(3)]),
            lambda g: Always(
                (0.0, float(rng.integers(0, 10)) * g.sample_period),
                Pred(random_predicate(rng, 2)),
            ),
            lambda g: Eventually(
                (0.0, float(rng.integers(0, 10)) * g.sample_period),
                Pred(random_predicate(rng, 2)),
            ),
            lambda g: random_until(rng, g, 2, 8),
        ]
        for i in range(1000):
            trace = random_trace(rng, count=25)
            phi = makers[i % len(makers)](trace.grid)
            k = int(rng.integers(0, 10))
            assert robustness(phi, trace, k) == brute_robustness(phi, trace, k)

    def test_nested_formulas(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            trace = random_trace(rng, count=30)
            phi = random_formula(rng, trace.grid, 2, 3, 12)
            k = int(rng.integers(0, 6))
            got = robustness(phi, trace, k)
            want = brute_robustness(phi, trace, k)
            assert got == pytest.approx(want, abs=1e-12)

    def test_nested_until(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            trace = random_trace(rng, count=30)
            interval, used = (
                (0.0, 6 * trace.grid.sample_period),
                6,
            )
            phi = Until(
                interval,
                random_formula(rng, trace.grid, 2, 2, 8),
                random_formula(rng, trace.grid, 2, 2, 8),
            )
            k = int(rng.integers(0, 4))
            assert robustness(phi, trace, k) == pytest.approx(
                brute_robustness(phi, trace, k), abs=1e-12
            )


class TestSmoothSemantics:
    def test_smooth_max_pair(self):
        assert smooth_max([0.0, 1.0], 5.0) == pytest.approx(1.0013430696978236, abs=1e-12)

    def test_smooth_min_pair(self):
        assert smooth_min([0.0, 1.0], 5.0) == pytest.approx(-0.0013430696978236, abs=1e-12)

    def test_singleton_identity(self):
        for c in (1.0, 5.0, 50.0):
            assert smooth_max([0.7], c) == pytest.approx(0.7, abs=1e-15)
            assert smooth_min([0.7], c) == pytest.approx(0.7, abs=1e-15)

    def test_lse_error_bound(self):
        rng = np.random.default_rng(19)
        for _ in range(1000):
            m = int(rng.integers(1, 12))
            vals = rng.normal(0.0, 3.0, m)
            for c in (1.0, 5.0, 50.0):
                assert abs(smooth_max(vals, c) - vals.max()) <= math.log(m) / c + 1e-12
                assert abs(smooth_min(vals, c) - vals.min()) <= math.log(m) / c + 1e-12
            e5 = abs(smooth_max(vals, 5.0) - vals.max())
            e50 = abs(smooth_max(vals, 50.0) - vals.max())
            assert e50 <= e5 + 1e-12

    def test_stabilized_no_overflow(self):
        # |c * rho| up to 1e6 must not overflow or lose the answer
        vals = np.array([1e5, 2e5, -1e5])
        out = smooth_max(vals, 5.0)
        assert np.isfinite(out) and out == pytest.approx(2e5, rel=1e-12)
        out = smooth_min(vals, 5.0)
        assert np.isfinite(out) and out == pytest.approx(-1e5, rel=1e-12)

    def test_smooth_formula_bound_and_duality(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            trace = random_trace(rng, count=25)
            phi = random_formula(rng, trace.grid, 2, 3, 10)
            k = int(rng.integers(0, 5))
            exact = robustness(phi, trace, k)
            smooth = smooth_robustness(phi, trace, k, 5.0)
            depth, arity = lse_depth_arity(phi, trace.grid)
            assert abs(smooth - exact) <= depth * math.log(max(arity, 2)) / 5.0 + 1e-12
            assert smooth_robustness(Not(phi), trace, k, 5.0) == pytest.approx(
                -smooth, abs=1e-12
            )

    def test_smooth_approaches_exact(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            trace = random_trace(rng, count=25)
            phi = random_formula(rng, trace.grid, 2, 2, 10)
            exact = robustness(phi, trace, 0)
            e5 = abs(smooth_robustness(phi, trace, 0, 5.0) - exact)
            e50 = abs(smooth_robustness(phi, trace, 0, 50.0) - exact)
            assert e50 <= e5 + 1e-12

    def test_c_below_one_rejected(self):
        trace = signal_trace([0.0, 1.0])
        with pytest.raises(ValueError):
            smooth_robustness(X_GE(0.0), trace, 0, 0.5)


class TestGradient:
    def test_affine_predicate_gradient(self):
        trace = signal_trace([2.0, 0.0, 0.0])
        g = smooth_robustness_gradient(X_GE(1.0), trace, 0)
        expect = np.zeros_like(trace.positions)
        expect[0, 0, 0] = 1.0
        np.testing.assert_allclose(g.positions, expect)
        np.testing.assert_allclose(g.velocities, 0.0)

    def test_smooth_max_softmax_weights(self):
        # Or over two predicates with values 0 and 1 at c=5
        trace = signal_trace([0.0])
        phi = Or([X_GE(0.0), X_GE(-1.0)])
        g = smooth_robustness_gradient(phi, trace, 0, 5.0)
        w = math.exp(5.0) / (1.0 + math.exp(5.0))  # softmax weight of the 1-branch
        assert g.positions[0, 0, 0] == pytest.approx(1.0, abs=1e-12)  # weights sum
        assert w == pytest.approx(0.99331, abs=1e-5)

    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(31)
        checked = 0
        for _ in range(100):
            trace = random_trace(rng, count=20)
            phi = random_formula(rng, trace.grid, 2, 3, 8)
            k = int(rng.integers(0, 4))
            g = smooth_robustness_gradient(phi, trace, k, 5.0)
            h = 1e-6
            for chan in ("position", "velocity"):
                garr = g.channel(chan)
                if np.abs(garr).max() < 1e-6:
                    continue  # formula barely depends on this channel
                # probe the three largest gradient entries
                flat = np.argsort(np.abs(garr).ravel())[-3:]
                for j in flat:
                    d, i, axis = np.unravel_index(j, garr.shape)
                    pp = trace.positions.copy()
                    vv = trace.velocities.copy()
                    arr = pp if chan == "position" else vv
                    arr[d, i, axis] += h
                    up = smooth_robustness(phi, Trace(trace.grid, pp, vv), k, 5.0)
                    arr[d, i, axis] -= 2 * h
                    dn = smooth_robustness(phi, Trace(trace.grid, pp, vv), k, 5.0)
                    fd = (up - dn) / (2 * h)
                    ana = garr[d, i, axis]
                    assert ana == pytest.approx(fd, rel=1e-4, abs=1e-7)
                    checked += 1
        assert checked > 150

    def test_until_gradient_finite_difference(self):
        rng = np.random.default_rng(37)
        for _ in range(30):
            trace = random_trace(rng, count=20)
            phi = random_until(rng, trace.grid, 2, 8)
            g = smooth_robustness_gradient(phi, trace, 0, 5.0)
            h = 1e-6
            d = int(rng.integers(0, 2))
            i = int(rng.integers(0, 10))
            axis = int(rng.integers(0, 3))
            pp = trace.positions.copy()
            pp[d, i, axis] += h
            up = smooth_robustness(phi, Trace(trace.grid, pp, trace.velocities), 0, 5.0)
            pp[d, i, axis] -= 2 * h
            dn = smooth_robustness(phi, Trace(trace.grid, pp, trace.velocities), 0, 5.0)
            fd = (up - dn) / (2 * h)
            ana = g.positions[d, i, axis]
            if abs(fd) > 1e-7 or abs(ana) > 1e-7:
                assert ana == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_gradient_value_matches_smooth(self):
        rng = np.random.default_rng(41)
        trace = random_trace(rng, count=20)
        phi = random_formula(rng, trace.grid, 2, 3, 8)
        g = smooth_robustness_gradient(phi, trace, 0, 5.0)
        assert g.value == smooth_robustness(phi, trace, 0, 5.0)


class TestPairDistancePredicate:
    def test_zero_gradient_at_coincidence(self):
        grid = TimeGrid(1.0, 2)
        p = np.zeros((2, 2, 3))
        trace = Trace(grid, p, np.zeros_like(p))
        phi = Pred(PairDistanceAtLeast(0, 1, 1.0))
        g = smooth_robustness_gradient(phi, trace, 0)
        assert np.all(np.isfinite(g.positions))
        np.testing.assert_allclose(g.positions, 0.0)

    def test_symmetry(self):
        rng = np.random.default_rng(43)
        trace = random_trace(rng, count=5)
        a = robustness(Pred(PairDistanceAtLeast(0, 1, 2.0)), trace, 1)
        b = robustness(Pred(PairDistanceAtLeast(1, 0, 2.0)), trace, 1)
        assert a == b
