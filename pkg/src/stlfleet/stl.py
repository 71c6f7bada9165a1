"""STL formulas over sampled fleet trajectories.

Provides exact robustness evaluation, the smooth log-sum-exp (LSE)
approximation of the robustness, and the analytic gradient of the smooth
robustness with respect to every position/velocity sample of the trace.

Conventions:
  * a trace holds q drones sampled on a uniform grid of N+1 instants,
  * robustness > 0 means the formula is satisfied at the root instant,
  * disjunction is evaluated as a max, which equals the negation-dual
    not(and(not(...))) exactly, for both the exact and the LSE semantics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp, softmax

from .errors import HorizonOverflowError, MisalignmentError, OutOfRangeError

_ALIGN_RTOL = 1e-9

POSITION = "position"
VELOCITY = "velocity"


# ---------------------------------------------------------------------------
# time grid and traces


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling grid: N+1 instants 0, Ts, ..., N*Ts."""

    sample_period: float
    count: int

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")
        if self.count < 1:
            raise ValueError("grid needs at least one sample")

    @property
    def horizon(self) -> float:
        return (self.count - 1) * self.sample_period

    @classmethod
    def from_horizon(cls, horizon: float, sample_period: float) -> "TimeGrid":
        n = horizon / sample_period
        n_int = round(n)
        if abs(n - n_int) > _ALIGN_RTOL * max(1.0, abs(n)):
            raise MisalignmentError(
                f"horizon {horizon} is not an integer multiple of "
                f"sample_period {sample_period}"
            )
        return cls(sample_period, n_int + 1)

    def times(self) -> np.ndarray:
        return np.arange(self.count) * self.sample_period

    def index_of(self, t: float) -> int:
        """Grid index of time t; errors if t is off-grid or out of range."""
        x = t / self.sample_period
        i = round(x)
        if abs(x - i) > _ALIGN_RTOL * max(1.0, abs(x)):
            raise MisalignmentError(f"time {t} is not on the sampling grid")
        if i < 0 or i >= self.count:
            raise OutOfRangeError(f"time {t} is outside the grid horizon")
        return i


@dataclass
class Trace:
    """Sampled fleet trajectory: positions/velocities of shape (q, N+1, 3)."""

    grid: TimeGrid
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        expect = (self.drone_count, self.grid.count, 3)
        if self.positions.shape != expect or self.velocities.shape != expect:
            raise ValueError(
                f"trace arrays must have shape (q, {self.grid.count}, 3)"
            )
        if not (np.isfinite(self.positions).all() and np.isfinite(self.velocities).all()):
            raise ValueError("trace contains non-finite samples")

    @property
    def drone_count(self) -> int:
        return self.positions.shape[0]

    def channel(self, name: str) -> np.ndarray:
        if name == POSITION:
            return self.positions
        if name == VELOCITY:
            return self.velocities
        raise ValueError(f"unknown channel {name!r}")


def interval_to_indices(interval, grid: TimeGrid) -> tuple[int, int]:
    """Map an [a, b] interval (seconds) onto grid index endpoints."""
    a, b = float(interval[0]), float(interval[1])
    tol = _ALIGN_RTOL * grid.sample_period
    if a < -tol or b > grid.horizon + tol or a > b + tol:
        raise OutOfRangeError(
            f"interval [{a}, {b}] is outside the horizon [0, {grid.horizon}]"
        )
    ia = round(a / grid.sample_period)
    ib = round(b / grid.sample_period)
    if abs(a - ia * grid.sample_period) > tol or abs(b - ib * grid.sample_period) > tol:
        raise MisalignmentError(
            f"interval [{a}, {b}] endpoints do not align with the "
            f"{grid.sample_period} s sampling grid"
        )
    return max(ia, 0), min(ib, grid.count - 1)


# ---------------------------------------------------------------------------
# predicates


@dataclass(eq=False)
class AffineHalfspace:
    """mu = normal . s - offset on one drone's position or velocity."""

    drone: int
    channel: str
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        if self.normal.shape != (3,) or not np.any(self.normal):
            raise ValueError("normal must be a non-zero 3-vector")

    def values(self, trace: Trace, lo: int, hi: int) -> np.ndarray:
        s = trace.channel(self.channel)[self.drone, lo : hi + 1]
        # row-wise multiply-reduce keeps each sample's value independent of
        # the evaluation range (BLAS matvec kernels are shape-dependent)
        return (s * self.normal).sum(axis=1) - self.offset

    def backward(self, trace: Trace, lo: int, hi: int, w: np.ndarray, grad):
        tgt = grad.channel(self.channel)
        tgt[self.drone, lo : hi + 1] += w[:, None] * self.normal


@dataclass(eq=False)
class BoxMembership:
    """mu = min over the region's face half-space margins (positive inside)."""

    drone: int
    channel: str
    normals: np.ndarray  # (F, 3) outward unit normals, inside iff n.x <= d
    offsets: np.ndarray  # (F,)
    region_name: str = ""

    @classmethod
    def from_region(cls, drone: int, region, channel: str = POSITION):
        n, d = region.halfspaces()
        return cls(drone, channel, n, d, region_name=region.name)

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)

    def _margins(self, trace, lo, hi):
        s = trace.channel(self.channel)[self.drone, lo : hi + 1]
        return self.offsets - (s[:, None, :] * self.normals).sum(axis=2)  # (n, F)

    def values(self, trace, lo, hi):
        return self._margins(trace, lo, hi).min(axis=1)

    def backward(self, trace, lo, hi, w, grad):
        active = self._margins(trace, lo, hi).argmin(axis=1)
        tgt = grad.channel(self.channel)
        tgt[self.drone, lo : hi + 1] += w[:, None] * -self.normals[active]


@dataclass(eq=False)
class RegionAvoid:
    """mu = max over face exteriors (positive strictly outside the region)."""

    drone: int
    normals: np.ndarray
    offsets: np.ndarray
    region_name: str = ""

    @classmethod
    def from_region(cls, drone: int, region):
        n, d = region.halfspaces()
        return cls(drone, n, d, region_name=region.name)

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)

    def _margins(self, trace, lo, hi):
        s = trace.positions[self.drone, lo : hi + 1]
        return (s[:, None, :] * self.normals).sum(axis=2) - self.offsets

    def values(self, trace, lo, hi):
        return self._margins(trace, lo, hi).max(axis=1)

    def backward(self, trace, lo, hi, w, grad):
        active = self._margins(trace, lo, hi).argmax(axis=1)
        grad.positions[self.drone, lo : hi + 1] += w[:, None] * self.normals[active]


@dataclass(eq=False)
class PairDistanceAtLeast:
    """mu = ||p_i - p_h|| - delta; gradient defined as 0 at coincidence."""

    drone_i: int
    drone_h: int
    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.drone_i == self.drone_h:
            raise ValueError("distance predicate needs two distinct drones")

    def values(self, trace, lo, hi):
        u = trace.positions[self.drone_i, lo : hi + 1] - trace.positions[self.drone_h, lo : hi + 1]
        return np.linalg.norm(u, axis=1) - self.delta

    def backward(self, trace, lo, hi, w, grad):
        u = trace.positions[self.drone_i, lo : hi + 1] - trace.positions[self.drone_h, lo : hi + 1]
        r = np.linalg.norm(u, axis=1)
        direction = np.divide(u, r[:, None], out=np.zeros_like(u), where=r[:, None] > 0)
        grad.positions[self.drone_i, lo : hi + 1] += w[:, None] * direction
        grad.positions[self.drone_h, lo : hi + 1] -= w[:, None] * direction


# ---------------------------------------------------------------------------
# formulas


@dataclass(eq=False)
class Pred:
    predicate: object


@dataclass(eq=False)
class Not:
    sub: "Formula"


@dataclass(eq=False)
class And:
    subs: list

    def __post_init__(self):
        if not self.subs:
            raise ValueError("And needs at least one subformula")


@dataclass(eq=False)
class Or:
    subs: list

    def __post_init__(self):
        if not self.subs:
            raise ValueError("Or needs at least one subformula")


@dataclass(eq=False)
class Always:
    interval: tuple
    sub: "Formula"


@dataclass(eq=False)
class Eventually:
    interval: tuple
    sub: "Formula"


@dataclass(eq=False)
class Until:
    interval: tuple
    left: "Formula"
    right: "Formula"


Formula = Pred | Not | And | Or | Always | Eventually | Until


@dataclass
class RobustnessGradient:
    """Smooth robustness value and its gradient over every trace sample."""

    value: float
    positions: np.ndarray
    velocities: np.ndarray

    def channel(self, name: str) -> np.ndarray:
        if name == POSITION:
            return self.positions
        if name == VELOCITY:
            return self.velocities
        raise ValueError(f"unknown channel {name!r}")


# ---------------------------------------------------------------------------
# smooth scalar helpers


def smooth_max(values, c: float) -> float:
    """LSE approximation of max: (1/c) log sum exp(c v_i), stabilized."""
    v = np.asarray(values, dtype=float)
    return float(logsumexp(c * v) / c)


def smooth_min(values, c: float) -> float:
    """LSE approximation of min: -(1/c) log sum exp(-c v_i), stabilized."""
    v = np.asarray(values, dtype=float)
    return float(-logsumexp(-c * v) / c)


# ---------------------------------------------------------------------------
# evaluation


def _check_window(node, hi_needed: int, grid: TimeGrid):
    if hi_needed > grid.count - 1:
        raise HorizonOverflowError(
            f"{type(node).__name__} window reaches sample {hi_needed}, "
            f"past the last grid index {grid.count - 1}"
        )


def _win_reduce(vals: np.ndarray, m: int, c, minimum: bool) -> np.ndarray:
    win = sliding_window_view(vals, m)
    if c is None:
        return win.min(axis=1) if minimum else win.max(axis=1)
    if minimum:
        return -logsumexp(-c * win, axis=1) / c
    return logsumexp(c * win, axis=1) / c


def _eval(node, trace: Trace, lo: int, hi: int, c) -> np.ndarray:
    """Robustness of `node` at every root index in [lo, hi] (inclusive)."""
    grid = trace.grid
    if isinstance(node, Pred):
        return node.predicate.values(trace, lo, hi)
    if isinstance(node, Not):
        return -_eval(node.sub, trace, lo, hi, c)
    if isinstance(node, (And, Or)):
        stack = np.stack([_eval(s, trace, lo, hi, c) for s in node.subs])
        minimum = isinstance(node, And)
        if c is None:
            return stack.min(axis=0) if minimum else stack.max(axis=0)
        if minimum:
            return -logsumexp(-c * stack, axis=0) / c
        return logsumexp(c * stack, axis=0) / c
    if isinstance(node, (Always, Eventually)):
        ia, ib = interval_to_indices(node.interval, grid)
        _check_window(node, hi + ib, grid)
        sub = _eval(node.sub, trace, lo + ia, hi + ib, c)
        return _win_reduce(sub, ib - ia + 1, c, minimum=isinstance(node, Always))
    if isinstance(node, Until):
        ia, ib = interval_to_indices(node.interval, grid)
        _check_window(node, hi + ib, grid)
        left = _eval(node.left, trace, lo, hi + ib, c)
        right = _eval(node.right, trace, lo + ia, hi + ib, c)
        m = ib - ia + 1
        out = np.empty(hi - lo + 1)
        for idx in range(hi - lo + 1):
            lv = left[idx : idx + ib + 1]  # rho1 at k .. k+ib
            rv = right[idx : idx + m]  # rho2 at k+ia .. k+ib
            if c is None:
                inner = np.minimum.accumulate(lv)[ia:]
                out[idx] = np.minimum(rv, inner).max()
            else:
                inner = -np.logaddexp.accumulate(-c * lv)[ia:] / c
                pair = -np.logaddexp(-c * rv, -c * inner) / c
                out[idx] = logsumexp(c * pair) / c
        return out
    raise TypeError(f"not a formula node: {node!r}")


def robustness(formula, trace: Trace, k: int = 0) -> float:
    """Exact robustness of `formula` on `trace` at root sample k."""
    if not 0 <= k < trace.grid.count:
        raise OutOfRangeError(f"root index {k} outside the grid")
    return float(_eval(formula, trace, k, k, None)[0])


def smooth_robustness(formula, trace: Trace, k: int = 0, c: float = 5.0) -> float:
    """LSE robustness: same recursion with max/min replaced by smooth forms."""
    if c < 1:
        raise ValueError("c must be >= 1")
    if not 0 <= k < trace.grid.count:
        raise OutOfRangeError(f"root index {k} outside the grid")
    return float(_eval(formula, trace, k, k, float(c))[0])


# ---------------------------------------------------------------------------
# gradient (reverse mode through the LSE recursion)


def _backward(node, trace, lo, hi, w, c, grad):
    grid = trace.grid
    if isinstance(node, Pred):
        node.predicate.backward(trace, lo, hi, w, grad)
        return
    if isinstance(node, Not):
        _backward(node.sub, trace, lo, hi, -w, c, grad)
        return
    if isinstance(node, (And, Or)):
        stack = np.stack([_eval(s, trace, lo, hi, c) for s in node.subs])
        sign = -1.0 if isinstance(node, And) else 1.0
        weights = softmax(sign * c * stack, axis=0)
        for i, s in enumerate(node.subs):
            _backward(s, trace, lo, hi, w * weights[i], c, grad)
        return
    if isinstance(node, (Always, Eventually)):
        ia, ib = interval_to_indices(node.interval, grid)
        _check_window(node, hi + ib, grid)
        sub = _eval(node.sub, trace, lo + ia, hi + ib, c)
        m = ib - ia + 1
        sign = -1.0 if isinstance(node, Always) else 1.0
        win = sliding_window_view(sub, m)
        weights = softmax(sign * c * win, axis=1)  # (n_out, m)
        n_out = hi - lo + 1
        # window i covers sub[i + j]: accumulate along the anti-diagonals
        idx = np.arange(n_out)[:, None] + np.arange(m)[None, :]
        w_sub = np.bincount(
            idx.ravel(), (w[:, None] * weights).ravel(), minlength=sub.shape[0]
        )
        _backward(node.sub, trace, lo + ia, hi + ib, w_sub, c, grad)
        return
    if isinstance(node, Until):
        ia, ib = interval_to_indices(node.interval, grid)
        _check_window(node, hi + ib, grid)
        left = _eval(node.left, trace, lo, hi + ib, c)
        right = _eval(node.right, trace, lo + ia, hi + ib, c)
        m = ib - ia + 1
        w_left = np.zeros(left.shape)
        w_right = np.zeros(right.shape)
        for idx in range(hi - lo + 1):
            lv = left[idx : idx + ib + 1]
            rv = right[idx : idx + m]
            inner = -np.logaddexp.accumulate(-c * lv)[ia:] / c
            pair = -np.logaddexp(-c * rv, -c * inner) / c
            outer_w = softmax(c * pair)
            # split each pair min between rho2(t') and the prefix min
            pair_log = np.logaddexp(-c * rv, -c * inner)
            wr = np.exp(-c * rv - pair_log)
            wi = np.exp(-c * inner - pair_log)
            w_right[idx : idx + m] += w[idx] * outer_w * wr
            for j in range(m):
                prefix = lv[: ia + j + 1]
                iw = softmax(-c * prefix)
                w_left[idx : idx + ia + j + 1] += w[idx] * outer_w[j] * wi[j] * iw
        _backward(node.left, trace, lo, hi + ib, w_left, c, grad)
        _backward(node.right, trace, lo + ia, hi + ib, w_right, c, grad)
        return
    raise TypeError(f"not a formula node: {node!r}")


def smooth_robustness_gradient(
    formula, trace: Trace, k: int = 0, c: float = 5.0
) -> RobustnessGradient:
    """Analytic gradient of the smooth robustness w.r.t. all trace samples.

    Returns the smooth value together with dense gradient arrays shaped
    like trace.positions / trace.velocities.
    """
    value = smooth_robustness(formula, trace, k, c)
    grad = RobustnessGradient(
        value=value,
        positions=np.zeros_like(trace.positions),
        velocities=np.zeros_like(trace.velocities),
    )
    _backward(formula, trace, k, k, np.ones(1), float(c), grad)
    return grad


# ---------------------------------------------------------------------------
# approximation-error bookkeeping


def lse_depth_arity(formula, grid: TimeGrid) -> tuple[int, int]:
    """(D, M): LSE nesting depth and max operator arity of a formula.

    |smooth - exact| <= D * ln(M) / c. Until contributes three stacked
    LSE reductions (outer max, pair min, prefix min).
    """
    if isinstance(formula, Pred):
        return 0, 1
    if isinstance(formula, Not):
        return lse_depth_arity(formula.sub, grid)
    if isinstance(formula, (And, Or)):
        ds, ms = zip(*(lse_depth_arity(s, grid) for s in formula.subs))
        return 1 + max(ds), max(len(formula.subs), *ms)
    if isinstance(formula, (Always, Eventually)):
        ia, ib = interval_to_indices(formula.interval, grid)
        d, m = lse_depth_arity(formula.sub, grid)
        return 1 + d, max(ib - ia + 1, m)
    if isinstance(formula, Until):
        ia, ib = interval_to_indices(formula.interval, grid)
        dl, ml = lse_depth_arity(formula.left, grid)
        dr, mr = lse_depth_arity(formula.right, grid)
        return 3 + max(dl, dr), max(ib + 1, ml, mr)
    raise TypeError(f"not a formula node: {formula!r}")


def formula_predicates(formula):
    """Yield every predicate in the formula tree."""
    if isinstance(formula, Pred):
        yield formula.predicate
    elif isinstance(formula, Not):
        yield from formula_predicates(formula.sub)
    elif isinstance(formula, (And, Or)):
        for s in formula.subs:
            yield from formula_predicates(s)
    elif isinstance(formula, (Always, Eventually)):
        yield from formula_predicates(formula.sub)
    elif isinstance(formula, Until):
        yield from formula_predicates(formula.left)
        yield from formula_predicates(formula.right)
