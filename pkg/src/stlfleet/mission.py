"""Inspection scenario model and STL mission formula construction.

A mission holds the workspace, obstacle and target regions, the drone
roster with initial states, and the timing/distance parameters. The
formula builder turns it into the conjunction: pairwise separation and
workspace/obstacle safety hold always; each assigned target is reached
within [0, 2T/3]; each drone is home within [2T/3, T].
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .config import Disturbance, PlannerConfig, ReplanSettings, TriggerConfig
from .errors import ScenarioError
from .stl import (
    Always,
    And,
    BoxMembership,
    Eventually,
    Formula,
    PairDistanceAtLeast,
    Pred,
    RegionAvoid,
    TimeGrid,
    Until,
)

_HOME_SIZE = 1.0  # home regions are 1 m cubes centered on the initial position


# ---------------------------------------------------------------------------
# regions


@dataclass(eq=False)
class Box:
    name: str
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=float)
        self.max = np.asarray(self.max, dtype=float)
        if self.min.shape != (3,) or self.max.shape != (3,):
            raise ScenarioError(f"region {self.name!r}: min/max must be 3-vectors")
        if not np.all(self.min < self.max):
            raise ScenarioError(f"region {self.name!r}: min must be < max componentwise")

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward unit normals and offsets; inside iff n.x <= d for all faces."""
        eye = np.eye(3)
        normals = np.vstack([eye, -eye])
        offsets = np.concatenate([self.max, -self.min])
        return normals, offsets

    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    def contains(self, point, tol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.min - tol) and np.all(p <= self.max + tol))


@dataclass(eq=False)
class ConvexPolyhedron:
    name: str
    normals: np.ndarray  # (F, 3), normalized on construction
    offsets: np.ndarray  # (F,)

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)
        if self.normals.ndim != 2 or self.normals.shape[1] != 3 or len(self.normals) == 0:
            raise ScenarioError(f"region {self.name!r}: needs at least one face")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(norms == 0):
            raise ScenarioError(f"region {self.name!r}: zero face normal")
        self.offsets = self.offsets / norms
        self.normals = self.normals / norms[:, None]
        self._check_bounded_nonempty()

    def _check_bounded_nonempty(self):
        probe = linprog(
            np.zeros(3), A_ub=self.normals, b_ub=self.offsets, bounds=[(None, None)] * 3
        )
        if not probe.success:
            raise ScenarioError(f"region {self.name!r}: empty polyhedron")
        for axis in range(3):
            for sign in (1.0, -1.0):
                c = np.zeros(3)
                c[axis] = sign
                res = linprog(
                    c, A_ub=self.normals, b_ub=self.offsets, bounds=[(None, None)] * 3
                )
                if res.status == 3:
                    raise ScenarioError(f"region {self.name!r}: unbounded polyhedron")

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        return self.normals, self.offsets

    def center(self) -> np.ndarray:
        # Chebyshev center: deepest interior point
        f = len(self.normals)
        a_ub = np.hstack([self.normals, np.ones((f, 1))])
        res = linprog(
            np.array([0.0, 0.0, 0.0, -1.0]),
            A_ub=a_ub,
            b_ub=self.offsets,
            bounds=[(None, None)] * 3 + [(0, None)],
        )
        if not res.success:
            raise ScenarioError(f"region {self.name!r}: center computation failed")
        return res.x[:3]

    def contains(self, point, tol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(self.normals @ p <= self.offsets + tol))


Region = Box | ConvexPolyhedron


def _regions_intersect(a: Region, b: Region) -> bool:
    na, da = a.halfspaces()
    nb, db = b.halfspaces()
    res = linprog(
        np.zeros(3),
        A_ub=np.vstack([na, nb]),
        b_ub=np.concatenate([da, db]),
        bounds=[(None, None)] * 3,
    )
    return bool(res.success)


def _region_inside_box(region: Region, box: Box) -> bool:
    n, d = region.halfspaces()
    for normal, offset in zip(*box.halfspaces()):
        res = linprog(-normal, A_ub=n, b_ub=d, bounds=[(None, None)] * 3)
        if not res.success or -res.fun > offset + 1e-9:
            return False
    return True


# ---------------------------------------------------------------------------
# mission


@dataclass(eq=False)
class DroneSpec:
    id: str
    initial_position: np.ndarray
    initial_velocity: np.ndarray = None
    initial_acceleration: np.ndarray = None
    headings: list = field(default_factory=list)  # per-target yaw metadata, radians

    def __post_init__(self):
        self.initial_position = np.asarray(self.initial_position, dtype=float)
        self.initial_velocity = (
            np.zeros(3)
            if self.initial_velocity is None
            else np.asarray(self.initial_velocity, dtype=float)
        )
        self.initial_acceleration = (
            np.zeros(3)
            if self.initial_acceleration is None
            else np.asarray(self.initial_acceleration, dtype=float)
        )
        for name in ("initial_position", "initial_velocity", "initial_acceleration"):
            if getattr(self, name).shape != (3,):
                raise ScenarioError(f"drone {self.id!r}: {name} must be a 3-vector")


@dataclass(eq=False)
class Mission:
    workspace: Box
    obstacles: list
    targets: list
    drones: list
    delta_min: float
    horizon: float
    cluster_count: int = 1
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    replanner: ReplanSettings | None = None

    def __post_init__(self):
        self.planner.horizon = self.horizon
        self.homes = {
            d.id: Box(
                f"home_{d.id}",
                d.initial_position - _HOME_SIZE / 2,
                d.initial_position + _HOME_SIZE / 2,
            )
            for d in self.drones
        }
        self.validate()

    def validate(self):
        q = len(self.drones)
        if q < 1:
            raise ScenarioError("mission needs at least one drone")
        if not 1 <= self.cluster_count <= q:
            raise ScenarioError("cluster_count must be between 1 and the drone count")
        if self.delta_min <= 0:
            raise ScenarioError("delta_min must be positive")
        if self.horizon <= 0:
            raise ScenarioError("horizon must be positive")
        ids = [d.id for d in self.drones]
        if len(set(ids)) != q:
            raise ScenarioError("drone ids must be unique")
        for d in self.drones:
            if not self.workspace.contains(d.initial_position):
                raise ScenarioError(
                    f"drone {d.id!r}: initial position outside the workspace"
                )
        for t in self.targets:
            if not _region_inside_box(t, self.workspace):
                raise ScenarioError(f"target {t.name!r} is not inside the workspace")
            for o in self.obstacles:
                if _regions_intersect(t, o):
                    raise ScenarioError(
                        f"target {t.name!r} intersects obstacle {o.name!r}"
                    )
        self.planner.validate()
        if self.replanner is not None:
            self.replanner.trigger.validate(self.planner.sample_period)
            for i, dist in enumerate(self.replanner.disturbances):
                if dist.drone not in ids:
                    raise ScenarioError(
                        f"replanner.disturbances[{i}]: unknown drone {dist.drone!r}"
                    )
                if dist.onset > self.horizon:
                    raise ScenarioError(
                        f"replanner.disturbances[{i}]: onset past the horizon"
                    )

    def drone_index(self, drone_id: str) -> int:
        for i, d in enumerate(self.drones):
            if d.id == drone_id:
                return i
        raise KeyError(drone_id)

    def grid(self) -> TimeGrid:
        return TimeGrid.from_horizon(self.horizon, self.planner.sample_period)


def assign_targets(mission: Mission) -> dict:
    """Round-robin target assignment: drone k gets targets k, k+q, k+2q, ..."""
    if not mission.targets:
        raise ScenarioError("mission has no targets to assign")
    q = len(mission.drones)
    out = {d.id: [] for d in mission.drones}
    for i, target in enumerate(mission.targets):
        out[mission.drones[i % q].id].append(target)
    return out


def target_deadline(mission: Mission) -> float:
    """Target visit window end 2T/3, snapped onto the sampling grid."""
    grid = mission.grid()
    idx = round((2.0 * mission.horizon / 3.0) / grid.sample_period)
    return idx * grid.sample_period


def build_formula(mission: Mission, assignment: dict, strict_until: bool = False) -> Formula:
    """Mission STL formula.

    Default form flattens the reach/return structure into timed
    Eventually conjuncts: targets within [0, 2T/3], home within [2T/3, T].
    With strict_until=True the reach/return part is expressed instead as
    (all targets) Until_[2T/3, T] (all home), rooted at t=0.
    """
    t_split = target_deadline(mission)
    horizon = mission.horizon
    conjuncts = []
    q = len(mission.drones)
    for i in range(q):
        for h in range(i + 1, q):
            conjuncts.append(
                Always((0.0, horizon), Pred(PairDistanceAtLeast(i, h, mission.delta_min)))
            )
    for i, drone in enumerate(mission.drones):
        conjuncts.append(
            Always((0.0, horizon), Pred(BoxMembership.from_region(i, mission.workspace)))
        )
        for obstacle in mission.obstacles:
            conjuncts.append(
                Always((0.0, horizon), Pred(RegionAvoid.from_region(i, obstacle)))
            )
    target_preds = []
    home_preds = []
    for i, drone in enumerate(mission.drones):
        for target in assignment.get(drone.id, []):
            target_preds.append(Pred(BoxMembership.from_region(i, target)))
        home_preds.append(Pred(BoxMembership.from_region(i, mission.homes[drone.id])))
    if strict_until:
        conjuncts.append(
            Until(
                (t_split, horizon),
                And(target_preds) if target_preds else And(home_preds),
                And(home_preds),
            )
        )
    else:
        for i, drone in enumerate(mission.drones):
            for target in assignment.get(drone.id, []):
                conjuncts.append(
                    Eventually((0.0, t_split), Pred(BoxMembership.from_region(i, target)))
                )
        for i, drone in enumerate(mission.drones):
            conjuncts.append(
                Eventually(
                    (t_split, horizon),
                    Pred(BoxMembership.from_region(i, mission.homes[drone.id])),
                )
            )
    return And(conjuncts)


# ---------------------------------------------------------------------------
# scenario files (JSON)


def _require_keys(doc: dict, allowed: set, path: str):
    unknown = set(doc) - allowed
    if unknown:
        raise ScenarioError(f"{path}: unknown keys {sorted(unknown)}")


def _get(doc: dict, key: str, path: str):
    if key not in doc:
        raise ScenarioError(f"{path}: missing required key {key!r}")
    return doc[key]


def _parse_region(doc, path: str) -> Region:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: region must be an object")
    if "faces" in doc:
        _require_keys(doc, {"name", "faces"}, path)
        faces = _get(doc, "faces", path)
        try:
            normals = [f["normal"] for f in faces]
            offsets = [f["offset"] for f in faces]
        except (TypeError, KeyError) as exc:
            raise ScenarioError(f"{path}.faces: each face needs normal and offset") from exc
        return ConvexPolyhedron(_get(doc, "name", path), normals, offsets)
    _require_keys(doc, {"name", "min", "max"}, path)
    return Box(_get(doc, "name", path), _get(doc, "min", path), _get(doc, "max", path))


def _region_to_dict(region: Region) -> dict:
    if isinstance(region, Box):
        return {"name": region.name, "min": list(region.min), "max": list(region.max)}
    return {
        "name": region.name,
        "faces": [
            {"normal": list(n), "offset": float(d)}
            for n, d in zip(region.normals, region.offsets)
        ],
    }


_PLANNER_KEYS = {
    "c",
    "sample_period",
    "knot_period",
    "v_max",
    "a_max",
    "max_iterations",
    "tolerance",
    "multistart_count",
    "rng_seed",
    "energy_weight",
    "decouple_axes",
}


def mission_from_dict(doc: dict) -> Mission:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    _require_keys(
        doc,
        {
            "workspace",
            "obstacles",
            "targets",
            "drones",
            "delta_min",
            "cluster_count",
            "horizon",
            "planner",
            "replanner",
        },
        "scenario",
    )
    workspace = _parse_region(_get(doc, "workspace", "scenario"), "workspace")
    if not isinstance(workspace, Box):
        raise ScenarioError("workspace: must be a box region")
    obstacles = [
        _parse_region(o, f"obstacles[{i}]") for i, o in enumerate(doc.get("obstacles", []))
    ]
    targets = [
        _parse_region(t, f"targets[{i}]") for i, t in enumerate(_get(doc, "targets", "scenario"))
    ]
    drones = []
    for i, d in enumerate(_get(doc, "drones", "scenario")):
        path = f"drones[{i}]"
        _require_keys(
            d,
            {"id", "initial_position", "initial_velocity", "initial_acceleration", "headings"},
            path,
        )
        drones.append(
            DroneSpec(
                id=str(_get(d, "id", path)),
                initial_position=_get(d, "initial_position", path),
                initial_velocity=d.get("initial_velocity"),
                initial_acceleration=d.get("initial_acceleration"),
                headings=list(d.get("headings", [])),
            )
        )
    planner = PlannerConfig()
    pdoc = doc.get("planner", {})
    _require_keys(pdoc, _PLANNER_KEYS, "planner")
    for key, value in pdoc.items():
        setattr(planner, key, value)
    replanner = None
    if "replanner" in doc:
        rdoc = doc["replanner"]
        _require_keys(
            rdoc, {"eta", "event_period", "topic_period", "disturbances"}, "replanner"
        )
        trigger = TriggerConfig(
            eta=rdoc.get("eta", 1.0),
            event_period=rdoc.get("event_period", 0.5),
            topic_period=rdoc.get("topic_period", 5.0),
        )
        disturbances = []
        for i, dd in enumerate(rdoc.get("disturbances", [])):
            path = f"replanner.disturbances[{i}]"
            _require_keys(dd, {"drone", "onset", "offset", "decay"}, path)
            disturbances.append(
                Disturbance(
                    drone=str(_get(dd, "drone", path)),
                    onset=float(_get(dd, "onset", path)),
                    offset_vector=_get(dd, "offset", path),
                    decay=float(dd.get("decay", 0.0)),
                )
            )
        replanner = ReplanSettings(trigger=trigger, disturbances=disturbances)
    try:
        return Mission(
            workspace=workspace,
            obstacles=obstacles,
            targets=targets,
            drones=drones,
            delta_min=float(_get(doc, "delta_min", "scenario")),
            horizon=float(_get(doc, "horizon", "scenario")),
            cluster_count=int(doc.get("cluster_count", 1)),
            planner=planner,
            replanner=replanner,
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"scenario: {exc}") from exc


def mission_to_dict(mission: Mission) -> dict:
    doc = {
        "workspace": _region_to_dict(mission.workspace),
        "obstacles": [_region_to_dict(o) for o in mission.obstacles],
        "targets": [_region_to_dict(t) for t in mission.targets],
        "drones": [
            {
                "id": d.id,
                "initial_position": list(d.initial_position),
                "initial_velocity": list(d.initial_velocity),
                "initial_acceleration": list(d.initial_acceleration),
                "headings": list(d.headings),
            }
            for d in mission.drones
        ],
        "delta_min": mission.delta_min,
        "cluster_count": mission.cluster_count,
        "horizon": mission.horizon,
        "planner": {
            "c": mission.planner.c,
            "sample_period": mission.planner.sample_period,
            "knot_period": mission.planner.knot_period,
            "v_max": mission.planner.v_max,
            "a_max": mission.planner.a_max,
            "max_iterations": mission.planner.max_iterations,
            "tolerance": mission.planner.tolerance,
            "multistart_count": mission.planner.multistart_count,
            "rng_seed": mission.planner.rng_seed,
            "energy_weight": mission.planner.energy_weight,
            "decouple_axes": mission.planner.decouple_axes,
        },
    }
    if mission.replanner is not None:
        doc["replanner"] = {
            "eta": mission.replanner.trigger.eta,
            "event_period": mission.replanner.trigger.event_period,
            "topic_period": mission.replanner.trigger.topic_period,
            "disturbances": [
                {
                    "drone": d.drone,
                    "onset": d.onset,
                    "offset": list(d.offset_vector),
                    "decay": d.decay,
                }
                for d in mission.replanner.disturbances
            ],
        }
    return doc


def load_scenario(path) -> Mission:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return mission_from_dict(doc)


def save_scenario(mission: Mission, path):
    with open(path, "w") as fh:
        json.dump(mission_to_dict(mission), fh, indent=2)
        fh.write("\n")
