"""Scene, vehicle, and goal domain types shared by every module.

Coordinates are metres in a right-handed frame; headings are radians in
(-pi, pi] with 0 along +x. All types are immutable after construction by
convention and safe to share across workers.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LineString, Point, Polygon

from .errors import SceneValidationError
from .geom import Polyline, wrap_angle


class GoalType(enum.Enum):
    """The closed set of maneuver categories a goal can have."""

    STRAIGHT_ON = "straight-on"
    CROSS_ROAD = "cross-road"
    EXIT_LEFT = "exit-left"
    ENTER_LEFT = "enter-left"
    EXIT_RIGHT = "exit-right"
    ENTER_RIGHT = "enter-right"
    EXIT_ROUNDABOUT = "exit-roundabout"

    @classmethod
    def from_string(cls, s: str) -> "GoalType":
        for member in cls:
            if member.value == s:
                return member
        raise ValueError(f"unknown goal type {s!r}")


@dataclass
class ObstaclePolygon:
    """A simple polygon blocking line of sight.

    kind is "static" for map obstacles (buildings) and "vehicle" for
    per-frame vehicle footprints.
    """

    vertices: np.ndarray
    kind: str = "static"

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2 or len(self.vertices) < 3:
            raise SceneValidationError("obstacle polygon needs >= 3 vertices")
        poly = Polygon(self.vertices)
        if not poly.is_valid:
            raise SceneValidationError("obstacle polygon is not simple")
        self.shapely = poly


@dataclass
class Lane:
    id: str
    midline: np.ndarray
    boundary: np.ndarray
    successors: list[str] = field(default_factory=list)
    predecessors: list[str] = field(default_factory=list)
    junction: str | None = None
    priority_rank: int = 0
    roundabout: bool = False
    slip_road: bool = False

    def __post_init__(self) -> None:
        self.midline = np.asarray(self.midline, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=float)
        if self.midline.ndim != 2 or len(self.midline) < 2:
            raise SceneValidationError(f"lane {self.id}: midline needs >= 2 points")
        if self.priority_rank < 0:
            raise SceneValidationError(f"lane {self.id}: priority_rank must be >= 0")
        poly = Polygon(self.boundary)
        if len(self.boundary) < 3 or not poly.is_valid:
            raise SceneValidationError(f"lane {self.id}: boundary polygon is not simple")
        self.polyline = Polyline(self.midline)
        self.length = self.polyline.length
        self.boundary_shapely = poly
        if not poly.buffer(0.01).covers(LineString(self.midline)):
            raise SceneValidationError(f"lane {self.id}: midline leaves the boundary polygon")


@dataclass
class Junction:
    id: str
    lanes: list[str] = field(default_factory=list)


class StaticScene:
    """Validated lane graph plus static obstacles.

    Construction precomputes the geometry caches the rest of the pipeline
    leans on (dense midline samples for occlusion tests, pairwise midline
    crossings for conflict-point lookups), so instances are read-only
    afterwards.
    """

    #: spacing of the cached midline sample points (metres)
    MIDLINE_STEP = 0.1

    def __init__(
        self,
        lanes: list[Lane],
        junctions: list[Junction] | None = None,
        obstacles: list[ObstaclePolygon] | None = None,
        scenario_id: str = "scene",
    ) -> None:
        self.lanes = list(lanes)
        self.junctions = list(junctions or [])
        self.obstacles = list(obstacles or [])
        self.scenario_id = scenario_id
        self.lanes_by_id: dict[str, Lane] = {}
        for lane in self.lanes:
            if lane.id in self.lanes_by_id:
                raise SceneValidationError(f"duplicate lane id {lane.id}")
            self.lanes_by_id[lane.id] = lane
        self.junctions_by_id = {j.id: j for j in self.junctions}
        for lane in self.lanes:
            for ref in list(lane.successors) + list(lane.predecessors):
                if ref not in self.lanes_by_id:
                    raise SceneValidationError(f"lane {lane.id}: reference to unknown lane {ref}")
            if lane.junction is not None and lane.junction not in self.junctions_by_id:
                raise SceneValidationError(f"lane {lane.id}: unknown junction {lane.junction}")
        for j in self.junctions:
            for ref in j.lanes:
                if ref not in self.lanes_by_id:
                    raise SceneValidationError(f"junction {j.id}: reference to unknown lane {ref}")
        self._build_caches()

    def _build_caches(self) -> None:
        self.midline_samples: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.lane_bound_centre: dict[str, np.ndarray] = {}
        self.lane_bound_radius: dict[str, float] = {}
        for lane in self.lanes:
            ss, pts = lane.polyline.sample(self.MIDLINE_STEP)
            self.midline_samples[lane.id] = (ss, pts)
            lo = pts.min(axis=0)
            hi = pts.max(axis=0)
            centre = (lo + hi) / 2.0
            self.lane_bound_centre[lane.id] = centre
            self.lane_bound_radius[lane.id] = float(np.max(np.hypot(*(pts - centre).T)))
        self._crossings = self._compute_crossings()

    def _compute_crossings(self) -> dict[str, list[tuple[str, float, float, float]]]:
        """Midline crossing points between lane pairs.

        Returns, per lane id, a list of (other-lane id, s on this lane,
        s on the other lane, unsigned crossing angle).
        """
        strings = {lane.id: LineString(lane.midline) for lane in self.lanes}
        out: dict[str, list[tuple[str, float, float, float]]] = {lane.id: [] for lane in self.lanes}
        ids = [lane.id for lane in self.lanes]
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                la, lb = self.lanes_by_id[a], self.lanes_by_id[b]
                gap = np.hypot(*(self.lane_bound_centre[a] - self.lane_bound_centre[b]))
                if gap > self.lane_bound_radius[a] + self.lane_bound_radius[b]:
                    continue
                if b in la.successors or b in la.predecessors:
                    continue
                inter = strings[a].intersection(strings[b])
                if inter.is_empty:
                    continue
                points: list[Point] = []
                if inter.geom_type == "Point":
                    points = [inter]
                elif inter.geom_type == "MultiPoint":
                    points = list(inter.geoms)
                for p in points:
                    sa, _ = la.polyline.project(p.x, p.y)
                    sb, _ = lb.polyline.project(p.x, p.y)
                    ang = abs(wrap_angle(la.polyline.tangent_at(sa) - lb.polyline.tangent_at(sb)))
                    out[a].append((b, sa, sb, ang))
                    out[b].append((a, sb, sa, ang))
        return out

    def crossings_of(self, lane_id: str) -> list[tuple[str, float, float, float]]:
        return self._crossings[lane_id]

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "lanes": [
                {
                    "id": lane.id,
                    "midline": lane.midline.tolist(),
                    "boundary": lane.boundary.tolist(),
                    "successors": list(lane.successors),
                    "predecessors": list(lane.predecessors),
                    "junction": lane.junction,
                    "priority_rank": lane.priority_rank,
                    "roundabout": lane.roundabout,
                    "slip_road": lane.slip_road,
                }
                for lane in self.lanes
            ],
            "junctions": [{"id": j.id, "lanes": list(j.lanes)} for j in self.junctions],
            "obstacles": [o.vertices.tolist() for o in self.obstacles],
        }


def save_scene(scene: StaticScene, path) -> None:
    with open(path, "w") as f:
        json.dump(scene.to_dict(), f, indent=1)


def load_scene(path) -> StaticScene:
    """Load and validate a scene JSON file."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise SceneValidationError(f"malformed scene JSON in {path}: {e}") from e
    return scene_from_dict(raw)


def scene_from_dict(raw: dict) -> StaticScene:
    try:
        lanes = [
            Lane(
                id=str(d["id"]),
                midline=d["midline"],
                boundary=d["boundary"],
                successors=[str(s) for s in d.get("successors", [])],
                predecessors=[str(s) for s in d.get("predecessors", [])],
                junction=d.get("junction"),
                priority_rank=int(d.get("priority_rank", 0)),
                roundabout=bool(d.get("roundabout", False)),
                slip_road=bool(d.get("slip_road", False)),
            )
            for d in raw["lanes"]
        ]
        junctions = [Junction(id=str(d["id"]), lanes=[str(x) for x in d.get("lanes", [])]) for d in raw.get("junctions", [])]
        obstacles = [ObstaclePolygon(v) for v in raw.get("obstacles", [])]
    except KeyError as e:
        raise SceneValidationError(f"scene JSON missing field {e}") from e
    return StaticScene(lanes, junctions, obstacles, scenario_id=str(raw.get("scenario_id", "scene")))


@dataclass
class VehicleState:
    vehicle_id: int
    time: float
    position: np.ndarray
    heading: float
    speed: float
    acceleration: float = 0.0
    length: float = 4.5
    width: float = 1.8

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        self.heading = wrap_angle(float(self.heading))
        if self.speed < 0:
            raise ValueError(f"vehicle {self.vehicle_id}: speed must be >= 0")
        if self.length <= 0 or self.width <= 0:
            raise ValueError(f"vehicle {self.vehicle_id}: footprint must have positive size")

    def footprint_polygon(self) -> np.ndarray:
        """Oriented-rectangle corners, counter-clockwise."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return self.position + local @ rot.T

    def boundary_points(self, step: float = 0.2) -> np.ndarray:
        """Corners plus edge points sampled every `step` metres."""
        corners = self.footprint_polygon()
        pts = [corners]
        for i in range(4):
            a = corners[i]
            b = corners[(i + 1) % 4]
            n = int(math.ceil(np.hypot(*(b - a)) / step))
            if n > 1:
                t = np.arange(1, n)[:, None] / n
                pts.append(a + t * (b - a))
        return np.vstack(pts)


@dataclass
class Observation:
    """One ego vehicle's filtered view of a frame."""

    time: float
    ego_id: int
    visible_states: dict[int, VehicleState]

    def __post_init__(self) -> None:
        if self.ego_id not in self.visible_states:
            raise ValueError("ego must be visible to itself")


@dataclass
class Goal:
    location: np.ndarray
    lane_id: str
    goal_type: GoalType

    def __post_init__(self) -> None:
        self.location = np.asarray(self.location, dtype=float)


def observable_vehicles(raw_frame: dict[int, VehicleState], ego_id: int, occlusions) -> Observation:
    """Filter a raw frame down to what the ego can see.

    A vehicle is dropped only when its entire footprint boundary
    (corners plus edge points every 0.2 m) lies inside the occluded
    union. `occlusions` may be None for a fully visible frame.

    Args:
        raw_frame: every vehicle present this frame.
        ego_id: the observing vehicle; must be present, always visible.
        occlusions: OccludedRegionSet or None.
    """
    if ego_id not in raw_frame:
        raise ValueError(f"ego {ego_id} not present in frame")
    visible: dict[int, VehicleState] = {}
    for vid, state in raw_frame.items():
        if vid == ego_id or occlusions is None:
            visible[vid] = state
            continue
        covered = occlusions.covers_points(state.boundary_points())
        if not bool(np.all(covered)):
            visible[vid] = state
    ego = raw_frame[ego_id]
    return Observation(time=ego.time, ego_id=ego_id, visible_states=visible)
