"""Occluded-region computation from the ego's viewpoint.

Each obstacle casts a shadow bounded by the two obstacle vertices that
subtend the greatest angle at the ego centre. The exported quadrilateral
extends those tangent rays until their total length from the ego equals
the sensor range; point classification uses the exact wedge (between the
tangent rays, beyond the tangent chord) so that no sliver between the
quad's straight far edge and the range circle is misclassified.
Everything beyond sensor range is occluded. Per-lane midline intervals
summarize which road sections the ego cannot see.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import Point

from .errors import DegenerateObstacleError, EgoInsideObstacleError
from .scene import ObstaclePolygon, StaticScene, VehicleState, observable_vehicles

_ANGLE_EPS = 1e-12


def _tangent_pair(ego: np.ndarray, obstacle: ObstaclePolygon) -> tuple[int, int, float]:
    """Indices of the vertex pair subtending the greatest angle at ego,
    ties broken by the nearer pair, plus the angle itself."""
    rel = obstacle.vertices - ego
    dist = np.hypot(rel[:, 0], rel[:, 1])
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    diff = np.abs(ang[:, None] - ang[None, :])
    pair_angle = np.minimum(diff, 2.0 * np.pi - diff)
    pair_dist = dist[:, None] + dist[None, :]
    n = len(rel)
    best = None
    for i in range(n):
        for j in range(i + 1, n):
            key = (pair_angle[i, j], -pair_dist[i, j])
            if best is None or key > best[0]:
                best = (key, i, j)
    _, i, j = best
    return i, j, float(pair_angle[i, j])


def shadow_of(ego_centre, obstacle: ObstaclePolygon, sensor_range: float) -> np.ndarray:
    """Shadow quadrilateral cast by one obstacle.

    Args:
        ego_centre: 2D viewpoint, strictly outside the obstacle.
        obstacle: the occluding polygon.
        sensor_range: > 0; tangent segments are extended so their total
            length from the ego equals this (or the vertex distance,
            whichever is larger, so rays never invert).

    Returns:
        (4, 2) array (v1, v2, v4, v3), counter-clockwise, where v1 and v2
        are the maximal-angle obstacle vertices and v4, v3 their ray
        extensions.
    """
    ego = np.asarray(ego_centre, dtype=float)
    if sensor_range <= 0:
        raise ValueError("sensor_range must be > 0")
    if obstacle.shapely.covers(Point(ego)):
        raise EgoInsideObstacleError("ego centre inside or on obstacle polygon")

    i, j, max_angle = _tangent_pair(ego, obstacle)
    if max_angle <= _ANGLE_EPS:
        raise DegenerateObstacleError("obstacle subtends zero angle at ego centre")
    if max_angle >= np.pi - _ANGLE_EPS:
        raise DegenerateObstacleError("obstacle subtends a straight angle at ego centre")

    verts = obstacle.vertices
    rel = verts - ego
    dist = np.hypot(rel[:, 0], rel[:, 1])
    # order the pair so the quad (v1, v2, far2, far1) winds counter-
    # clockwise; cross(u1, u2) <= 0 does this even when both vertices sit
    # at or beyond the range and the quad collapses to a segment
    if rel[i, 0] * rel[j, 1] - rel[i, 1] * rel[j, 0] > 0:
        i, j = j, i
    v1, v2 = verts[i], verts[j]
    far1 = ego + rel[i] * (max(sensor_range, dist[i]) / dist[i])
    far2 = ego + rel[j] * (max(sensor_range, dist[j]) / dist[j])
    return np.array([v1, v2, far2, far1])


@dataclass
class OccludedRegionSet:
    """Everything hidden from one ego position: shadow quads, the
    out-of-range region, and per-lane occluded midline intervals.

    shadow_quads holds the exported quadrilaterals; the wedge arrays
    below drive the exact point classification.
    """

    ego_centre: np.ndarray
    sensor_range: float
    shadow_quads: list[np.ndarray] = field(default_factory=list)
    road_occlusions: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.ego_centre = np.asarray(self.ego_centre, dtype=float)
        n = len(self.shadow_quads)
        # Per shadow: tangent ray directions u1, u2 and the chord v1->v2,
        # oriented so the shadow is left of ego->v2, right of ego->v1,
        # and left of v1->v2 (matching the CCW quad).
        self._v1 = np.zeros((n, 2))
        self._u1 = np.zeros((n, 2))
        self._u2 = np.zeros((n, 2))
        self._chord = np.zeros((n, 2))
        for k, q in enumerate(self.shadow_quads):
            self._v1[k] = q[0]
            self._u1[k] = q[0] - self.ego_centre
            self._u2[k] = q[1] - self.ego_centre
            self._chord[k] = q[1] - q[0]

    @classmethod
    def empty(cls) -> "OccludedRegionSet":
        """A see-everything set (no shadows, unbounded range)."""
        return cls(ego_centre=np.zeros(2), sensor_range=float("inf"))

    def covers_points(self, pts: np.ndarray) -> np.ndarray:
        """Boolean mask: which points lie in the occluded union (inside
        or on some obstacle's shadow wedge, or beyond sensor range)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts), dtype=bool)
        if np.isfinite(self.sensor_range):
            d = np.hypot(pts[:, 0] - self.ego_centre[0], pts[:, 1] - self.ego_centre[1])
            out |= d > self.sensor_range
        if len(self.shadow_quads):
            rel = pts[:, None, :] - self.ego_centre
            relc = pts[:, None, :] - self._v1
            right_of_u1 = _cross(self._u1, rel) <= 0.0
            left_of_u2 = _cross(self._u2, rel) >= 0.0
            # strictly beyond the chord: the shadow starts behind the
            # obstacle, so an obstacle-vehicle never hides itself
            beyond_chord = _cross(self._chord, relc) > 0.0
            out |= np.any(right_of_u1 & left_of_u2 & beyond_chord, axis=1)
        return out

    def interval_occluded(self, lane_id: str, s0: float, s1: float) -> bool:
        """True if [s0, s1] overlaps any occluded interval of the lane."""
        lo, hi = (s0, s1) if s0 <= s1 else (s1, s0)
        for a, b in self.road_occlusions.get(lane_id, []):
            if a <= hi and lo <= b:
                return True
        return False

    def first_occluded_from(self, lane_id: str, s0: float, s1: float) -> float | None:
        """Arclength of the nearest occluded point in [s0, s1] scanning
        from s0 toward s1, or None if the stretch is clear."""
        lo, hi = (s0, s1) if s0 <= s1 else (s1, s0)
        hits = [max(a, lo) if s0 <= s1 else min(b, hi)
                for a, b in self.road_occlusions.get(lane_id, [])
                if a <= hi and lo <= b]
        if not hits:
            return None
        return min(hits) if s0 <= s1 else max(hits)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def compute_occluded_regions(
    frame: dict[int, VehicleState],
    scene: StaticScene,
    ego_id: int,
    sensor_range: float = 100.0,
) -> OccludedRegionSet:
    """Occlusions for one frame from one ego's viewpoint.

    Obstacles are the scene's static polygons plus every non-ego vehicle
    footprint. Per-obstacle shadow failures (degenerate slivers, obstacles
    fully at/beyond range) are recorded as skips, never aborting the
    frame.

    Midline points count as occluded when beyond range, inside a shadow
    wedge, or covered by an obstacle polygon itself: the last case keeps
    the classification aligned with the segment line-of-sight test (an
    obstacle standing on a lane blocks sight of the midline beneath it).
    Vehicle visibility (covers_points) excludes the obstacle footprints
    themselves, so a vehicle-obstacle stays visible.
    """
    if ego_id not in frame:
        raise ValueError(f"ego {ego_id} not present in frame")
    ego = frame[ego_id].position
    obstacles = list(scene.obstacles)
    for vid in sorted(frame):
        if vid != ego_id:
            obstacles.append(ObstaclePolygon(frame[vid].footprint_polygon(), kind="vehicle"))

    quads: list[np.ndarray] = []
    skipped: list[str] = []
    kept: list[ObstaclePolygon] = []
    ego_pt = Point(ego)
    for k, obs in enumerate(obstacles):
        if obs.shapely.distance(ego_pt) >= sensor_range:
            skipped.append(f"obstacle {k} ({obs.kind}): beyond sensor range")
            continue
        try:
            quads.append(shadow_of(ego, obs, sensor_range))
            kept.append(obs)
        except (DegenerateObstacleError, EgoInsideObstacleError) as e:
            skipped.append(f"obstacle {k} ({obs.kind}): {e}")

    regions = OccludedRegionSet(
        ego_centre=ego, sensor_range=sensor_range, shadow_quads=quads, skipped=skipped
    )

    cover = None
    if kept:
        cover = shapely.union_all([o.shapely for o in kept])
        shapely.prepare(cover)

    road: dict[str, list[tuple[float, float]]] = {}
    half = scene.MIDLINE_STEP / 2.0
    for lane in scene.lanes:
        centre_gap = float(np.hypot(*(scene.lane_bound_centre[lane.id] - ego)))
        if centre_gap - scene.lane_bound_radius[lane.id] > sensor_range:
            road[lane.id] = [(0.0, lane.length)]
            continue
        ss, pts = scene.midline_samples[lane.id]
        mask = regions.covers_points(pts)
        if cover is not None:
            rest = ~mask
            if np.any(rest):
                mask[rest] = shapely.intersects_xy(cover, pts[rest, 0], pts[rest, 1])
        intervals = _mask_to_intervals(mask, ss, lane.length, half)
        if intervals:
            road[lane.id] = intervals
    regions.road_occlusions = road
    return regions


def _mask_to_intervals(
    mask: np.ndarray, ss: np.ndarray, length: float, half: float
) -> list[tuple[float, float]]:
    """Merge runs of occluded samples into disjoint intervals, widened by
    half a sample step at each end (clamped to the lane)."""
    if not np.any(mask):
        return []
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, ends = edges[0::2], edges[1::2] - 1
    return [
        (max(0.0, float(ss[a]) - half), min(length, float(ss[b]) + half))
        for a, b in zip(starts, ends)
    ]


def export_occlusion_dataset(recording, scene: StaticScene, sensor_range: float, out_path) -> dict:
    """Write the occlusion dataset JSON for one recording.

    One record per (frame, ego) pair: shadow quads, occluded lane
    intervals, and the ids of vehicles the ego cannot see.
    """
    frames_out = []
    for t, frame in recording.iter_frames():
        for ego_id in sorted(frame):
            regions = compute_occluded_regions(frame, scene, ego_id, sensor_range)
            obs = observable_vehicles(frame, ego_id, regions)
            occluded = sorted(set(frame) - set(obs.visible_states))
            frames_out.append(
                {
                    "t": round(float(t), 6),
                    "ego_id": ego_id,
                    "shadow_quads": [np.round(q, 6).tolist() for q in regions.shadow_quads],
                    "lane_occlusions": {
                        lane_id: [[round(a, 4), round(b, 4)] for a, b in ivs]
                        for lane_id, ivs in sorted(regions.road_occlusions.items())
                    },
                    "occluded_vehicles": occluded,
                }
            )
    doc = {
        "scenario_id": scene.scenario_id,
        "sensor_range_m": sensor_range,
        "frames": frames_out,
    }
    with open(out_path, "w") as f:
        json.dump(doc, f)
    return doc
