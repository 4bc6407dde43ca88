"""Per-(vehicle, goal) feature extraction.

Three feature families feed the goal trees:

  * base features that are always computable from the latest frame and
    the goal path (angles, path length, maneuver flags),
  * base features whose evidence can sit behind an occlusion
    (kinematics history, surrounding traffic),
  * one boolean indicator per potentially-missing feature, true exactly
    when that feature is missing.

Scan regions (vehicle in front, oncoming traffic) share one rule: a
visible vehicle closer than the nearest occluded point resolves the
feature; an occlusion closer than every visible vehicle makes it
missing; a fully visible empty region yields the sentinel (MAX_DIST
for distances, 0 for speeds) so trees always see an ordered value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FeatureConsistencyError
from .geom import wrap_angle
from .goals import (
    DEFAULT_MAX_DEPTH,
    LANE_MATCH_TOLERANCE,
    current_lane_of,
    find_path,
    iter_paths_to,
    path_length_to_goal,
)
from .occlusion import OccludedRegionSet
from .scene import Goal, Lane, Observation, StaticScene, VehicleState

# sentinel for an empty, fully visible scan region; equals sensor range
MAX_DIST = 100.0

# forward / upstream scan window around the vehicle and conflict points
SCAN_RANGE = 30.0

# features are computed at 1 Hz ticks; the frame nearest t-1s counts as
# the previous sample when within this tolerance
SAMPLE_PERIOD = 1.0
PREV_SAMPLE_TOLERANCE = 0.5

BASE_ALWAYS = (
    "angle-in-lane",
    "angle-to-goal",
    "in-correct-lane",
    "path-to-goal-length",
    "junction-heading-change",
    "roundabout-uturn",
    "roundabout-slip-road",
)

BASE_MISSING = (
    "roundabout-exit-number",
    "speed",
    "acceleration",
    "heading-change-1-second",
    "distance-to-vehicle-in-front",
    "speed-of-vehicle-in-front",
    "distance-from-oncoming-vehicle",
    "speed-of-oncoming-vehicle",
)

_BINARY = {"in-correct-lane", "roundabout-uturn", "roundabout-slip-road"}

_BOUNDS = {
    "angle-in-lane": (-math.pi, math.pi),
    "angle-to-goal": (-math.pi, math.pi),
    "in-correct-lane": (0.0, 1.0),
    "path-to-goal-length": (0.0, 500.0),
    "junction-heading-change": (-8.0, 8.0),
    "roundabout-uturn": (0.0, 1.0),
    "roundabout-slip-road": (0.0, 1.0),
    "roundabout-exit-number": (0.0, 10.0),
    "speed": (0.0, 50.0),
    "acceleration": (-10.0, 10.0),
    "heading-change-1-second": (-math.pi, math.pi),
    "distance-to-vehicle-in-front": (0.0, MAX_DIST),
    "speed-of-vehicle-in-front": (0.0, 50.0),
    "distance-from-oncoming-vehicle": (0.0, MAX_DIST),
    "speed-of-oncoming-vehicle": (0.0, 50.0),
}


@dataclass(frozen=True)
class FeatureCatalog:
    """Ordered feature ids plus per-feature kind and value bounds.

    `base_missing[i]` pairs with `indicators[i]`; the indicator id is
    always the feature id with a "-missing" suffix.
    """

    base_always: tuple[str, ...] = BASE_ALWAYS
    base_missing: tuple[str, ...] = BASE_MISSING
    indicators: tuple[str, ...] = tuple(f"{m}-missing" for m in BASE_MISSING)
    kinds: dict[str, str] = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(_BOUNDS))

    def __post_init__(self) -> None:
        if len(self.indicators) != len(self.base_missing):
            raise ValueError("one indicator per potentially-missing feature")
        if self.indicators != tuple(f"{m}-missing" for m in self.base_missing):
            raise ValueError("indicator ids must be '<feature>-missing' in order")
        all_ids = self.base_always + self.base_missing + self.indicators
        if len(set(all_ids)) != len(all_ids):
            raise ValueError("feature id sets must be pairwise disjoint")
        if not self.kinds:
            kinds = {fid: "binary" if fid in _BINARY else "scalar" for fid in self.base_always + self.base_missing}
            kinds.update({ind: "binary" for ind in self.indicators})
            object.__setattr__(self, "kinds", kinds)
        missing_bounds = [f for f in self.base_always + self.base_missing if f not in self.bounds]
        if missing_bounds:
            raise ValueError(f"bounds missing for {missing_bounds}")

    @property
    def all_base(self) -> tuple[str, ...]:
        return self.base_always + self.base_missing

    @property
    def columns(self) -> tuple[str, ...]:
        """CSV column order: base features then indicators."""
        return self.base_always + self.base_missing + self.indicators

    def indicator_of(self, feature_id: str) -> str:
        if feature_id not in self.base_missing:
            raise KeyError(f"{feature_id} has no indicator")
        return f"{feature_id}-missing"

    def feature_of(self, indicator_id: str) -> str:
        if indicator_id not in self.indicators:
            raise KeyError(f"{indicator_id} is not an indicator")
        return indicator_id[: -len("-missing")]


DEFAULT_CATALOG = FeatureCatalog()


@dataclass
class FeatureVector:
    """Values for every base feature (None = missing) plus indicators."""

    values: dict[str, float | None]
    indicators: dict[str, bool]

    def is_missing(self, feature_id: str) -> bool:
        return self.values[feature_id] is None


def assemble(
    base: dict[str, float | None],
    indicators: dict[str, bool],
    catalog: FeatureCatalog = DEFAULT_CATALOG,
) -> FeatureVector:
    """Validate a raw extraction result into a FeatureVector.

    Raises:
        FeatureConsistencyError: domains do not match the catalog, an
            always-known feature is missing, a value coexists with a
            true indicator (or is absent with a false one), or a binary
            feature is not in {0, 1}.
    """
    if set(base) != set(catalog.all_base):
        raise FeatureConsistencyError("base value domain does not match catalog")
    if set(indicators) != set(catalog.indicators):
        raise FeatureConsistencyError("indicator domain does not match catalog")
    for fid in catalog.base_always:
        if base[fid] is None:
            raise FeatureConsistencyError(f"{fid} may never be missing")
    for fid in catalog.base_missing:
        ind = indicators[catalog.indicator_of(fid)]
        if (base[fid] is None) != ind:
            state = "missing" if base[fid] is None else "present"
            raise FeatureConsistencyError(f"{fid} is {state} but its indicator is {ind}")
    for fid, value in base.items():
        if value is not None and catalog.kinds[fid] == "binary" and value not in (0.0, 1.0):
            raise FeatureConsistencyError(f"{fid} must be 0 or 1, got {value}")
    return FeatureVector(dict(base), {k: bool(v) for k, v in indicators.items()})


def extract_base_features(
    history: list[Observation],
    vehicle_id: int,
    goal: Goal,
    scene: StaticScene,
    occlusions: OccludedRegionSet | None,
) -> dict[str, float | None]:
    """Base feature values for one (vehicle, goal) pair; None = missing."""
    values, _ = _extract(history, vehicle_id, goal, scene, occlusions)
    return values


def extract_indicators(
    occlusions: OccludedRegionSet | None,
    vehicle_id: int,
    goal: Goal,
    scene: StaticScene,
    history: list[Observation],
) -> dict[str, bool]:
    """Indicator map for one (vehicle, goal) pair."""
    _, indicators = _extract(history, vehicle_id, goal, scene, occlusions)
    return indicators


def extract_features(
    history: list[Observation],
    vehicle_id: int,
    goal: Goal,
    scene: StaticScene,
    occlusions: OccludedRegionSet | None,
    catalog: FeatureCatalog = DEFAULT_CATALOG,
    reveal_missing: bool = False,
) -> FeatureVector:
    """Full extraction for one goal; see extract_features_batch."""
    return extract_features_batch(history, vehicle_id, [goal], scene, occlusions, catalog, reveal_missing)[0]


def extract_features_batch(
    history: list[Observation],
    vehicle_id: int,
    goal_list: list[Goal],
    scene: StaticScene,
    occlusions: OccludedRegionSet | None,
    catalog: FeatureCatalog = DEFAULT_CATALOG,
    reveal_missing: bool = False,
) -> list[FeatureVector]:
    """Extract consistent FeatureVectors for several goals of one vehicle.

    Shares the per-vehicle work (lane matching over the history) across
    goals, which matters for per-frame inference latency.

    Args:
        reveal_missing: oracle mode; every potentially-missing feature
            gets a best-effort value from the raw states and all
            indicators come out false. Used to train the
            full-information reference model.
    """
    ctx = _TargetContext(history, vehicle_id, scene, occlusions or OccludedRegionSet.empty())
    out = []
    for goal in goal_list:
        values, indicators = _extract_with_ctx(ctx, goal, reveal_missing)
        out.append(assemble(values, indicators, catalog))
    return out


# ---------------------------------------------------------------------------
# extraction internals


class _TargetContext:
    """Everything about one target that does not depend on the goal."""

    def __init__(
        self,
        history: list[Observation],
        vehicle_id: int,
        scene: StaticScene,
        occlusions: OccludedRegionSet,
    ):
        if not history:
            raise ValueError("history must contain at least one observation")
        self.history = history
        self.vehicle_id = vehicle_id
        self.scene = scene
        self.occlusions = occlusions
        self.latest = history[-1]
        state = self.latest.visible_states.get(vehicle_id)
        if state is None:
            raise ValueError(f"vehicle {vehicle_id} not visible in the latest observation")
        self.state: VehicleState = state
        self.lane, self.s0 = current_lane_of(state, scene)
        self.prev = self._previous_observation()
        self.prev_state = self.prev.visible_states.get(vehicle_id) if self.prev else None
        self._ring_trace: tuple[list[str], bool] | None = None

    def _previous_observation(self) -> Observation | None:
        t = self.latest.time
        best = None
        for obs in self.history[:-1]:
            gap = abs(obs.time - (t - SAMPLE_PERIOD))
            if gap <= PREV_SAMPLE_TOLERANCE and (best is None or gap < abs(best.time - (t - SAMPLE_PERIOD))):
                best = obs
        return best

    def visible_through_window(self) -> bool:
        """Target visible at every sampled frame of the last second."""
        cutoff = self.latest.time - SAMPLE_PERIOD - PREV_SAMPLE_TOLERANCE
        frames = [o for o in self.history if o.time > cutoff]
        return self.prev is not None and all(self.vehicle_id in o.visible_states for o in frames)

    def ring_trace(self) -> tuple[list[str], bool]:
        """Observed lane ids since before roundabout entry, and whether
        the entry itself was observed.

        Walks the history backwards while the target stays visible; the
        trace is trustworthy only back to the first invisible tick.
        """
        if self._ring_trace is not None:
            return self._ring_trace
        trace: list[str] = [self.lane.id]
        observed_entry = _is_pre_ring(self.lane, self.scene)
        for obs in reversed(self.history[:-1]):
            st = obs.visible_states.get(self.vehicle_id)
            if st is None:
                break
            match = _match_lane(self.scene, st.position, st.heading)
            if match is None:
                break
            lane = match[0]
            if trace[-1] != lane.id:
                trace.append(lane.id)
            if _is_pre_ring(lane, self.scene):
                observed_entry = True
                break
        trace.reverse()
        self._ring_trace = (trace, observed_entry)
        return self._ring_trace

    def earliest_visible_heading(self) -> float:
        for obs in self.history:
            st = obs.visible_states.get(self.vehicle_id)
            if st is not None:
                return st.heading
        return self.state.heading


def _extract(history, vehicle_id, goal, scene, occlusions):
    ctx = _TargetContext(history, vehicle_id, scene, occlusions or OccludedRegionSet.empty())
    return _extract_with_ctx(ctx, goal, reveal_missing=False)


def _extract_with_ctx(ctx: _TargetContext, goal: Goal, reveal_missing: bool):
    scene, state = ctx.scene, ctx.state
    path = find_path(scene, ctx.lane.id, goal, DEFAULT_MAX_DEPTH)
    values: dict[str, float | None] = {}

    # --- always-known geometry ---
    values["angle-in-lane"] = wrap_angle(state.heading - ctx.lane.polyline.tangent_at(ctx.s0))
    to_goal = np.asarray(goal.location, dtype=float) - state.position
    values["angle-to-goal"] = wrap_angle(math.atan2(to_goal[1], to_goal[0]) - state.heading)
    values["in-correct-lane"] = 1.0 if path is not None else 0.0
    if path is not None:
        last = scene.lanes_by_id[path[-1]]
        s_goal = last.polyline.project(*goal.location)[0]
        values["path-to-goal-length"] = path_length_to_goal(scene, path, ctx.s0, goal)
        values["junction-heading-change"] = _junction_heading_change(scene, path, ctx.s0, s_goal)
    else:
        s_goal = None
        values["path-to-goal-length"] = float(np.hypot(*to_goal))
        values["junction-heading-change"] = 0.0
    values["roundabout-uturn"] = _uturn_flag(ctx, goal, path)
    values["roundabout-slip-road"] = _slip_road_flag(scene, ctx.lane.id, goal)

    # --- kinematics, verifiable only with recent sightings ---
    if ctx.prev_state is not None:
        values["speed"] = float(state.speed)
        values["acceleration"] = float(state.acceleration)
    else:
        values["speed"] = values["acceleration"] = None
    if ctx.prev_state is not None and ctx.visible_through_window():
        values["heading-change-1-second"] = wrap_angle(state.heading - ctx.prev_state.heading)
    else:
        values["heading-change-1-second"] = None

    exit_number, exit_number_best_effort = _exit_number(ctx, path)
    values["roundabout-exit-number"] = exit_number

    # --- scan regions ---
    front = _forward_intervals(scene, ctx, path, s_goal)
    d, v = _resolve_region(ctx, front, exclude={ctx.vehicle_id})
    values["distance-to-vehicle-in-front"] = d
    values["speed-of-vehicle-in-front"] = v
    oncoming = _oncoming_intervals(scene, ctx, path, s_goal)
    d, v = _resolve_region(ctx, oncoming, exclude={ctx.vehicle_id})
    values["distance-from-oncoming-vehicle"] = d
    values["speed-of-oncoming-vehicle"] = v

    if reveal_missing:
        _reveal(values, ctx, exit_number_best_effort)
    indicators = {f"{fid}-missing": values[fid] is None for fid in BASE_MISSING}
    return values, indicators


def _reveal(values: dict[str, float | None], ctx: _TargetContext, exit_number_best_effort: float) -> None:
    """Oracle fallbacks for values the ego could not verify."""
    fallback = {
        "speed": float(ctx.state.speed),
        "acceleration": float(ctx.state.acceleration),
        "heading-change-1-second": 0.0,
        "roundabout-exit-number": exit_number_best_effort,
        "distance-to-vehicle-in-front": MAX_DIST,
        "speed-of-vehicle-in-front": 0.0,
        "distance-from-oncoming-vehicle": MAX_DIST,
        "speed-of-oncoming-vehicle": 0.0,
    }
    for fid in BASE_MISSING:
        if values[fid] is None:
            values[fid] = fallback[fid]


# --- goal-path derived scalars ---


def _junction_heading_change(scene: StaticScene, path: list[str], s0: float, s_goal: float) -> float:
    """Net tangent rotation over the junction lanes of the path.

    Per-lane rotation is taken as the wrapped endpoint difference (lane
    connectors turn less than pi) and tangent kinks between consecutive
    junction lanes are included, so multi-lane traversals like a full
    roundabout accumulate beyond pi instead of wrapping.
    """
    total = 0.0
    prev_tangent = None
    for k, lid in enumerate(path):
        lane = scene.lanes_by_id[lid]
        if lane.junction is None:
            prev_tangent = None
            continue
        a = s0 if k == 0 else 0.0
        b = s_goal if k == len(path) - 1 else lane.length
        a = min(a, b)
        t0 = lane.polyline.tangent_at(a)
        t1 = lane.polyline.tangent_at(b)
        if prev_tangent is not None:
            total += wrap_angle(t0 - prev_tangent)
        total += wrap_angle(t1 - t0)
        prev_tangent = t1
    return total


def _slip_road_flag(scene: StaticScene, lane_id: str, goal: Goal) -> float:
    for path in iter_paths_to(scene, lane_id, goal, DEFAULT_MAX_DEPTH):
        if any(scene.lanes_by_id[lid].slip_road for lid in path):
            return 1.0
    return 0.0


def _uturn_flag(ctx: _TargetContext, goal: Goal, path: list[str] | None) -> float:
    """1.0 when the goal exits a roundabout back the way the target came."""
    scene = ctx.scene
    goal_lane = scene.lanes_by_id[goal.lane_id]
    involved = any(scene.lanes_by_id[p].roundabout for p in goal_lane.predecessors)
    if path is not None:
        involved = involved or any(scene.lanes_by_id[lid].roundabout for lid in path)
    if not involved:
        return 0.0
    s_goal = goal_lane.polyline.project(*goal.location)[0]
    exit_dir = goal_lane.polyline.tangent_at(s_goal)
    entry_dir = ctx.earliest_visible_heading()
    return 1.0 if abs(wrap_angle(exit_dir - entry_dir - math.pi)) <= math.pi / 4 else 0.0


# --- roundabout exit counting ---


def _is_exit_connector(lane: Lane, scene: StaticScene) -> bool:
    return (
        lane.junction is not None
        and not lane.roundabout
        and any(scene.lanes_by_id[p].roundabout for p in lane.predecessors)
    )


def _is_pre_ring(lane: Lane, scene: StaticScene) -> bool:
    """On a lane from before roundabout entry (arm or entry connector)."""
    return not lane.roundabout and not _is_exit_connector(lane, scene)


def _count_exits(scene: StaticScene, lane_ids: list[str]) -> int:
    """Ordinal of the taken exit among exit opportunities along the ring.

    Walks the lane sequence; each ring lane whose end node offers a way
    off the ring counts as one exit passed, and leaving the ring counts
    the exit actually taken.
    """
    n = 0
    for k, lid in enumerate(lane_ids):
        lane = scene.lanes_by_id[lid]
        if not lane.roundabout:
            continue
        if k + 1 >= len(lane_ids):
            break
        if not scene.lanes_by_id[lane_ids[k + 1]].roundabout:
            n += 1
            break
        if any(not scene.lanes_by_id[s].roundabout for s in lane.successors):
            n += 1
    return n


def _exit_number(ctx: _TargetContext, path: list[str] | None) -> tuple[float | None, float]:
    """Exits passed between roundabout entry and the goal exit.

    Known from the path alone while the target is still approaching;
    once inside (or leaving) the ring it additionally needs an unbroken
    sighting record back to before entry, otherwise missing. Returns
    (value-or-None, best-effort value) so oracle mode can reveal the
    count a full-information observer would report.
    """
    scene = ctx.scene
    path_lanes = [scene.lanes_by_id[lid] for lid in path] if path else []
    if _is_pre_ring(ctx.lane, scene):
        if not any(l.roundabout for l in path_lanes):
            return 0.0, 0.0
        n = float(_count_exits(scene, list(path)))
        return n, n
    trace, observed_entry = ctx.ring_trace()
    combined = trace + (list(path[1:]) if path else [])
    n = float(_count_exits(scene, combined))
    return (n if observed_entry else None), n


def _match_lane(scene: StaticScene, position: np.ndarray, heading: float) -> tuple[Lane, float] | None:
    """Tolerant lane match for history ticks; None instead of an error.

    Same scoring as current_lane_of but midline-based and culled by the
    lane bounding circles, cheap enough to run per history frame.
    """
    best = None
    best_score = math.inf
    for lane in scene.lanes:
        centre = scene.lane_bound_centre[lane.id]
        if np.hypot(*(position - centre)) > scene.lane_bound_radius[lane.id] + LANE_MATCH_TOLERANCE:
            continue
        s, d = lane.polyline.project(*position)
        if d > LANE_MATCH_TOLERANCE:
            continue
        score = d + 2.0 * (1.0 - math.cos(wrap_angle(heading - lane.polyline.tangent_at(s))))
        if score < best_score:
            best, best_score = (lane, s), score
    return best


# --- scan regions ---
# An interval is (lane_id, s_from, s_to, arc_at_s_from); s_to may be
# below s_from for upstream scans. arc distances are measured from the
# target's centre (forward) or toward the conflict point (oncoming).


def _forward_intervals(scene: StaticScene, ctx: _TargetContext, path: list[str] | None, s_goal: float | None):
    lane_ids = list(path) if path else [ctx.lane.id]
    start = ctx.s0 + ctx.state.length / 2.0 + 0.25
    out = []
    arc = start - ctx.s0
    remaining = SCAN_RANGE
    for k, lid in enumerate(lane_ids):
        lane = scene.lanes_by_id[lid]
        a = start if k == 0 else 0.0
        b = s_goal if (path and k == len(lane_ids) - 1) else lane.length
        if b <= a:
            continue
        take = min(b - a, remaining)
        out.append((lid, a, a + take, arc))
        arc += take
        remaining -= take
        if remaining <= 1e-9:
            break
    return out


def _oncoming_intervals(scene: StaticScene, ctx: _TargetContext, path: list[str] | None, s_goal: float | None):
    """Upstream windows of every lane conflicting with the goal path."""
    if not path:
        return []
    path_set = set(path)
    conflicts: list[tuple[str, float]] = []
    for k, lid in enumerate(path):
        lane = scene.lanes_by_id[lid]
        a = ctx.s0 if k == 0 else 0.0
        b = s_goal if k == len(path) - 1 else lane.length
        for other, s_self, s_other, angle in scene.crossings_of(lid):
            if other in path_set or angle <= math.pi / 4:
                continue
            if a - 0.5 <= s_self <= b + 0.5:
                conflicts.append((other, s_other))
        if k + 1 < len(path):
            for pred in scene.lanes_by_id[path[k + 1]].predecessors:
                if pred != lid and pred not in path_set:
                    conflicts.append((pred, scene.lanes_by_id[pred].length))
    out: list[tuple[str, float, float, float]] = []
    seen = set()
    for lid, s_conf in conflicts:
        key = (lid, round(s_conf, 3))
        if key not in seen:
            seen.add(key)
            _upstream(scene, lid, s_conf, SCAN_RANGE, 0.0, out)
    return out


def _upstream(scene, lane_id, s_end, budget, arc, out):
    lane = scene.lanes_by_id[lane_id]
    a = max(0.0, s_end - budget)
    if s_end > a:
        out.append((lane_id, s_end, a, arc))
    used = s_end - a
    if budget - used > 1e-9:
        for pred in lane.predecessors:
            plen = scene.lanes_by_id[pred].length
            _upstream(scene, pred, plen, budget - used, arc + used, out)


# a found vehicle's own footprint occludes the midline from roughly its
# near bumper on; allow that much slack (plus sampling grid) when
# deciding whether the vehicle, not a hidden gap, is the nearest fact
_RESOLVE_TOLERANCE = 0.3


def _resolve_region(ctx: _TargetContext, intervals, exclude: set[int]):
    """Apply the shared scan-region rule; returns (distance, speed).

    Distances are centre-to-centre (forward scan) or centre-to-conflict
    (oncoming scan); whether a visible vehicle resolves an occlusion is
    judged from its near edge, since its own body shadows the midline.
    """
    d_veh = math.inf
    d_near = math.inf
    v_veh = 0.0
    for vid, st in ctx.latest.visible_states.items():
        if vid in exclude:
            continue
        for lid, s_from, s_to, arc in intervals:
            lane = ctx.scene.lanes_by_id[lid]
            centre = ctx.scene.lane_bound_centre[lid]
            if np.hypot(*(st.position - centre)) > ctx.scene.lane_bound_radius[lid] + LANE_MATCH_TOLERANCE:
                continue
            s, dist = lane.polyline.project(*st.position)
            if dist > LANE_MATCH_TOLERANCE:
                continue
            lo, hi = min(s_from, s_to), max(s_from, s_to)
            if not lo <= s <= hi:
                continue
            d = arc + abs(s - s_from)
            if d < d_veh:
                d_veh, v_veh = d, float(st.speed)
                d_near = max(d - st.length / 2.0, 0.0)
    d_occ = math.inf
    for lid, s_from, s_to, arc in intervals:
        s_hit = ctx.occlusions.first_occluded_from(lid, s_from, s_to)
        if s_hit is not None:
            d_occ = min(d_occ, arc + abs(s_hit - s_from))
    if math.isfinite(d_veh) and d_near <= d_occ + _RESOLVE_TOLERANCE:
        return d_veh, v_veh
    if math.isfinite(d_occ):
        return None, None
    return MAX_DIST, 0.0
