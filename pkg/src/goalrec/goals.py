"""Possible-goal generation over the lane-connection graph.

A vehicle's goals are the nearest junction exits, roundabout exits, and
lane ends reachable within a bounded number of lane transitions from its
current lane. Each goal carries a maneuver type derived from the path the
vehicle would have to drive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from shapely.geometry import Point

from .errors import OffMapError, UnreachableGoalError
from .geom import wrap_angle
from .scene import Goal, GoalType, Lane, StaticScene, VehicleState

#: |net heading change| below this counts as going straight
TURN_THRESHOLD = math.pi / 8
#: crossing-road tangent angles treated as orthogonal
CROSSING_ANGLE_LO = math.pi / 4
CROSSING_ANGLE_HI = 3 * math.pi / 4
#: a vehicle farther than this from every lane boundary is off-map
LANE_MATCH_TOLERANCE = 2.0
DEFAULT_MAX_DEPTH = 4

#: heading misalignment worth one metre of midline offset when matching
#: a vehicle to a lane
_ALIGN_WEIGHT = 2.0


@dataclass
class GoalSet:
    """The possible goals of one vehicle at one instant."""

    vehicle_id: int
    time: float
    goals: list[Goal]


def current_lane_of(state: VehicleState, scene: StaticScene) -> tuple[Lane, float]:
    """Match a vehicle to the lane it most plausibly occupies.

    Candidates are lanes whose boundary lies within 2 m of the position;
    among those, the score mixes midline distance with heading alignment
    so opposite-direction lanes sharing a road never win. Ties break on
    lane id.

    Returns:
        (lane, arclength of the projected position).

    Raises:
        OffMapError: no lane is near the position.
    """
    p = Point(state.position)
    best = None
    for lane in scene.lanes:
        if lane.boundary_shapely.distance(p) > LANE_MATCH_TOLERANCE:
            continue
        s, d = lane.polyline.project(state.position[0], state.position[1])
        align = 1.0 - math.cos(wrap_angle(state.heading - lane.polyline.tangent_at(s)))
        key = (d + _ALIGN_WEIGHT * align, lane.id)
        if best is None or key < best[0]:
            best = (key, lane, s)
    if best is None:
        raise OffMapError(
            f"vehicle {state.vehicle_id} at {np.round(state.position, 2).tolist()} "
            "matches no lane within 2 m"
        )
    return best[1], best[2]


def _qualifies(lane: Lane, scene: StaticScene) -> bool:
    """Does this lane's end terminate a goal-search branch?

    Junction connectors that do not feed back into a roundabout ring
    qualify (their ends are junction exits and roundabout exits), as do
    dead-end lanes (visible lane ends). Roundabout arcs and roundabout
    entry connectors are passed through.
    """
    if not lane.successors:
        return True
    if lane.junction is None or lane.roundabout:
        return False
    return not any(scene.lanes_by_id[s].roundabout for s in lane.successors)


def _goal_paths(scene: StaticScene, start: Lane, max_depth: int):
    """Depth-first enumeration of lane paths, each ending at the first
    qualifying lane on its branch. Successor order is preserved, so the
    enumeration is deterministic."""

    def visit(lane: Lane, path: tuple[str, ...], depth: int):
        path = path + (lane.id,)
        if _qualifies(lane, scene):
            yield path
            return
        if depth >= max_depth:
            return
        for sid in lane.successors:
            yield from visit(scene.lanes_by_id[sid], path, depth + 1)

    yield from visit(start, (), 0)


def generate_goals(
    state: VehicleState, scene: StaticScene, max_depth: int = DEFAULT_MAX_DEPTH
) -> GoalSet:
    """Enumerate the possible goals of one vehicle.

    Searches the directed lane graph from the vehicle's current lane up
    to max_depth transitions, stopping each branch at its first
    qualifying lane and placing a goal at that lane's end. Occlusion is
    irrelevant here: goals may lie in areas the ego cannot see.

    Returns:
        GoalSet with goals deduplicated (same lane and location within
        1 m) and sorted by (lane id, arclength).

    Raises:
        OffMapError: the vehicle matches no lane.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    lane, s0 = current_lane_of(state, scene)
    found: list[tuple[str, float, Goal]] = []
    for path in _goal_paths(scene, lane, max_depth):
        last = scene.lanes_by_id[path[-1]]
        location = last.polyline.interpolate(last.length)
        duplicate = any(
            g.lane_id == last.id and np.hypot(*(g.location - location)) < 1.0
            for _, _, g in found
        )
        if duplicate:
            continue
        goal_type = _classify_path(
            scene, [scene.lanes_by_id[p] for p in path], location, start_s=s0
        )
        found.append((last.id, last.length, Goal(location, last.id, goal_type)))
    found.sort(key=lambda item: (item[0], item[1]))
    return GoalSet(vehicle_id=state.vehicle_id, time=state.time, goals=[g for _, _, g in found])


def iter_paths_to(
    scene: StaticScene, start_lane_id: str, goal: Goal, max_depth: int = DEFAULT_MAX_DEPTH
):
    """Yield every lane path (in search order) from a lane to a goal.

    Uses the same pruned search as generate_goals, so each yielded path
    could have produced the goal.
    """
    start = scene.lanes_by_id[start_lane_id]
    goal_loc = np.asarray(goal.location, dtype=float)
    for path in _goal_paths(scene, start, max_depth):
        last = scene.lanes_by_id[path[-1]]
        if last.id == goal.lane_id and np.hypot(*(last.polyline.interpolate(last.length) - goal_loc)) < 1.0:
            yield list(path)


def find_path(
    scene: StaticScene, start_lane_id: str, goal: Goal, max_depth: int = DEFAULT_MAX_DEPTH
) -> list[str] | None:
    """First lane path (in search order) from a lane to a goal, or None."""
    return next(iter_paths_to(scene, start_lane_id, goal, max_depth), None)


def assign_goal_type(
    current_lane_id: str,
    goal: Goal,
    scene: StaticScene,
    max_depth: int = DEFAULT_MAX_DEPTH,
    position=None,
) -> GoalType:
    """Maneuver type for reaching a goal from a lane.

    Args:
        position: optional 2D point fixing where on the current lane the
            vehicle is; defaults to the lane start.

    Raises:
        UnreachableGoalError: no path within max_depth reaches the goal.
    """
    path = find_path(scene, current_lane_id, goal, max_depth)
    if path is None:
        raise UnreachableGoalError(
            f"no path from lane {current_lane_id} to goal on {goal.lane_id} "
            f"within {max_depth} transitions"
        )
    lanes = [scene.lanes_by_id[p] for p in path]
    start_s = 0.0
    if position is not None:
        start_s, _ = lanes[0].polyline.project(float(position[0]), float(position[1]))
    return _classify_path(scene, lanes, np.asarray(goal.location, dtype=float), start_s)


def _classify_path(
    scene: StaticScene, lanes: list[Lane], goal_location: np.ndarray, start_s: float = 0.0
) -> GoalType:
    last = lanes[-1]
    if not last.roundabout:
        leaves_ring = any(l.roundabout for l in lanes) or any(
            scene.lanes_by_id[p].roundabout for p in last.predecessors
        )
        if leaves_ring:
            return GoalType.EXIT_ROUNDABOUT
    s_goal, _ = last.polyline.project(goal_location[0], goal_location[1])
    delta = wrap_angle(last.polyline.tangent_at(s_goal) - lanes[0].polyline.tangent_at(start_s))
    rank_here = lanes[0].priority_rank
    rank_goal = last.priority_rank
    if abs(delta) < TURN_THRESHOLD:
        if _crosses_priority_road(scene, lanes, rank_here):
            return GoalType.CROSS_ROAD
        return GoalType.STRAIGHT_ON
    entering = rank_goal <= rank_here
    if delta > 0:
        return GoalType.ENTER_LEFT if entering else GoalType.EXIT_LEFT
    return GoalType.ENTER_RIGHT if entering else GoalType.EXIT_RIGHT


def _crosses_priority_road(scene: StaticScene, lanes: list[Lane], rank_here: int) -> bool:
    """True when the path runs through a junction that also carries an
    orthogonal road of strictly higher priority."""
    path_ids = {l.id for l in lanes}
    for lane in lanes:
        if lane.junction is None:
            continue
        heading = lane.polyline.tangent_at(lane.length / 2.0)
        for other_id in scene.junctions_by_id[lane.junction].lanes:
            if other_id in path_ids:
                continue
            other = scene.lanes_by_id[other_id]
            if other.priority_rank >= rank_here:
                continue
            ang = abs(wrap_angle(other.polyline.tangent_at(other.length / 2.0) - heading))
            if CROSSING_ANGLE_LO < ang < CROSSING_ANGLE_HI:
                return True
    return False


def path_length_to_goal(
    scene: StaticScene, path: list[str], start_s: float, goal: Goal
) -> float:
    """Driving distance along lane midlines from (path[0], start_s) to
    the goal location on path[-1]."""
    lanes = [scene.lanes_by_id[p] for p in path]
    s_goal, _ = lanes[-1].polyline.project(float(goal.location[0]), float(goal.location[1]))
    if len(lanes) == 1:
        return max(s_goal - start_s, 0.0)
    total = lanes[0].length - start_s
    for lane in lanes[1:-1]:
        total += lane.length
    return max(total + s_goal, 0.0)
