"""Synthetic desk-scale scenarios.

Two fixed road layouts, sized so a 100 m sensor range leaves meaningful
out-of-range area, plus scripted drivers that turn them into recordings.
Geometry conventions: right-hand traffic, lane half-width 1.75 m, major
roads have priority rank 0 and minor roads rank 1. Connector lanes carry
the rank of their destination road.

The T-junction: an east-west major road meets a minor road arriving from
the south. Arms run from |12| to |120| m; the four turn connectors are
circular arcs (radii 10.25 and 13.75 m) so tangents stay continuous.

The roundabout: a 20 m-radius counter-clockwise ring with arms at the
four compass points, a 14 m central island, and straight entry/exit
connectors joining each arm to the ring nodes. Entry and exit connectors
meet the ring at an angle; scripted drivers simply follow the midlines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LineString

from .datakit import Recording
from .geom import Polyline, arc_points
from .scene import Junction, Lane, ObstaclePolygon, StaticScene, VehicleState

LANE_HALF_WIDTH = 1.75
_ARC_STEP = 0.04  # radians between arc midline vertices


def _mk_lane(lane_id, midline, successors=(), predecessors=(), junction=None,
             rank=0, roundabout=False, slip_road=False) -> Lane:
    midline = np.asarray(midline, dtype=float)
    boundary = np.asarray(LineString(midline).buffer(LANE_HALF_WIDTH).exterior.coords)
    return Lane(
        id=lane_id,
        midline=midline,
        boundary=boundary,
        successors=list(successors),
        predecessors=list(predecessors),
        junction=junction,
        priority_rank=rank,
        roundabout=roundabout,
        slip_road=slip_road,
    )


T_JUNCTION_BUILDINGS = [
    np.array([[-45.0, -30.0], [-15.0, -30.0], [-15.0, -8.0], [-45.0, -8.0]]),
    np.array([[15.0, -30.0], [45.0, -30.0], [45.0, -8.0], [15.0, -8.0]]),
]


def t_junction_scene(buildings=None) -> StaticScene:
    """East-west major road with a minor road arriving from the south.

    12 lanes: 6 arm lanes and 6 junction connectors (two straights, the
    four turns). Default buildings sit in the south-west and south-east
    corners so minor-road traffic and major-road traffic hide each other
    on approach.
    """
    h = LANE_HALF_WIDTH
    lanes = [
        _mk_lane("eb_in", [(-120, -h), (-12, -h)], successors=["eb_str", "eb_right"]),
        _mk_lane("eb_out", [(12, -h), (120, -h)], predecessors=["eb_str", "nb_right"]),
        _mk_lane("wb_in", [(120, h), (12, h)], successors=["wb_str", "wb_left"]),
        _mk_lane("wb_out", [(-12, h), (-120, h)], predecessors=["wb_str", "nb_left"]),
        _mk_lane("nb_in", [(h, -120), (h, -12)], successors=["nb_left", "nb_right"], rank=1),
        _mk_lane("sb_out", [(-h, -12), (-h, -120)], predecessors=["eb_right", "wb_left"], rank=1),
        _mk_lane("eb_str", [(-12, -h), (12, -h)], predecessors=["eb_in"],
                 successors=["eb_out"], junction="tj"),
        _mk_lane("wb_str", [(12, h), (-12, h)], predecessors=["wb_in"],
                 successors=["wb_out"], junction="tj"),
        _mk_lane("nb_left", arc_points(-12, -12, 12 + h, 0.0, math.pi / 2, _ARC_STEP),
                 predecessors=["nb_in"], successors=["wb_out"], junction="tj"),
        _mk_lane("nb_right", arc_points(12, -12, 12 - h, math.pi, math.pi / 2, _ARC_STEP),
                 predecessors=["nb_in"], successors=["eb_out"], junction="tj"),
        _mk_lane("eb_right", arc_points(-12, -12, 12 - h, math.pi / 2, 0.0, _ARC_STEP),
                 predecessors=["eb_in"], successors=["sb_out"], junction="tj", rank=1),
        _mk_lane("wb_left", arc_points(12, -12, 12 + h, math.pi / 2, math.pi, _ARC_STEP),
                 predecessors=["wb_in"], successors=["sb_out"], junction="tj", rank=1),
    ]
    junction = Junction(
        "tj", ["eb_str", "wb_str", "nb_left", "nb_right", "eb_right", "wb_left"]
    )
    if buildings is None:
        buildings = T_JUNCTION_BUILDINGS
    obstacles = [ObstaclePolygon(np.asarray(b, dtype=float)) for b in buildings]
    return StaticScene(lanes, [junction], obstacles, scenario_id="t-junction")


RING_RADIUS = 20.0
ARM_INNER = 22.0
ARM_OUTER = 120.0
ISLAND_RADIUS = 14.0

ROUNDABOUT_BUILDINGS = [
    np.array([[14.0, 14.0], [44.0, 14.0], [44.0, 44.0], [14.0, 44.0]]),
    np.array([[-44.0, -44.0], [-14.0, -44.0], [-14.0, -14.0], [-44.0, -14.0]]),
]


def _island_polygon() -> np.ndarray:
    ang = math.pi / 8 + np.arange(8) * math.pi / 4
    return np.column_stack([ISLAND_RADIUS * np.cos(ang), ISLAND_RADIUS * np.sin(ang)])


def roundabout_scene(buildings=None) -> StaticScene:
    """Four-exit counter-clockwise roundabout with compass-point arms.

    16 lanes: four ring arcs, four exit connectors, and two arm lanes
    per compass point; each in-arm runs all the way onto the ring so a
    depth-4 goal search from an arm reaches the first three exits. The
    ring has priority; every lane touching it belongs to junction
    "rbt". The central island plus two corner buildings provide the
    occlusions.
    """
    h = LANE_HALF_WIDTH
    points = ["e", "n", "w", "s"]
    angles = {"e": 0.0, "n": math.pi / 2, "w": math.pi, "s": 3 * math.pi / 2}
    arcs = [f"ring_{points[k]}_{points[(k + 1) % 4]}" for k in range(4)]
    lanes = []
    for k, p in enumerate(points):
        phi = angles[p]
        radial = np.array([math.cos(phi), math.sin(phi)])
        lateral = np.array([-math.sin(phi), math.cos(phi)])
        node = RING_RADIUS * radial
        lanes += [
            _mk_lane(f"arm_{p}_in",
                     [ARM_OUTER * radial + h * lateral, ARM_INNER * radial + h * lateral, node],
                     successors=[arcs[k]], rank=1),
            _mk_lane(f"arm_{p}_out",
                     [ARM_INNER * radial - h * lateral, ARM_OUTER * radial - h * lateral],
                     predecessors=[f"exit_{p}"], rank=1),
            _mk_lane(f"exit_{p}", [node, ARM_INNER * radial - h * lateral],
                     predecessors=[arcs[(k - 1) % 4]], successors=[f"arm_{p}_out"],
                     junction="rbt", rank=1),
        ]
    for k, name in enumerate(arcs):
        p0, p1 = points[k], points[(k + 1) % 4]
        lanes.append(
            _mk_lane(name,
                     arc_points(0.0, 0.0, RING_RADIUS, angles[p0],
                                angles[p0] + math.pi / 2, _ARC_STEP),
                     predecessors=[arcs[(k - 1) % 4], f"arm_{p0}_in"],
                     successors=[arcs[(k + 1) % 4], f"exit_{p1}"],
                     junction="rbt", roundabout=True)
        )
    junction = Junction("rbt", [l.id for l in lanes if l.junction == "rbt"])
    if buildings is None:
        buildings = ROUNDABOUT_BUILDINGS
    obstacles = [ObstaclePolygon(_island_polygon())]
    obstacles += [ObstaclePolygon(np.asarray(b, dtype=float)) for b in buildings]
    return StaticScene(lanes, [junction], obstacles, scenario_id="roundabout-4-exit")


# --- scripted drivers ---

SYNTHETIC_KINDS = ("t-junction", "roundabout-4-exit")
SIM_DT = 0.1  # 10 Hz
ARM_SPEED = 10.0
JUNCTION_SPEED = 6.0
ACCEL = 1.8
COMFORT_DECEL = 2.2
HARD_DECEL = 3.0
FOLLOW_GAP = 7.0
HOLD_BACK = 2.0  # stop line short of the lane needing a gap
EXIT_APPROACH_SPEED = 4.5
STRAIGHT_THROUGH_SPEED = 9.0  # priority traffic barely slows for the box
TURN_EASE_SPEED = 8.0
_TURN_EASE_ZONE = 35.0  # turners come off the gas well before the mouth
_EXIT_BRAKE_ZONE = 14.0  # slow over the last stretch of ring before leaving
_EXIT_DRIFT_RAMP = 22.0
_EXIT_DRIFT_FADE = 6.0
_EXIT_DRIFT_AMP = 0.8  # metres toward the outside of the ring

_TJ_ROUTES = {
    "eb_in": (["eb_in", "eb_str", "eb_out"], ["eb_in", "eb_right", "sb_out"]),
    "wb_in": (["wb_in", "wb_str", "wb_out"], ["wb_in", "wb_left", "sb_out"]),
    "nb_in": (["nb_in", "nb_left", "wb_out"], ["nb_in", "nb_right", "eb_out"]),
}
# connectors that must give way, with the lanes carrying the priority
# traffic they cross (last 35 m of an approach still counts)
_TJ_YIELDS = {
    "nb_left": ("eb_in", "eb_str", "wb_in", "wb_str"),
    "nb_right": ("eb_in", "eb_str", "wb_in", "wb_str"),
    "wb_left": ("eb_in", "eb_str"),
}
_APPROACH_WINDOW = 35.0
_RING_WINDOW = 18.0


@dataclass
class _Driver:
    vid: int
    lane_ids: list[str]
    poly: Polyline
    offsets: dict[str, float]
    limits: list[tuple[float, float, float]]  # (start_s, end_s, v_max)
    hold_s: float | None  # stop line before a yielding connector
    yield_lane: str | None
    s: float = 0.0
    v: float = 0.0
    committed: bool = False
    heading: float = 0.0
    wobble_amp: float = 0.0
    wobble_phase: float = 0.0
    exit_s: float | None = None  # arclength where the ring exit begins
    prev_pos: np.ndarray | None = None

    def lane_at(self, s: float) -> str:
        for lid in reversed(self.lane_ids):
            if s >= self.offsets[lid]:
                return lid
        return self.lane_ids[0]

    def limit_at(self, s: float) -> float:
        for lo, hi, vm in self.limits:
            if lo <= s < hi:
                return vm
        return self.limits[-1][2]

    def position(self, s: float) -> np.ndarray:
        base = self.poly.interpolate(s)
        heading = self.poly.tangent_at(s)
        normal = np.array([-math.sin(heading), math.cos(heading)])
        lat = self.wobble_amp * math.sin(2 * math.pi * s / 40.0 + self.wobble_phase)
        if self.exit_s is not None:
            # lean toward the outside of the ring before taking the exit,
            # then settle back onto the connector midline
            ramp = (s - (self.exit_s - _EXIT_DRIFT_RAMP)) / _EXIT_DRIFT_RAMP
            fade = 1.0 - (s - self.exit_s) / _EXIT_DRIFT_FADE
            lat -= _EXIT_DRIFT_AMP * max(0.0, min(1.0, ramp, fade))
        return base + lat * normal


def _turn_angle(lane) -> float:
    mids = np.asarray(lane.midline, dtype=float)
    h0 = math.atan2(*(mids[1] - mids[0])[::-1])
    h1 = math.atan2(*(mids[-1] - mids[-2])[::-1])
    return abs(math.remainder(h1 - h0, 2 * math.pi))


def _build_driver(vid, scene, lane_ids, yields, rng, start_s=0.0) -> _Driver:
    pts = []
    offsets = {}
    limits = []
    turning = []
    acc = 0.0
    for lid in lane_ids:
        lane = scene.lanes_by_id[lid]
        offsets[lid] = acc
        turn = (
            lane.junction is not None
            and not lane.roundabout
            and _turn_angle(lane) > 0.3
        )
        if lane.roundabout or turn:
            vmax = JUNCTION_SPEED
        elif lane.junction is not None:
            vmax = STRAIGHT_THROUGH_SPEED
        else:
            vmax = ARM_SPEED
        turning.append(turn)
        limits.append((acc, acc + lane.length, vmax))
        mids = lane.midline if not pts else lane.midline[1:]
        pts.extend(np.asarray(mids, dtype=float))
        acc += lane.length
    eased = []
    for j, (lo, hi, vm) in enumerate(limits):
        before_turn = j + 1 < len(limits) and turning[j + 1]
        if before_turn and vm == ARM_SPEED and hi - lo > _TURN_EASE_ZONE:
            eased.append((lo, hi - _TURN_EASE_ZONE, vm))
            eased.append((hi - _TURN_EASE_ZONE, hi, TURN_EASE_SPEED))
        else:
            eased.append((lo, hi, vm))
    limits = eased
    poly = Polyline(np.array(pts))
    yield_lane = next((lid for lid in lane_ids if lid in yields), None)
    hold_s = offsets[yield_lane] - HOLD_BACK if yield_lane else None
    exit_s = None
    exit_id = next((lid for lid in lane_ids if lid.startswith("exit_")), None)
    if exit_id is not None:
        # drivers telegraph the exit: brake on the final ring stretch and
        # stay slow through the connector
        exit_s = offsets[exit_id]
        reshaped = []
        for lo, hi, vm in limits:
            if abs(hi - exit_s) < 1e-9 and hi - lo > _EXIT_BRAKE_ZONE:
                reshaped.append((lo, hi - _EXIT_BRAKE_ZONE, vm))
                reshaped.append((hi - _EXIT_BRAKE_ZONE, hi, EXIT_APPROACH_SPEED))
            elif abs(lo - exit_s) < 1e-9:
                reshaped.append((lo, hi, EXIT_APPROACH_SPEED))
            else:
                reshaped.append((lo, hi, vm))
        limits = reshaped
    d = _Driver(
        vid=vid,
        lane_ids=lane_ids,
        poly=poly,
        offsets=offsets,
        limits=limits,
        hold_s=hold_s,
        yield_lane=yield_lane,
        s=start_s,
        v=ARM_SPEED * rng.uniform(0.85, 1.05),
        wobble_amp=rng.uniform(0.05, 0.3),
        wobble_phase=rng.uniform(0.0, 2 * math.pi),
        exit_s=exit_s,
    )
    d.heading = poly.tangent_at(start_s)
    d.prev_pos = d.position(start_s)
    return d


def _lane_progress(drivers, lane_id):
    """(in-lane s, speed) of every active driver currently on lane_id."""
    out = []
    for d in drivers:
        lid = d.lane_at(d.s)
        if lid == lane_id:
            out.append((d.s - d.offsets[lid], d.v))
    return out


def _tj_conflict(driver, drivers, scene) -> bool:
    approaches = _TJ_YIELDS[driver.yield_lane]
    for lid in approaches:
        lane = scene.lanes_by_id[lid]
        for in_s, v in _lane_progress(drivers, lid):
            if lane.junction is not None or lane.length - in_s <= _APPROACH_WINDOW:
                if v > 0.5 or lane.junction is not None:
                    return True
    return False


def _ring_conflict(driver, drivers, scene) -> bool:
    feeder = driver.yield_lane  # the arc this driver merges into
    upstream = next(
        p for p in scene.lanes_by_id[feeder].predecessors
        if scene.lanes_by_id[p].roundabout
    )
    up_lane = scene.lanes_by_id[upstream]
    others = [d for d in drivers if d is not driver]  # never yield to yourself
    for in_s, _ in _lane_progress(others, upstream):
        if up_lane.length - in_s <= _RING_WINDOW:
            return True
    return any(in_s <= 5.0 for in_s, _ in _lane_progress(others, feeder))


def _desired_speed(driver, drivers, scene, conflict_fn) -> float:
    v_des = driver.limit_at(driver.s)
    # brake early for the slower zones ahead
    for lo, _, vm in driver.limits:
        if lo > driver.s and vm < v_des:
            allowed = math.sqrt(vm * vm + 2 * COMFORT_DECEL * (lo - driver.s))
            v_des = min(v_des, allowed)
    # car following against anyone further along the same route
    for other in drivers:
        if other is driver:
            continue
        lid = other.lane_at(other.s)
        if lid not in driver.offsets:
            continue
        o_s = driver.offsets[lid] + (other.s - other.offsets[lid])
        if o_s <= driver.s:
            continue
        gap = o_s - driver.s - 4.5
        if gap <= 0.3:
            return 0.0
        if gap < 40.0:
            v_des = min(v_des, other.v + 0.6 * (gap - FOLLOW_GAP))
    # give way at the stop line while conflicting traffic is around
    if driver.yield_lane and not driver.committed and driver.hold_s is not None:
        if driver.s > driver.hold_s + 1.0:
            driver.committed = True  # past the line; stopping here is worse
        elif driver.s >= driver.hold_s - 0.3:
            if conflict_fn(driver, drivers, scene):
                return 0.0
            driver.committed = True
        elif conflict_fn(driver, drivers, scene):
            # aim a metre short so discrete braking still lands before it
            allowed = math.sqrt(2 * COMFORT_DECEL * max(driver.hold_s - 1.0 - driver.s, 0.0))
            v_des = min(v_des, allowed)
    return max(v_des, 0.0)


def _sample_route(kind, scene, rng) -> list[str]:
    if kind == "t-junction":
        arm = ("eb_in", "wb_in", "nb_in")[rng.integers(3)]
        straight, turning = _TJ_ROUTES[arm]
        return list(straight if rng.random() < 0.5 else turning)
    points = ["e", "n", "w", "s"]
    arcs = [f"ring_{points[k]}_{points[(k + 1) % 4]}" for k in range(4)]
    k = int(rng.integers(4))
    # full-loop u-turns are not routed: a goal search from the arm tops
    # out at the third exit, so u-turn labels could never be derived
    exit_no = int(rng.choice([1, 2, 3], p=[0.35, 0.35, 0.3]))
    p = points[k]
    q = points[(k + exit_no) % 4]
    route = [f"arm_{p}_in"]
    route += [arcs[(k + j) % 4] for j in range(exit_no)]
    route += [f"exit_{q}", f"arm_{q}_out"]
    return route


def _simulate_episode(kind, scene, episode_id, rng) -> Recording:
    conflict_fn = _tj_conflict if kind == "t-junction" else _ring_conflict
    points = ("e", "n", "w", "s")
    yields = _TJ_YIELDS if kind == "t-junction" else {
        f"ring_{p}_{q}": () for p, q in zip(points, points[1:] + points[:1])
    }
    duration = rng.uniform(50.0, 70.0)
    n_steps = int(duration / SIM_DT)
    drivers: list[_Driver] = []
    frames: list[dict[int, VehicleState]] = []
    next_vid = 1
    next_spawn = 0.0
    for step in range(n_steps):
        t = step * SIM_DT
        if t >= next_spawn:
            route = _sample_route(kind, scene, rng)
            entry = route[0]
            # tracks begin wherever the sensor field picks the car up,
            # not at a fixed gate
            s0 = rng.uniform(0.0, min(60.0, scene.lanes_by_id[entry].length - 40.0))
            clear = all(
                not (s0 - 18.0 < in_s < s0 + 12.0)
                for in_s, _ in _lane_progress(drivers, entry)
            )
            if clear:
                drivers.append(
                    _build_driver(next_vid, scene, route, yields, rng, start_s=s0)
                )
                next_vid += 1
                next_spawn = t + rng.uniform(2.5, 6.0)
            else:
                next_spawn = t + 0.5
        frame: dict[int, VehicleState] = {}
        for d in drivers:
            v_des = _desired_speed(d, drivers, scene, conflict_fn)
            dv = v_des - d.v
            limit = HARD_DECEL if dv < 0 else ACCEL
            dv = max(-limit * SIM_DT, min(dv, ACCEL * SIM_DT))
            accel = dv / SIM_DT
            d.v = max(d.v + dv, 0.0)
            d.s += d.v * SIM_DT
            pos = d.position(d.s)
            if d.prev_pos is not None:
                delta = pos - d.prev_pos
                if float(np.hypot(*delta)) > 0.05:
                    d.heading = math.atan2(delta[1], delta[0])
            d.prev_pos = pos
            frame[d.vid] = VehicleState(
                vehicle_id=d.vid,
                time=round(t, 6),
                position=pos,
                heading=d.heading,
                speed=d.v,
                acceleration=accel,
            )
        drivers = [d for d in drivers if d.s < d.poly.length - 1e-6]
        if frame:
            frames.append(frame)
    return Recording(
        scenario_id=scene.scenario_id,
        episode_id=episode_id,
        frame_rate=1.0 / SIM_DT,
        frames=frames,
    )


def generate_synthetic(kind: str, n_episodes: int, seed: int) -> tuple[StaticScene, list[Recording]]:
    """Scripted traffic on one of the fixed layouts.

    Deterministic for a given (kind, n_episodes, seed): drivers follow
    lane midlines with trapezoidal speed profiles, queue behind leaders,
    and give way before crossing priority traffic.  Episodes run 50-70
    simulated seconds at 10 Hz.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    scene = t_junction_scene() if kind == "t-junction" else roundabout_scene()
    episodes = []
    for i in range(n_episodes):
        rng = np.random.default_rng([seed, i])
        episodes.append(_simulate_episode(kind, scene, f"{kind}-{seed}-{i:02d}", rng))
    return scene, episodes
