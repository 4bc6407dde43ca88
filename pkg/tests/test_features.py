import math

import numpy as np
import pytest
from shapely.geometry import LineString

from goalrec.errors import FeatureConsistencyError
from goalrec.features import (
    BASE_ALWAYS,
    BASE_MISSING,
    DEFAULT_CATALOG,
    MAX_DIST,
    FeatureCatalog,
    assemble,
    extract_base_features,
    extract_features,
    extract_features_batch,
    extract_indicators,
)
from goalrec.goals import generate_goals
from goalrec.occlusion import OccludedRegionSet, compute_occluded_regions
from goalrec.scene import (
    Goal,
    GoalType,
    Lane,
    ObstaclePolygon,
    Observation,
    StaticScene,
    VehicleState,
    observable_vehicles,
)
from goalrec.synthetic import ROUNDABOUT_BUILDINGS, T_JUNCTION_BUILDINGS, roundabout_scene, t_junction_scene


def straight_lane(lane_id, p0, p1, width=3.5, **kw):
    midline = np.array([p0, p1], float)
    boundary = np.asarray(LineString(midline).buffer(width / 2).exterior.coords)
    return Lane(id=lane_id, midline=midline, boundary=boundary, **kw)


def lonely_scene(obstacles=()):
    lane = straight_lane("solo", (0, 0), (200, 0))
    return StaticScene([lane], [], [ObstaclePolygon(np.array(o, float)) for o in obstacles], scenario_id="solo")


def observe(scene, frame, ego_id, t):
    occ = compute_occluded_regions(frame, scene, ego_id)
    return observable_vehicles(frame, ego_id, occ), occ


def full_view(frame, ego_id, t):
    return Observation(t, ego_id, dict(frame))


# --- catalog and assembly ---


def test_catalog_shape():
    cat = DEFAULT_CATALOG
    assert len(cat.base_always) == 7
    assert len(cat.base_missing) == 8
    assert len(cat.indicators) == 8
    assert cat.indicators == tuple(f"{m}-missing" for m in cat.base_missing)
    ids = cat.base_always + cat.base_missing + cat.indicators
    assert len(set(ids)) == len(ids)
    assert cat.columns == cat.base_always + cat.base_missing + cat.indicators
    for m in cat.base_missing:
        assert cat.feature_of(cat.indicator_of(m)) == m
    with pytest.raises(KeyError):
        cat.indicator_of("angle-in-lane")
    with pytest.raises(KeyError):
        cat.feature_of("speed")
    for fid in ("in-correct-lane", "roundabout-uturn", "roundabout-slip-road"):
        assert cat.kinds[fid] == "binary"
    assert cat.kinds["speed"] == "scalar"
    for fid in cat.all_base:
        lo, hi = cat.bounds[fid]
        assert lo < hi


def test_catalog_rejects_bad_indicator_order():
    with pytest.raises(ValueError):
        FeatureCatalog(indicators=tuple(reversed([f"{m}-missing" for m in BASE_MISSING])))


def _known_base():
    base = {fid: 0.0 for fid in DEFAULT_CATALOG.all_base}
    base["path-to-goal-length"] = 10.0
    return base


def test_assemble_all_known():
    fv = assemble(_known_base(), {i: False for i in DEFAULT_CATALOG.indicators})
    assert not any(fv.indicators.values())
    assert not any(fv.is_missing(f) for f in DEFAULT_CATALOG.all_base)


def test_assemble_one_missing():
    base = _known_base()
    base["speed"] = None
    inds = {i: False for i in DEFAULT_CATALOG.indicators}
    inds["speed-missing"] = True
    fv = assemble(base, inds)
    assert fv.is_missing("speed")
    assert sum(fv.indicators.values()) == 1


def test_assemble_rejects_inconsistency():
    base = _known_base()
    inds = {i: False for i in DEFAULT_CATALOG.indicators}
    inds["speed-missing"] = True
    with pytest.raises(FeatureConsistencyError):
        assemble(base, inds)  # value present but indicator true
    base["acceleration"] = None
    inds["speed-missing"] = False
    with pytest.raises(FeatureConsistencyError):
        assemble(base, inds)  # value missing but indicator false


def test_assemble_rejects_missing_always_known():
    base = _known_base()
    base["angle-in-lane"] = None
    with pytest.raises(FeatureConsistencyError):
        assemble(base, {i: False for i in DEFAULT_CATALOG.indicators})


def test_assemble_rejects_bad_domain_and_binary():
    inds = {i: False for i in DEFAULT_CATALOG.indicators}
    with pytest.raises(FeatureConsistencyError):
        assemble({"speed": 1.0}, inds)
    base = _known_base()
    base["in-correct-lane"] = 0.5
    with pytest.raises(FeatureConsistencyError):
        assemble(base, inds)


# --- geometry features ---


def test_aligned_vehicle_zero_angles():
    scene = lonely_scene()
    tgt = VehicleState(1, 5.0, (10.0, 0.0), 0.0, 6.0)
    obs = full_view({1: tgt}, 1, 5.0)
    goal = generate_goals(tgt, scene).goals[0]
    fv = extract_features([obs], 1, goal, scene, None)
    assert fv.values["angle-in-lane"] == 0.0
    assert fv.values["angle-to-goal"] == 0.0
    assert fv.values["in-correct-lane"] == 1.0
    assert fv.values["junction-heading-change"] == 0.0
    assert fv.values["path-to-goal-length"] == pytest.approx(190.0)


def test_angle_sign_conventions():
    scene = lonely_scene()
    tgt = VehicleState(1, 5.0, (10.0, 0.0), 0.3, 6.0)
    obs = full_view({1: tgt}, 1, 5.0)
    goal = generate_goals(tgt, scene).goals[0]
    fv = extract_features([obs], 1, goal, scene, None)
    # heading rotated CCW from the lane tangent -> positive in-lane angle
    assert fv.values["angle-in-lane"] == pytest.approx(0.3)
    # goal sits clockwise of the heading -> negative angle to goal
    assert fv.values["angle-to-goal"] == pytest.approx(-0.3)


def test_unreachable_goal_fallbacks():
    scene = t_junction_scene()
    tgt = VehicleState(1, 0.0, (-40.0, -1.75), 0.0, 8.0)
    obs = full_view({1: tgt}, 1, 0.0)
    # westbound exit is unreachable for eastbound traffic
    wb = scene.lanes_by_id["wb_out"]
    goal = Goal(wb.polyline.interpolate(wb.length), "wb_out", GoalType.STRAIGHT_ON)
    fv = extract_features([obs], 1, goal, scene, None)
    assert fv.values["in-correct-lane"] == 0.0
    assert fv.values["path-to-goal-length"] == pytest.approx(np.hypot(*(goal.location - tgt.position)))
    assert fv.values["junction-heading-change"] == 0.0


def test_path_length_dominates_straight_line():
    scene = t_junction_scene()
    rng = np.random.default_rng(4)
    for _ in range(40):
        lane = scene.lanes[rng.integers(len(scene.lanes))]
        s = float(rng.uniform(0, lane.length))
        pos = lane.polyline.interpolate(s)
        tgt = VehicleState(1, 0.0, pos, lane.polyline.tangent_at(s), 5.0)
        obs = full_view({1: tgt}, 1, 0.0)
        for goal in generate_goals(tgt, scene).goals:
            fv = extract_features([obs], 1, goal, scene, None)
            straight = np.hypot(*(goal.location - tgt.position))
            assert fv.values["path-to-goal-length"] >= straight - 1e-6


def test_junction_heading_change_signs():
    scene = t_junction_scene()
    tgt = VehicleState(1, 0.0, (1.75, -40.0), math.pi / 2, 8.0)
    obs = full_view({1: tgt}, 1, 0.0)
    goals = {g.goal_type: g for g in generate_goals(tgt, scene).goals}
    left = extract_features([obs], 1, goals[GoalType.ENTER_LEFT], scene, None)
    right = extract_features([obs], 1, goals[GoalType.ENTER_RIGHT], scene, None)
    assert left.values["junction-heading-change"] == pytest.approx(math.pi / 2, abs=0.1)
    assert right.values["junction-heading-change"] == pytest.approx(-math.pi / 2, abs=0.1)


# --- kinematics history rules ---


def _two_tick_history(scene, visible_prev=True, h_prev=0.1, h_now=0.3):
    prev_states = {2: VehicleState(2, 9.0, (150.0, 0.0), 0.0, 6.0)}
    if visible_prev:
        prev_states[1] = VehicleState(1, 9.0, (4.0, 0.0), h_prev, 5.0, acceleration=0.7)
    now = {
        1: VehicleState(1, 10.0, (10.0, 0.0), h_now, 6.0, acceleration=0.9),
        2: VehicleState(2, 10.0, (150.0, 0.0), 0.0, 6.0),
    }
    return [Observation(9.0, 2, prev_states), Observation(10.0, 2, now)]


def test_kinematics_known_with_previous_sighting():
    scene = lonely_scene()
    hist = _two_tick_history(scene)
    goal = generate_goals(hist[-1].visible_states[1], scene).goals[0]
    fv = extract_features(hist, 1, goal, scene, None)
    assert fv.values["speed"] == pytest.approx(6.0)
    assert fv.values["acceleration"] == pytest.approx(0.9)
    assert fv.values["heading-change-1-second"] == pytest.approx(0.2)


def test_heading_change_wraps():
    scene = lonely_scene()
    hist = _two_tick_history(scene, h_prev=3.1, h_now=-3.1)
    goal = Goal(np.array([200.0, 0.0]), "solo", GoalType.STRAIGHT_ON)
    fv = extract_features(hist, 1, goal, scene, None)
    assert fv.values["heading-change-1-second"] == pytest.approx(2 * math.pi - 6.2)


def test_kinematics_missing_without_previous_sighting():
    scene = lonely_scene()
    hist = _two_tick_history(scene, visible_prev=False)
    goal = generate_goals(hist[-1].visible_states[1], scene).goals[0]
    fv = extract_features(hist, 1, goal, scene, None)
    for fid in ("speed", "acceleration", "heading-change-1-second"):
        assert fv.is_missing(fid)
        assert fv.indicators[f"{fid}-missing"]


def test_kinematics_missing_on_first_tick():
    scene = lonely_scene()
    hist = _two_tick_history(scene)[-1:]
    goal = generate_goals(hist[-1].visible_states[1], scene).goals[0]
    fv = extract_features(hist, 1, goal, scene, None)
    assert fv.is_missing("speed")
    assert fv.is_missing("heading-change-1-second")


def test_heading_change_needs_whole_window():
    # a mid-window dropout hides the rotation but not the endpoint speeds
    scene = lonely_scene()
    hist = _two_tick_history(scene)
    mid = Observation(9.5, 2, {2: VehicleState(2, 9.5, (150.0, 0.0), 0.0, 6.0)})
    hist = [hist[0], mid, hist[1]]
    goal = generate_goals(hist[-1].visible_states[1], scene).goals[0]
    fv = extract_features(hist, 1, goal, scene, None)
    assert fv.values["speed"] == pytest.approx(6.0)
    assert fv.is_missing("heading-change-1-second")


def test_target_must_be_visible_latest():
    scene = lonely_scene()
    obs = Observation(0.0, 2, {2: VehicleState(2, 0.0, (150.0, 0.0), 0.0, 6.0)})
    goal = Goal(np.array([200.0, 0.0]), "solo", GoalType.STRAIGHT_ON)
    with pytest.raises(ValueError):
        extract_features([obs], 1, goal, scene, None)


# --- scan regions ---

# building beside the lonely lane; from an ego at (50, 30) its shadow
# lands on the midline from x = 50 + 30*20/22 ≈ 77.3 to x = 90
SIDE_BUILDING = [[70.0, 8.0], [74.0, 8.0], [74.0, 12.0], [70.0, 12.0]]


def test_empty_visible_region_gives_sentinels():
    scene = lonely_scene()
    tgt = VehicleState(1, 0.0, (48.0, 0.0), 0.0, 5.0)
    ego = VehicleState(2, 0.0, (50.0, 30.0), -math.pi / 2, 0.0)
    obs, occ = observe(scene, {1: tgt, 2: ego}, 2, 0.0)
    goal = generate_goals(tgt, scene).goals[0]
    fv = extract_features([obs], 1, goal, scene, occ)
    assert fv.values["distance-to-vehicle-in-front"] == MAX_DIST
    assert fv.values["speed-of-vehicle-in-front"] == 0.0
    assert fv.values["distance-from-oncoming-vehicle"] == MAX_DIST
    assert fv.values["speed-of-oncoming-vehicle"] == 0.0


def test_lead_vehicle_before_shadow_is_known():
    scene = lonely_scene([SIDE_BUILDING])
    tgt = VehicleState(1, 0.0, (48.0, 0.0), 0.0, 5.0)
    lead = VehicleState(3, 0.0, (60.0, 0.0), 0.0, 3.0)
    ego = VehicleState(2, 0.0, (50.0, 30.0), -math.pi / 2, 0.0)
    obs, occ = observe(scene, {1: tgt, 2: ego, 3: lead}, 2, 0.0)
    # nearest occlusion is the lead's own footprint from its rear bumper
    first = occ.first_occluded_from("solo", 50.5, 80.5)
    assert first == pytest.approx(60.0 - lead.length / 2, abs=0.2)
    # without the lead, the building shadow starts further out
    _, occ_bare = observe(scene, {1: tgt, 2: ego}, 2, 0.0)
    assert occ_bare.first_occluded_from("solo", 50.5, 80.5) == pytest.approx(50 + 30 * 20 / 22, abs=0.2)
    goal = generate_goals(tgt, scene).goals[0]
    fv = extract_features([obs], 1, goal, scene, occ)
    assert fv.values["distance-to-vehicle-in-front"] == pytest.approx(12.0)
    assert fv.values["speed-of-vehicle-in-front"] == pytest.approx(3.0)


def test_shadow_before_any_vehicle_makes_front_missing():
    scene = lonely_scene([SIDE_BUILDING])
    tgt = VehicleState(1, 0.0, (48.0, 0.0), 0.0, 5.0)
    far_lead = VehicleState(3, 0.0, (120.0, 0.0), 0.0, 3.0)
    ego = VehicleState(2, 0.0, (50.0, 30.0), -math.pi / 2, 0.0)
    obs, occ = observe(scene, {1: tgt, 2: ego, 3: far_lead}, 2, 0.0)
    goal = generate_goals(tgt, scene).goals[0]
    fv = extract_features([obs], 1, goal, scene, occ)
    assert fv.is_missing("distance-to-vehicle-in-front")
    assert fv.is_missing("speed-of-vehicle-in-front")
    assert fv.indicators["distance-to-vehicle-in-front-missing"]
    assert fv.indicators["speed-of-vehicle-in-front-missing"]


def test_own_shadow_hides_lane_ahead_of_target():
    # ego directly behind the target cannot see past it
    scene = lonely_scene()
    tgt = VehicleState(1, 0.0, (48.0, 0.0), 0.0, 5.0)
    ego = VehicleState(2, 0.0, (30.0, 0.0), 0.0, 5.0)
    obs, occ = observe(scene, {1: tgt, 2: ego}, 2, 0.0)
    goal = generate_goals(tgt, scene).goals[0]
    fv = extract_features([obs], 1, goal, scene, occ)
    assert fv.is_missing("distance-to-vehicle-in-front")


def test_occluded_minor_road_makes_oncoming_missing():
    # the south-west building hides the minor arm that crosses the
    # eastbound through path
    scene = t_junction_scene()
    tgt = VehicleState(1, 0.0, (-40.0, -1.75), 0.0, 8.0)
    ego = VehicleState(2, 0.0, (-60.0, -1.75), 0.0, 8.0)
    obs, occ = observe(scene, {1: tgt, 2: ego}, 2, 0.0)
    goals = {g.goal_type: g for g in generate_goals(tgt, scene).goals}
    fv = extract_features([obs], 1, goals[GoalType.STRAIGHT_ON], scene, occ)
    assert fv.indicators["distance-from-oncoming-vehicle-missing"]
    assert fv.indicators["speed-of-oncoming-vehicle-missing"]
    # with occlusion disabled there is simply nothing on the minor arm
    obs2 = full_view({1: tgt, 2: ego}, 2, 0.0)
    goals2 = {g.goal_type: g for g in generate_goals(tgt, scene).goals}
    fv2 = extract_features([obs2], 1, goals2[GoalType.STRAIGHT_ON], scene, None)
    assert fv2.values["distance-from-oncoming-vehicle"] == MAX_DIST


def test_visible_oncoming_vehicle_resolves_feature():
    bare = t_junction_scene(buildings=[])
    tgt = VehicleState(1, 0.0, (1.75, -20.0), math.pi / 2, 6.0)
    # westbound vehicle heading for the junction; ego watches from the
    # side so the junction mouth is not hidden behind the target.  The
    # nearest conflict with the left-turn path is where the two turn
    # connectors (radius 13.75 arcs centred (+-12, -12)) cross at
    # (0, -12 + sqrt(13.75^2 - 12^2)); the vehicle projects onto the
    # opposing connector's tangent start at s ~ 3.89 and the crossing
    # sits at s ~ 14.58, so the reported gap is ~ 10.70 m.
    onc = VehicleState(3, 0.0, (8.0, 1.75), math.pi, 9.0)
    ego = VehicleState(2, 0.0, (20.0, -20.0), math.pi / 2, 6.0)
    obs, occ = observe(bare, {1: tgt, 2: ego, 3: onc}, 2, 0.0)
    goals = {g.goal_type: g for g in generate_goals(tgt, bare).goals}
    fv = extract_features([obs], 1, goals[GoalType.ENTER_LEFT], bare, occ)
    assert fv.values["distance-from-oncoming-vehicle"] == pytest.approx(10.70, abs=0.05)
    assert fv.values["speed-of-oncoming-vehicle"] == pytest.approx(9.0)


# --- roundabout features ---


def _ring_history(scene, ring_angles, approach=((40, 1.75), (30, 1.75)), ego_xy=(60.0, -40.0)):
    hist = []
    t = 0.0
    for xy in approach:
        frame = {
            1: VehicleState(1, t, xy, math.pi, 8.0),
            2: VehicleState(2, t, ego_xy, math.pi / 2, 8.0),
        }
        obs, occ = observe(scene, frame, 2, t)
        hist.append(obs)
        t += 1.0
    for a in ring_angles:
        frame = {
            1: VehicleState(1, t, (20 * math.cos(a), 20 * math.sin(a)), a + math.pi / 2, 7.0),
            2: VehicleState(2, t, ego_xy, math.pi / 2, 8.0),
        }
        obs, occ = observe(scene, frame, 2, t)
        hist.append(obs)
        t += 1.0
    tgt = frame[1]
    return hist, occ, tgt


def test_exit_number_from_approach():
    scene = roundabout_scene()
    tgt = VehicleState(1, 0.0, (40.0, 1.75), math.pi, 8.0)
    ego = VehicleState(2, 0.0, (60.0, -40.0), math.pi / 2, 8.0)
    obs, occ = observe(scene, {1: tgt, 2: ego}, 2, 0.0)
    by_lane = {g.lane_id: g for g in generate_goals(tgt, scene).goals}
    assert set(by_lane) == {"exit_n", "exit_w", "exit_s"}
    fvs = extract_features_batch([obs], 1, list(by_lane.values()), scene, occ)
    nums = {g.lane_id: fv.values["roundabout-exit-number"] for g, fv in zip(by_lane.values(), fvs)}
    assert nums == {"exit_n": 1.0, "exit_w": 2.0, "exit_s": 3.0}


def test_exit_number_and_uturn_inside_ring():
    scene = roundabout_scene()
    hist, occ, tgt = _ring_history(scene, [0.15, 0.55, 0.95])
    goals = generate_goals(tgt, scene).goals
    fvs = extract_features_batch(hist, 1, goals, scene, occ)
    nums = {g.lane_id: fv.values["roundabout-exit-number"] for g, fv in zip(goals, fvs)}
    assert nums == {"exit_e": 4.0, "exit_n": 1.0, "exit_s": 3.0, "exit_w": 2.0}
    uturns = {g.lane_id: fv.values["roundabout-uturn"] for g, fv in zip(goals, fvs)}
    assert uturns == {"exit_e": 1.0, "exit_n": 0.0, "exit_s": 0.0, "exit_w": 0.0}
    # heading change toward the goal grows with each extra quarter turn
    pairs = sorted(
        (nums[g.lane_id], fv.values["junction-heading-change"]) for g, fv in zip(goals, fvs)
    )
    jhc = [j for _, j in pairs]
    assert all(a < b for a, b in zip(jhc, jhc[1:]))


def test_exit_number_missing_when_entry_unobserved():
    scene = roundabout_scene()
    hist, occ, tgt = _ring_history(scene, [0.15, 0.55, 0.95])
    goals = generate_goals(tgt, scene).goals
    fvs = extract_features_batch(hist[-2:], 1, goals, scene, occ)
    for fv in fvs:
        assert fv.is_missing("roundabout-exit-number")
        assert fv.indicators["roundabout-exit-number-missing"]


def test_oracle_reveal_fills_everything():
    scene = roundabout_scene()
    hist, occ, tgt = _ring_history(scene, [0.15, 0.55, 0.95])
    goals = generate_goals(tgt, scene).goals
    fvs = extract_features_batch(hist[-2:], 1, goals, scene, None, reveal_missing=True)
    nums = {g.lane_id: fv.values["roundabout-exit-number"] for g, fv in zip(goals, fvs)}
    assert nums == {"exit_e": 4.0, "exit_n": 1.0, "exit_s": 3.0, "exit_w": 2.0}
    for fv in fvs:
        assert not any(fv.indicators.values())
        assert not any(fv.is_missing(f) for f in BASE_MISSING)


def test_uturn_zero_off_roundabout():
    scene = t_junction_scene()
    tgt = VehicleState(1, 0.0, (-40.0, -1.75), 0.0, 8.0)
    obs = full_view({1: tgt}, 1, 0.0)
    for goal in generate_goals(tgt, scene).goals:
        fv = extract_features([obs], 1, goal, scene, None)
        assert fv.values["roundabout-uturn"] == 0.0
        assert fv.values["roundabout-exit-number"] == 0.0
        assert not fv.indicators["roundabout-exit-number-missing"]


def test_slip_road_flag():
    a = straight_lane("a", (0, 0), (30, 0), successors=["b", "c"])
    b = straight_lane("b", (30, 0), (60, 0), predecessors=["a"], successors=["d"])
    c = straight_lane("c", (30, 0.5), (60, 0.5), predecessors=["a"], successors=["d"], slip_road=True)
    d = straight_lane("d", (60, 0), (90, 0), predecessors=["b", "c"])
    scene = StaticScene([a, b, c, d], [], [], scenario_id="slip")
    tgt = VehicleState(1, 0.0, (5.0, 0.0), 0.0, 5.0)
    obs = full_view({1: tgt}, 1, 0.0)
    goal = Goal(np.array([90.0, 0.0]), "d", GoalType.STRAIGHT_ON)
    fv = extract_features([obs], 1, goal, scene, None)
    assert fv.values["roundabout-slip-road"] == 1.0
    no_slip = StaticScene(
        [a, straight_lane("b", (30, 0), (60, 0), predecessors=["a"], successors=["d"]),
         straight_lane("c", (30, 0.5), (60, 0.5), predecessors=["a"], successors=["d"]), d],
        [], [], scenario_id="no-slip")
    fv2 = extract_features([obs], 1, goal, no_slip, None)
    assert fv2.values["roundabout-slip-road"] == 0.0


# --- consistency and monotonicity properties ---


def _random_t_junction_setup(rng, scene):
    lanes = [l for l in scene.lanes if l.junction is None]
    lane = lanes[rng.integers(len(lanes))]
    s = float(rng.uniform(0.1, lane.length - 0.1))
    pos = lane.polyline.interpolate(s)
    tgt = VehicleState(1, 1.0, pos, lane.polyline.tangent_at(s), float(rng.uniform(0, 12)))
    ego_lane = lanes[rng.integers(len(lanes))]
    se = float(rng.uniform(0.1, ego_lane.length - 0.1))
    ego = VehicleState(2, 1.0, ego_lane.polyline.interpolate(se), ego_lane.polyline.tangent_at(se), 5.0)
    extra = VehicleState(
        3, 1.0, (float(rng.uniform(-60, 60)), float(rng.uniform(-60, 20))), float(rng.uniform(-3, 3)), 4.0
    )
    return tgt, ego, extra


def test_extracted_vectors_always_consistent():
    full = t_junction_scene()
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(60):
        tgt, ego, extra = _random_t_junction_setup(rng, full)
        frame = {1: tgt, 2: ego, 3: extra}
        obs, occ = observe(full, frame, 2, 1.0)
        if 1 not in obs.visible_states:
            continue
        prev = {vid: VehicleState(vid, 0.0, st.position - 2.0, st.heading, st.speed) for vid, st in frame.items()}
        pobs, _ = observe(full, prev, 2, 0.0)
        hist = [pobs, obs]
        for goal in generate_goals(tgt, full).goals:
            fv = extract_features(hist, 1, goal, full, occ)
            base = extract_base_features(hist, 1, goal, full, occ)
            inds = extract_indicators(occ, 1, goal, full, hist)
            assert base == fv.values
            assert inds == fv.indicators
            for m in BASE_MISSING:
                assert (fv.values[m] is None) == fv.indicators[f"{m}-missing"]
            checked += 1
    assert checked > 20


def test_shrinking_occlusion_never_sets_indicators():
    rng = np.random.default_rng(23)
    full = t_junction_scene()
    bare = t_junction_scene(buildings=[T_JUNCTION_BUILDINGS[0]])
    for _ in range(20):
        tgt, ego, extra = _random_t_junction_setup(rng, full)
        frame = {1: tgt, 2: ego, 3: extra}
        obs_f, occ_f = observe(full, frame, 2, 1.0)
        obs_b, occ_b = observe(bare, frame, 2, 1.0)
        if 1 not in obs_f.visible_states or 1 not in obs_b.visible_states:
            continue
        for goal in generate_goals(tgt, full).goals:
            ind_full = extract_indicators(occ_f, 1, goal, full, [obs_f])
            ind_bare = extract_indicators(occ_b, 1, goal, bare, [obs_b])
            for key, bare_true in ind_bare.items():
                assert not (bare_true and not ind_full[key]), key
