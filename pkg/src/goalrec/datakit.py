"""Recordings, training samples, and episode splits.

A Recording is the unit of experimentation: one continuous episode of a
scenario at a fixed frame rate.  Samples are extracted at one second
intervals, treating every present vehicle as an ego and every other
visible vehicle as a target, one sample per generated goal of the
target, up to the tick where the target reaches its true goal.  True
goals are not part of any dataset we can ship, so they are derived:
the goal generated at the vehicle's first frame whose location ends up
nearest its final position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import InsufficientEpisodesError, OffMapError, RecordingFormatError
from .features import DEFAULT_CATALOG, FeatureCatalog, FeatureVector, assemble, extract_features_batch
from .goals import generate_goals
from .occlusion import compute_occluded_regions
from .scene import Goal, GoalType, StaticScene, VehicleState, observable_vehicles

# a goal counts as reached within one lane width of its location
GOAL_REACH_RADIUS = 3.5

REQUIRED_CSV_COLUMNS = ("trackId", "frame", "xCenter", "yCenter", "heading")

SPLIT_POLICIES = ("hold-one-out-each", "hold-k", "ratio-60-20-20")


@dataclass
class Recording:
    """One continuous episode: time-ordered frames of vehicle states.

    Frames are non-empty maps vehicle-id -> VehicleState, all states of
    a frame share its time, times increase strictly, and every vehicle
    occupies one contiguous run of frames.
    """

    scenario_id: str
    episode_id: str
    frame_rate: float
    frames: list[dict[int, VehicleState]]

    def __post_init__(self) -> None:
        if self.frame_rate <= 0:
            raise RecordingFormatError("frame rate must be positive")
        last_t = -math.inf
        present: dict[int, list[int]] = {}
        for i, frame in enumerate(self.frames):
            if not frame:
                raise RecordingFormatError(f"frame {i} is empty")
            times = {s.time for s in frame.values()}
            if len(times) != 1:
                raise RecordingFormatError(f"frame {i} mixes state times {sorted(times)}")
            t = times.pop()
            if t <= last_t:
                raise RecordingFormatError(f"frame times not strictly increasing at index {i}")
            last_t = t
            for vid, state in frame.items():
                if state.vehicle_id != vid:
                    raise RecordingFormatError(f"frame {i} keys vehicle {state.vehicle_id} as {vid}")
                present.setdefault(vid, []).append(i)
        for vid, idxs in present.items():
            if idxs[-1] - idxs[0] + 1 != len(idxs):
                raise RecordingFormatError(f"vehicle {vid} has gaps in its presence")

    @property
    def times(self) -> np.ndarray:
        return np.array([next(iter(f.values())).time for f in self.frames])

    @property
    def duration(self) -> float:
        t = self.times
        return float(t[-1] - t[0]) if len(t) else 0.0

    def vehicles(self) -> list[int]:
        seen: dict[int, None] = {}
        for frame in self.frames:
            for vid in frame:
                seen.setdefault(vid)
        return sorted(seen)

    def states_of(self, vehicle_id: int) -> list[VehicleState]:
        return [f[vehicle_id] for f in self.frames if vehicle_id in f]


@dataclass(frozen=True)
class Sample:
    """One (ego, target, goal) training row with its provenance."""

    x: FeatureVector
    y: bool
    scenario_id: str
    episode_id: str
    t: float
    ego_id: int
    vehicle_id: int
    goal_type: GoalType
    fraction: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction {self.fraction} outside [0, 1]")


@dataclass
class ExtractionStats:
    """Counters filled in by extract_samples when passed as out-param."""

    ticks: int = 0
    samples: int = 0
    skipped_vehicles: int = 0
    off_map_ticks: int = 0
    goal_groups: int = 0
    groups_missing_true_goal: int = 0

    @property
    def generation_recall(self) -> float:
        if self.goal_groups == 0:
            return 1.0
        return 1.0 - self.groups_missing_true_goal / self.goal_groups


def ingest_csv(
    path: str,
    scene: StaticScene,
    frame_rate: float = 25.0,
    episode_id: str | None = None,
) -> Recording:
    """Read one trajectory table (inD-family schema) into a Recording.

    Required columns: trackId, frame, xCenter, yCenter, heading (deg).
    Speed and acceleration come from the velocity/acceleration columns
    when present, else from finite differences of what is.
    """
    table = pd.read_csv(path)
    for col in REQUIRED_CSV_COLUMNS:
        if col not in table.columns:
            raise RecordingFormatError(f"missing column {col!r} in {path}")
    if len(table) == 0:
        raise RecordingFormatError(f"no data rows in {path}")
    has_vel = {"xVelocity", "yVelocity"} <= set(table.columns)
    has_acc = {"xAcceleration", "yAcceleration"} <= set(table.columns)
    by_frame: dict[int, dict[int, VehicleState]] = {}
    for tid, track in table.groupby("trackId", sort=True):
        frames = track["frame"].to_numpy()
        if np.any(np.diff(frames) <= 0):
            raise RecordingFormatError(f"track {tid}: frame numbers not strictly increasing")
        t = frames / frame_rate
        xy = track[["xCenter", "yCenter"]].to_numpy(dtype=float)
        heading = np.radians(track["heading"].to_numpy(dtype=float))
        if has_vel:
            vel = track[["xVelocity", "yVelocity"]].to_numpy(dtype=float)
            speed = np.hypot(vel[:, 0], vel[:, 1])
        else:
            speed = _finite_speed(xy, t)
        if has_acc and has_vel:
            acc_xy = track[["xAcceleration", "yAcceleration"]].to_numpy(dtype=float)
            accel = _tangential(acc_xy, vel)
        else:
            accel = np.gradient(speed, t) if len(t) > 1 else np.zeros(1)
        length = track["length"].to_numpy(dtype=float) if "length" in track else np.full(len(t), 4.5)
        width = track["width"].to_numpy(dtype=float) if "width" in track else np.full(len(t), 1.8)
        for j, fr in enumerate(frames):
            by_frame.setdefault(int(fr), {})[int(tid)] = VehicleState(
                vehicle_id=int(tid),
                time=float(t[j]),
                position=xy[j],
                heading=float(heading[j]),
                speed=float(max(speed[j], 0.0)),
                acceleration=float(accel[j]),
                length=float(length[j]),
                width=float(width[j]),
            )
    ordered = [by_frame[fr] for fr in sorted(by_frame)]
    if episode_id is None:
        episode_id = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return Recording(
        scenario_id=scene.scenario_id,
        episode_id=episode_id,
        frame_rate=frame_rate,
        frames=ordered,
    )


def _finite_speed(xy: np.ndarray, t: np.ndarray) -> np.ndarray:
    if len(t) < 2:
        return np.zeros(len(t))
    steps = np.hypot(*np.diff(xy, axis=0).T) / np.diff(t)
    return np.concatenate([[steps[0]], steps])


def _tangential(acc_xy: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """Project acceleration onto the direction of travel."""
    speed = np.hypot(vel[:, 0], vel[:, 1])
    out = np.hypot(acc_xy[:, 0], acc_xy[:, 1])
    moving = speed > 0.1
    out[moving] = (acc_xy[moving] * vel[moving]).sum(axis=1) / speed[moving]
    return out


def derive_true_goal(recording: Recording, vehicle_id: int, scene: StaticScene) -> Goal | None:
    """Label a vehicle with the first-frame goal nearest its final position.

    Returns None when the first state is off the map, which callers
    count as an undeterminable-goal skip.
    """
    states = recording.states_of(vehicle_id)
    if not states:
        return None
    try:
        goal_set = generate_goals(states[0], scene)
    except OffMapError:
        return None
    final = states[-1].position
    return min(goal_set.goals, key=lambda g: float(np.hypot(*(g.location - final))))


def goal_reach_time(recording: Recording, vehicle_id: int, goal: Goal) -> float:
    """First time within GOAL_REACH_RADIUS of the goal, else the last time."""
    states = recording.states_of(vehicle_id)
    for s in states:
        if float(np.hypot(*(goal.location - s.position))) <= GOAL_REACH_RADIUS:
            return s.time
    return states[-1].time


def tick_indices(recording: Recording) -> list[int]:
    """Frame indices nearest each whole second from the recording start."""
    times = recording.times
    ticks = times[0] + np.arange(0.0, math.floor(times[-1] - times[0]) + 1.0)
    idx = [int(np.argmin(np.abs(times - tk))) for tk in ticks]
    out: list[int] = []
    for i in idx:
        if not out or i != out[-1]:
            out.append(i)
    return out


def _extract_variants(
    recording: Recording,
    scene: StaticScene,
    catalog: FeatureCatalog,
    sensor_range: float,
    variants: tuple[bool, ...],
    stats: ExtractionStats,
) -> tuple[list[Sample], ...]:
    """Shared extraction loop; one sample list per reveal_missing flag.

    Occlusion and visibility are computed once per (tick, ego) and
    shared across variants, which is what makes an oracle pass cheap.
    """
    true_goals: dict[int, Goal] = {}
    reach: dict[int, float] = {}
    first: dict[int, float] = {}
    for vid in recording.vehicles():
        goal = derive_true_goal(recording, vid, scene)
        if goal is None:
            stats.skipped_vehicles += 1
            continue
        true_goals[vid] = goal
        states = recording.states_of(vid)
        first[vid] = states[0].time
        reach[vid] = goal_reach_time(recording, vid, goal)
    histories: dict[int, list] = {}
    outs: tuple[list[Sample], ...] = tuple([] for _ in variants)
    for fi in tick_indices(recording):
        frame = recording.frames[fi]
        t = next(iter(frame.values())).time
        stats.ticks += 1
        views = {}
        for ego in frame:
            occ = compute_occluded_regions(frame, scene, ego, sensor_range)
            obs = observable_vehicles(frame, ego, occ)
            histories.setdefault(ego, []).append(obs)
            views[ego] = (occ, obs)
        for ego in frame:
            occ, obs = views[ego]
            for target in frame:
                if target == ego or target not in true_goals:
                    continue
                if t > reach[target]:
                    continue
                if target not in obs.visible_states:
                    continue
                try:
                    goals = generate_goals(frame[target], scene).goals
                except OffMapError:
                    stats.off_map_ticks += 1
                    continue
                true_lane = true_goals[target].lane_id
                stats.goal_groups += 1
                if all(g.lane_id != true_lane for g in goals):
                    stats.groups_missing_true_goal += 1
                span = reach[target] - first[target]
                frac = (t - first[target]) / span if span > 0 else 1.0
                frac = min(max(frac, 0.0), 1.0)
                for out, reveal in zip(outs, variants):
                    vectors = extract_features_batch(
                        histories[ego], target, goals, scene, occ, catalog, reveal
                    )
                    for g, fv in zip(goals, vectors):
                        out.append(
                            Sample(
                                x=fv,
                                y=g.lane_id == true_lane,
                                scenario_id=recording.scenario_id,
                                episode_id=recording.episode_id,
                                t=t,
                                ego_id=ego,
                                vehicle_id=target,
                                goal_type=g.goal_type,
                                fraction=frac,
                            )
                        )
    stats.samples += len(outs[0])
    return outs


def extract_samples(
    recording: Recording,
    scene: StaticScene,
    catalog: FeatureCatalog = DEFAULT_CATALOG,
    sensor_range: float = 100.0,
    reveal_missing: bool = False,
    stats: ExtractionStats | None = None,
) -> list[Sample]:
    """All (ego, target, goal) samples of one recording at 1 Hz ticks.

    Targets must be visible to their ego (occlusion-filtered); samples
    stop once the target reaches its true goal.  `reveal_missing`
    extracts oracle features (nothing missing, indicators all false).
    """
    out, = _extract_variants(
        recording, scene, catalog, sensor_range, (reveal_missing,), stats or ExtractionStats()
    )
    return out


def extract_samples_paired(
    recording: Recording,
    scene: StaticScene,
    catalog: FeatureCatalog = DEFAULT_CATALOG,
    sensor_range: float = 100.0,
    stats: ExtractionStats | None = None,
) -> tuple[list[Sample], list[Sample]]:
    """(occluded, revealed) sample lists over identical ticks and pairs."""
    return _extract_variants(
        recording, scene, catalog, sensor_range, (False, True), stats or ExtractionStats()
    )


def split_episodes(episodes: list, policy: str, seed: int = 0, k: int = 3):
    """Partition episodes into (train, validation, test) without leakage.

    hold-one-out-each keeps one episode for testing and one for
    validation; hold-k keeps k of each; the ratio policy approximates
    60:20:20.  Deterministic for a given seed.
    """
    if policy not in SPLIT_POLICIES:
        raise ValueError(f"unknown split policy {policy!r}")
    n = len(episodes)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [episodes[i] for i in order]
    if policy == "hold-one-out-each":
        k = 1
    if policy in ("hold-one-out-each", "hold-k"):
        if n < 2 * k + 1:
            raise InsufficientEpisodesError(f"need at least {2 * k + 1} episodes, got {n}")
        n_test = n_val = k
    else:
        n_test = max(1, round(0.2 * n))
        n_val = max(1, round(0.2 * n))
        if n - n_test - n_val < 1:
            raise InsufficientEpisodesError(f"need at least 3 episodes for ratios, got {n}")
    test = shuffled[:n_test]
    val = shuffled[n_test : n_test + n_val]
    train = shuffled[n_test + n_val :]
    return train, val, test


# --- feature tables ---

_META_COLUMNS = ("scenario_id", "episode_id", "t", "ego_id", "vehicle_id", "goal_type", "is_true_goal")


def write_feature_csv(samples: list[Sample], path: str, catalog: FeatureCatalog = DEFAULT_CATALOG) -> None:
    """One row per sample: provenance, label, then catalog-ordered features.

    Missing values become empty cells; indicators and the label 0/1.
    """
    rows = []
    for s in samples:
        row: dict = {
            "scenario_id": s.scenario_id,
            "episode_id": s.episode_id,
            "t": repr(s.t),
            "ego_id": s.ego_id,
            "vehicle_id": s.vehicle_id,
            "goal_type": s.goal_type.value,
            "is_true_goal": int(s.y),
        }
        for fid in catalog.all_base:
            v = s.x.values[fid]
            # repr keeps the shortest exact form; to_csv would clip digits
            row[fid] = "" if v is None else repr(float(v))
        for ind in catalog.indicators:
            row[ind] = int(s.x.indicators[ind])
        rows.append(row)
    frame = pd.DataFrame(rows, columns=list(_META_COLUMNS) + list(catalog.columns))
    frame.to_csv(path, index=False)


def read_feature_csv(path: str, catalog: FeatureCatalog = DEFAULT_CATALOG) -> list[Sample]:
    """Read a feature table back; fraction is not stored and reads as 0."""
    table = pd.read_csv(path, float_precision="round_trip")
    needed = list(_META_COLUMNS) + list(catalog.columns)
    for col in needed:
        if col not in table.columns:
            raise RecordingFormatError(f"feature table missing column {col!r}")
    samples = []
    for _, row in table.iterrows():
        values = {}
        for fid in catalog.all_base:
            v = row[fid]
            values[fid] = None if pd.isna(v) else float(v)
        inds = {ind: bool(int(row[ind])) for ind in catalog.indicators}
        samples.append(
            Sample(
                x=assemble(values, inds, catalog),
                y=bool(int(row["is_true_goal"])),
                scenario_id=str(row["scenario_id"]),
                episode_id=str(row["episode_id"]),
                t=float(row["t"]),
                ego_id=int(row["ego_id"]),
                vehicle_id=int(row["vehicle_id"]),
                goal_type=GoalType.from_string(str(row["goal_type"])),
                fraction=0.0,
            )
        )
    return samples
