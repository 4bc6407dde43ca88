"""Bayesian goal posterior and the per-frame recognition pipeline.

The pipeline runs the whole chain for one (ego, target) pair at one
instant: occlusions from the ego's latest view, goal generation for the
target, feature extraction over the observed history, one tree
evaluation per goal (chosen by goal type), and the normalised posterior.
Priors are uniform unless the caller supplies a map.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .dtree import GoalTree, infer_likelihood
from .errors import DegeneratePosteriorError, MissingModelError
from .features import extract_features_batch
from .goals import generate_goals
from .occlusion import compute_occluded_regions
from .scene import Goal, GoalType, Observation, StaticScene

DEFAULT_SENSOR_RANGE = 100.0


@dataclass(frozen=True)
class PosteriorEntry:
    goal: Goal
    prior: float
    likelihood: float
    posterior: float


@dataclass(frozen=True)
class GoalPosterior:
    """Posterior over one target vehicle's goals at one time."""

    vehicle_id: int
    time: float
    entries: tuple[PosteriorEntry, ...]
    elapsed_ms: float = 0.0

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(e.posterior for e in self.entries)

    def best(self) -> PosteriorEntry:
        return max(self.entries, key=lambda e: e.posterior)

    def probability_of(self, lane_id: str) -> float:
        for e in self.entries:
            if e.goal.lane_id == lane_id:
                return e.posterior
        raise KeyError(f"no goal on lane {lane_id!r}")


def posterior(likelihoods: list[float], priors: list[float]) -> list[float]:
    """p_k = L_k pi_k / sum_j L_j pi_j.

    Likelihoods must lie strictly inside (0, 1) and priors must be
    positive; the normaliser can then only vanish through underflow,
    which is reported rather than returned as NaN.
    """
    if len(likelihoods) != len(priors) or len(likelihoods) == 0:
        raise ValueError("need equally many likelihoods and priors, at least one each")
    for lik in likelihoods:
        if not 0.0 < lik < 1.0:
            raise ValueError(f"likelihood {lik} outside (0, 1)")
    for pri in priors:
        if pri <= 0.0:
            raise ValueError(f"prior {pri} must be positive")
    weighted = [lik * pri for lik, pri in zip(likelihoods, priors)]
    total = sum(weighted)
    if total == 0.0:
        raise DegeneratePosteriorError("all likelihood-prior products underflowed to zero")
    return [w / total for w in weighted]


def entropy(probabilities) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    return -sum(p * math.log2(p) for p in probabilities if p > 0.0)


def run_pipeline(
    history: list[Observation],
    ego_id: int,
    target_id: int,
    scene: StaticScene,
    models: dict[GoalType, GoalTree],
    sensor_range: float = DEFAULT_SENSOR_RANGE,
    priors: dict[str, float] | None = None,
) -> GoalPosterior:
    """Occlusions, goals, features, trees, posterior for one target.

    `priors`, when given, maps goal lane ids to prior probabilities; it
    must cover every generated goal and sum to one.  Raises OffMapError
    for a target on no lane and MissingModelError when a generated
    goal's type has no tree; goals are never silently dropped.
    """
    t0 = time.perf_counter()
    if not history:
        raise ValueError("history must contain at least one observation")
    latest = history[-1]
    if latest.ego_id != ego_id:
        raise ValueError(
            f"latest observation was taken by vehicle {latest.ego_id}, not ego {ego_id}"
        )
    target_state = latest.visible_states.get(target_id)
    if target_state is None:
        raise ValueError(f"target {target_id} not visible in the latest observation")
    occlusions = compute_occluded_regions(latest.visible_states, scene, ego_id, sensor_range)
    goal_set = generate_goals(target_state, scene)
    goals = goal_set.goals
    vectors = extract_features_batch(history, target_id, goals, scene, occlusions)
    likelihoods = []
    for goal, fv in zip(goals, vectors):
        tree = models.get(goal.goal_type)
        if tree is None:
            raise MissingModelError(f"no tree for goal type {goal.goal_type.value!r}")
        likelihoods.append(infer_likelihood(tree, fv))
    prior_list = _priors_for(goals, priors)
    probs = posterior(likelihoods, prior_list)
    entries = tuple(
        PosteriorEntry(goal=g, prior=pri, likelihood=lik, posterior=p)
        for g, pri, lik, p in zip(goals, prior_list, likelihoods, probs)
    )
    elapsed_ms = (time.perf_counter() - t0) * 1000.0
    return GoalPosterior(
        vehicle_id=target_id, time=latest.time, entries=entries, elapsed_ms=elapsed_ms
    )


def _priors_for(goals: list[Goal], priors: dict[str, float] | None) -> list[float]:
    if priors is None:
        return [1.0 / len(goals)] * len(goals)
    missing = [g.lane_id for g in goals if g.lane_id not in priors]
    if missing:
        raise ValueError(f"priors missing for goals on lanes {missing}")
    chosen = [priors[g.lane_id] for g in goals]
    if abs(sum(chosen) - 1.0) > 1e-9:
        raise ValueError(f"priors over the generated goals sum to {sum(chosen)}, not 1")
    return chosen
