"""Evaluation: true-goal probability curves and inference latency.

The headline measure is the mean probability assigned to the target's
true goal, plotted against the fraction of the target's trajectory
completed (10 equal-width bins).  Groups are one (episode, ego, target,
tick) goal set each; the posterior over a group uses uniform priors, so
the uniform baseline for a group is simply 1 over its size.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from .datakit import Sample
from .dtree import GoalTree, infer_likelihood
from .errors import MissingModelError
from .inference import posterior, run_pipeline
from .scene import GoalType

N_BINS = 10


@dataclass(frozen=True)
class BinStat:
    lo: float
    hi: float
    count: int
    mean_true_probability: float | None
    mean_baseline: float | None


@dataclass
class EvaluationReport:
    bins: list[BinStat]
    n_groups: int
    skipped_groups: int  # true goal absent from the generated set
    overall_mean: float | None
    baseline_mean: float | None  # uniform prior over each group

    def mean_from_fraction(self, lo: float) -> float | None:
        """Mean true-goal probability over groups with fraction >= lo."""
        picked = [b for b in self.bins if b.lo >= lo - 1e-12 and b.count > 0]
        total = sum(b.count for b in picked)
        if total == 0:
            return None
        return sum(b.mean_true_probability * b.count for b in picked) / total

    def baseline_from_fraction(self, lo: float) -> float | None:
        """Uniform-prior mean over the same groups as mean_from_fraction."""
        picked = [b for b in self.bins if b.lo >= lo - 1e-12 and b.count > 0]
        total = sum(b.count for b in picked)
        if total == 0:
            return None
        return sum(b.mean_baseline * b.count for b in picked) / total

    def as_dict(self) -> dict:
        return {
            "bins": [
                {
                    "lo": b.lo,
                    "hi": b.hi,
                    "count": b.count,
                    "mean_true_probability": b.mean_true_probability,
                    "mean_baseline": b.mean_baseline,
                }
                for b in self.bins
            ],
            "n_groups": self.n_groups,
            "skipped_groups": self.skipped_groups,
            "overall_mean": self.overall_mean,
            "baseline_mean": self.baseline_mean,
        }


def group_samples(samples: list[Sample]) -> dict[tuple, list[Sample]]:
    """One goal set per (scenario, episode, tick, ego, target)."""
    groups: dict[tuple, list[Sample]] = {}
    for s in samples:
        key = (s.scenario_id, s.episode_id, s.t, s.ego_id, s.vehicle_id)
        groups.setdefault(key, []).append(s)
    return groups


def true_goal_probability(group: list[Sample], models: dict[GoalType, GoalTree]) -> float | None:
    """Posterior probability of the true goal within one group.

    None when the generated set misses the true goal (recall failure);
    a goal type without a model raises, matching the pipeline.
    """
    if not any(s.y for s in group):
        return None
    likelihoods = []
    for s in group:
        tree = models.get(s.goal_type)
        if tree is None:
            raise MissingModelError(f"no tree for goal type {s.goal_type.value!r}")
        likelihoods.append(infer_likelihood(tree, s.x))
    probs = posterior(likelihoods, [1.0 / len(group)] * len(group))
    return next(p for s, p in zip(group, probs) if s.y)


def evaluation_curve(samples: list[Sample], models: dict[GoalType, GoalTree], n_bins: int = N_BINS) -> EvaluationReport:
    """Mean true-goal probability per fraction-completed bin.

    Bins partition [0, 1] equally; a group lands in the bin holding its
    fraction (the final bin is closed above).
    """
    edges = [i / n_bins for i in range(n_bins + 1)]
    per_bin: list[list[float]] = [[] for _ in range(n_bins)]
    base_bin: list[list[float]] = [[] for _ in range(n_bins)]
    all_probs: list[float] = []
    baselines: list[float] = []
    skipped = 0
    groups = group_samples(samples)
    for group in groups.values():
        p = true_goal_probability(group, models)
        if p is None:
            skipped += 1
            continue
        frac = group[0].fraction
        b = min(int(frac * n_bins), n_bins - 1)
        per_bin[b].append(p)
        base_bin[b].append(1.0 / len(group))
        all_probs.append(p)
        baselines.append(1.0 / len(group))
    bins = [
        BinStat(
            lo=edges[i],
            hi=edges[i + 1],
            count=len(per_bin[i]),
            mean_true_probability=statistics.fmean(per_bin[i]) if per_bin[i] else None,
            mean_baseline=statistics.fmean(base_bin[i]) if base_bin[i] else None,
        )
        for i in range(n_bins)
    ]
    return EvaluationReport(
        bins=bins,
        n_groups=len(groups),
        skipped_groups=skipped,
        overall_mean=statistics.fmean(all_probs) if all_probs else None,
        baseline_mean=statistics.fmean(baselines) if baselines else None,
    )


@dataclass
class LatencyReport:
    median_ms: float
    mean_ms: float
    n_runs: int

    def as_dict(self) -> dict:
        return {"median_ms": self.median_ms, "mean_ms": self.mean_ms, "n_runs": self.n_runs}


def latency_benchmark(histories, scene, models, n_repeats: int = 3) -> LatencyReport:
    """Median and mean wall-clock of the full per-target pipeline.

    `histories` is a list of (history, ego_id, target_id) cases; each is
    run end to end (occlusion, goals, features, trees, posterior).
    """
    times: list[float] = []
    for _ in range(n_repeats):
        for history, ego_id, target_id in histories:
            t0 = time.perf_counter()
            run_pipeline(history, ego_id, target_id, scene, models)
            times.append((time.perf_counter() - t0) * 1000.0)
    return LatencyReport(
        median_ms=statistics.median(times),
        mean_ms=statistics.fmean(times),
        n_runs=len(times),
    )
