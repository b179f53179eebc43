"""Net-gain greedy selection with redundancy penalty and difficulty fallback."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import (AssignmentSlate, ContentItem, LearnerState, ObjectiveWeights, PrereqGraph,
                   TraceRecord, compute_slack, level_distance)
from .feasibility import AdmissiblePool, prerequisite_ok


@dataclass(frozen=True)
class GreedyConfig:
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    fallback_enabled: bool = True
    max_tier: int = 2
    max_iterations: int | None = None

    def __post_init__(self):
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 <= self.max_tier <= 2:
            raise ValueError("max_tier must be 0, 1 or 2")

    @property
    def top_tier(self) -> int:
        return self.max_tier if self.fallback_enabled else 0


def score(item: ContentItem, uncovered: frozenset[int] | set[int], slate_so_far: Sequence[ContentItem],
          learner: LearnerState, weights: ObjectiveWeights, tier: int) -> float:
    """Net gain: new gap coverage minus time, misalignment and overlap penalties."""
    dist = level_distance(item.difficulty_level, learner.preferred_level)
    if dist > tier:
        raise ValueError(f"content {item.id} is {dist} levels from the preferred level; tier is {tier}")
    covered: set[int] = set()
    for other in slate_so_far:
        covered |= other.skills
    gain = len(item.skills & set(uncovered))
    overlap = len(item.skills & covered)
    return gain - (weights.epsilon * item.duration_minutes + weights.omega * dist
                   + weights.gamma_overlap * overlap)


def solve(learner: LearnerState, pool: AdmissiblePool, content: Sequence[ContentItem],
          prereqs: PrereqGraph | None = None, config: GreedyConfig | None = None) -> AssignmentSlate:
    config = config or GreedyConfig()
    w = config.weights
    index = {it.id: it for it in content}
    order = {it.id: n for n, it in enumerate(content)}
    candidates = sorted((index[c] for c in pool.nonredundant_ids), key=lambda it: order[it.id])
    limit = config.max_iterations

    uncovered = set(learner.gap_skills)
    slate: list[ContentItem] = []
    trace: list[TraceRecord] = []
    minutes = 0.0
    tier = 0
    stop = ""
    while True:
        if not uncovered:
            stop = "all_gaps_covered"
            break
        if len(slate) >= learner.slate_cap:
            stop = "slate_cap"
            break
        if limit is not None and len(slate) >= limit:
            stop = "max_iterations"
            break
        best, best_f = None, -float("inf")
        chosen_ids = {it.id for it in slate}
        for it in candidates:
            if it.id in chosen_ids or not it.skills & uncovered:
                continue
            if level_distance(it.difficulty_level, learner.preferred_level) > tier:
                continue
            if minutes + it.duration_minutes > learner.time_budget_minutes + 1e-9:
                continue
            if not prerequisite_ok([*chosen_ids, it.id], learner, prereqs, index):
                continue
            f = score(it, uncovered, slate, learner, w, tier)
            if f > best_f:
                best, best_f = it, f
        if best is None:
            if tier < config.top_tier:
                tier += 1
                continue
            stop = "no_candidates"
            break
        new = tuple(sorted(best.skills & uncovered))
        slate.append(best)
        minutes += best.duration_minutes
        uncovered -= best.skills
        trace.append(TraceRecord(best.id, new, best_f, tier))

    slack = compute_slack(learner, slate)
    if any(slack):
        missing = [k for k, s in enumerate(slack) if s]
        trace.append(TraceRecord(None, tuple(missing), None, tier, event="slack", note=stop))
    return AssignmentSlate(learner_id=learner.id, selected=tuple(it.id for it in slate), slack=slack,
                           total_minutes=minutes, trace=tuple(trace), solver="greedy")
