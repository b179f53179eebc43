"""Cohort-level evaluation of assignment slates."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import AssignmentSlate, ContentItem, LearnerState


def _pair(slates: Sequence[AssignmentSlate], learners: Sequence[LearnerState]):
    if len(slates) != len(learners):
        raise ValueError(f"{len(slates)} slates for {len(learners)} learners")
    for s, lr in zip(slates, learners):
        if s.learner_id != lr.id:
            raise ValueError(f"slate for {s.learner_id!r} paired with learner {lr.id!r}")
    return zip(slates, learners)


def _index(content: Sequence[ContentItem]) -> dict[str, ContentItem]:
    return {it.id: it for it in content}


def _covered(slate: AssignmentSlate, index) -> set[int]:
    out: set[int] = set()
    for c in slate.selected:
        out |= index[c].skills
    return out


def _sd(values) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def satisfactory_rate(slates, learners, content) -> float:
    index = _index(content)
    pairs = list(_pair(slates, learners))
    if not pairs:
        return 100.0
    ok = sum(lr.gap_skills <= _covered(s, index) for s, lr in pairs)
    return 100.0 * ok / len(pairs)


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    n: int
    excluded: int = 0
    flagged: int = 0


def learner_gain_decay(slate: AssignmentSlate) -> float | None:
    gains = [len(r.new_skills) for r in slate.picks]
    if not gains:
        return None
    return sum(g - gains[0] for g in gains) / len(gains)


def gain_decay(slates: Sequence[AssignmentSlate]) -> Summary:
    """Mean over learners of sum_v (G_v - G_1) / picks, with G_v the marginal gaps closed by pick v."""
    vals = [v for v in (learner_gain_decay(s) for s in slates) if v is not None]
    mean = float(np.mean(vals)) if vals else 0.0
    return Summary(mean, _sd(vals), len(vals), excluded=len(slates) - len(vals))


def utility(slates, learners, content) -> Summary:
    """Covered gap skills per assigned minute, per learner."""
    index = _index(content)
    vals, excluded, flagged = [], 0, 0
    for s, lr in _pair(slates, learners):
        if not lr.gap_skills and not s.selected:
            excluded += 1
            continue
        if s.total_minutes <= 0:
            vals.append(0.0)
            flagged += 1
            continue
        vals.append(len(lr.gap_skills & _covered(s, index)) / s.total_minutes)
    mean = float(np.mean(vals)) if vals else 0.0
    return Summary(mean, _sd(vals), len(vals), excluded=excluded, flagged=flagged)


def redundant_incidences(slate: AssignmentSlate, learner: LearnerState, index) -> Counter:
    """Per content: skills it covers that were mastered or already covered earlier in the slate."""
    seen = set(range(learner.n_skills)) - learner.gap_skills
    out: Counter = Counter()
    for c in slate.selected:
        skills = index[c].skills
        out[c] += len(skills & seen)
        seen |= skills
    return out


def total_penalty(slates, learners, content, w1: float = 1.0, w2: float = 1.0) -> float:
    if w1 < 0 or w2 < 0:
        raise ValueError("penalty weights must be nonnegative")
    index = _index(content)
    over: Counter = Counter()
    used: set[str] = set()
    for s, lr in _pair(slates, learners):
        over.update(redundant_incidences(s, lr, index))
        used.update(s.selected)
    return sum(w1 * over[it.id] + w2 * (it.id not in used) for it in content)


@dataclass(frozen=True)
class CoverageCategories:
    fully_covered: int
    over_covered: int
    unsatisfied: int
    non_used: int


def classify(slate: AssignmentSlate, learner: LearnerState, index) -> str | None:
    """'fully', 'over', 'unsatisfied', or None for learners without gaps."""
    if not learner.gap_skills:
        return None
    if not learner.gap_skills <= _covered(slate, index):
        return "unsatisfied"
    return "over" if sum(redundant_incidences(slate, learner, index).values()) else "fully"


def coverage_categories(slates, learners, content) -> CoverageCategories:
    index = _index(content)
    tally: Counter = Counter()
    used: set[str] = set()
    for s, lr in _pair(slates, learners):
        tally[classify(s, lr, index)] += 1
        used.update(s.selected)
    return CoverageCategories(tally["fully"], tally["over"], tally["unsatisfied"],
                              sum(it.id not in used for it in content))


@dataclass
class EvaluationReport:
    solver: str
    scenario: str
    n_learners: int
    satisfactory_rate: float
    gain_decay: float
    gain_decay_sd: float
    utility_mean: float
    utility_sd: float
    total_penalty: float
    fully_covered: int
    over_covered: int
    unsatisfied: int
    non_used: int
    unique_content_assigned: int
    per_content_usage: dict[str, int] = field(default_factory=dict)
    slack_summary: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slack_summary"] = {str(k): v for k, v in self.slack_summary.items()}
        return d

    CSV_COLUMNS = ("solver", "scenario", "n_learners", "fully_covered", "over_covered",
                   "satisfactory_rate", "gain_decay", "gain_decay_sd", "utility_mean", "utility_sd",
                   "total_penalty", "unsatisfied", "non_used", "unique_content_assigned")

    def csv_row(self) -> dict:
        return {c: getattr(self, c) for c in self.CSV_COLUMNS}


def evaluate(slates, learners, content, solver: str = "", scenario: str = "",
             w1: float = 1.0, w2: float = 1.0) -> EvaluationReport:
    gd = gain_decay(slates)
    ut = utility(slates, learners, content)
    cats = coverage_categories(slates, learners, content)
    usage = Counter(c for s in slates for c in s.selected)
    slack = Counter(k for s in slates for k, v in enumerate(s.slack) if v > 0)
    return EvaluationReport(
        solver=solver, scenario=scenario, n_learners=len(learners),
        satisfactory_rate=satisfactory_rate(slates, learners, content),
        gain_decay=gd.mean, gain_decay_sd=gd.sd, utility_mean=ut.mean, utility_sd=ut.sd,
        total_penalty=total_penalty(slates, learners, content, w1, w2),
        fully_covered=cats.fully_covered, over_covered=cats.over_covered,
        unsatisfied=cats.unsatisfied, non_used=cats.non_used,
        unique_content_assigned=len(usage),
        per_content_usage={it.id: usage.get(it.id, 0) for it in content},
        slack_summary=dict(sorted(slack.items())),
    )
