"""Shared domain vocabulary and the objective evaluators.

Everything here is immutable once built.  Solvers keep their own
incremental state; the evaluators below recompute from scratch.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes disagree; ``axis`` names the offending axis."""

    def __init__(self, axis: str, expected: int, got: int):
        self.axis = axis
        self.expected = expected
        self.got = got
        super().__init__(f"dimension mismatch on axis '{axis}': expected {expected}, got {got}")


class Level(IntEnum):
    BASIC = 0
    MEDIUM = 1
    HARD = 2

    @classmethod
    def parse(cls, token: str | int | "Level") -> "Level":
        if isinstance(token, Level):
            return token
        if isinstance(token, (int, np.integer)):
            return cls(int(token))
        try:
            return cls[str(token).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown difficulty level {token!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


def level_distance(a: Level | int, b: Level | int) -> int:
    return abs(int(a) - int(b))


@dataclass(frozen=True)
class QMatrix:
    """Binary item-by-skill requirement matrix.

    All-zero rows are legal; they are reported by :attr:`untagged`.
    """

    entries: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.entries, dtype=np.int8)
        if q.ndim != 2 or q.shape[0] == 0 or q.shape[1] == 0:
            raise ValueError(f"Q-matrix must be a non-empty 2-D array, got shape {q.shape}")
        if not np.isin(q, (0, 1)).all():
            raise ValueError("Q-matrix entries must be 0 or 1")
        q.setflags(write=False)
        object.__setattr__(self, "entries", q)

    @property
    def n_items(self) -> int:
        return self.entries.shape[0]

    @property
    def n_skills(self) -> int:
        return self.entries.shape[1]

    @property
    def untagged(self) -> np.ndarray:
        return self.entries.sum(axis=1) == 0


@dataclass(frozen=True)
class ContentItem:
    id: str
    coverage: tuple[int, ...]
    duration_minutes: float
    difficulty_level: Level
    difficulty_index: float | None = None
    representation_tags: tuple[int, ...] = ()

    def __post_init__(self):
        cov = tuple(int(c) for c in self.coverage)
        if any(c not in (0, 1) for c in cov):
            raise ValueError(f"content {self.id}: coverage must be binary")
        if sum(cov) == 0:
            raise ValueError(f"content {self.id}: coverage has no skill")
        if not self.duration_minutes > 0:
            raise ValueError(f"content {self.id}: duration must be positive")
        level = Level.parse(self.difficulty_level)
        object.__setattr__(self, "coverage", cov)
        object.__setattr__(self, "difficulty_level", level)
        object.__setattr__(self, "duration_minutes", float(self.duration_minutes))
        if self.difficulty_index is None:
            object.__setattr__(self, "difficulty_index", float(int(level)))
        object.__setattr__(self, "representation_tags", tuple(int(t) for t in self.representation_tags))

    @property
    def skills(self) -> frozenset[int]:
        return frozenset(k for k, c in enumerate(self.coverage) if c)

    @property
    def forms(self) -> frozenset[int]:
        return frozenset(r for r, m in enumerate(self.representation_tags) if m)


@dataclass(frozen=True)
class LearnerState:
    id: str
    theta: float
    mastery: tuple[int, ...]
    time_budget_minutes: float
    slate_cap: int
    difficulty_window: tuple[Level, Level]
    preferred_level: Level

    def __post_init__(self):
        mastery = tuple(int(s) for s in self.mastery)
        if any(s not in (0, 1) for s in mastery):
            raise ValueError(f"learner {self.id}: mastery must be binary")
        lo, hi = (Level.parse(v) for v in self.difficulty_window)
        pref = Level.parse(self.preferred_level)
        if not lo <= pref <= hi:
            raise ValueError(f"learner {self.id}: preferred level {pref.label} outside window "
                             f"[{lo.label}, {hi.label}]")
        if not self.time_budget_minutes > 0:
            raise ValueError(f"learner {self.id}: time budget must be positive")
        if int(self.slate_cap) < 1:
            raise ValueError(f"learner {self.id}: slate cap must be >= 1")
        object.__setattr__(self, "mastery", mastery)
        object.__setattr__(self, "difficulty_window", (lo, hi))
        object.__setattr__(self, "preferred_level", pref)
        object.__setattr__(self, "slate_cap", int(self.slate_cap))
        object.__setattr__(self, "time_budget_minutes", float(self.time_budget_minutes))

    @property
    def gaps(self) -> tuple[int, ...]:
        return tuple(1 - s for s in self.mastery)

    @property
    def gap_skills(self) -> frozenset[int]:
        return frozenset(k for k, s in enumerate(self.mastery) if s == 0)

    @property
    def n_skills(self) -> int:
        return len(self.mastery)

    def window_contains(self, level: Level | int, widen: int = 0) -> bool:
        lo, hi = self.difficulty_window
        return int(lo) - widen <= int(level) <= int(hi) + widen


@dataclass(frozen=True)
class PrereqGraph:
    """Skill precedence edges ``(k, k2)`` meaning ``k`` precedes ``k2``."""

    edges: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        edges = frozenset((int(a), int(b)) for a, b in self.edges)
        if any(a == b for a, b in edges):
            raise ValueError("prerequisite graph has a self-loop")
        sorter = graphlib.TopologicalSorter()
        for a, b in edges:
            sorter.add(b, a)
        try:
            order = tuple(sorter.static_order())
        except graphlib.CycleError as exc:
            raise ValueError(f"prerequisite graph has a cycle: {exc.args[1]}") from None
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_order", order)

    @property
    def topological_order(self) -> tuple[int, ...]:
        return self._order

    def __iter__(self):
        return iter(sorted(self.edges))

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class TraceRecord:
    """One audit line: what was picked (or dropped) and why."""

    content_id: str | None
    new_skills: tuple[int, ...] = ()
    score: float | None = None
    tier: int | None = None
    event: str = "pick"
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "content_id": self.content_id,
            "new_skills": list(self.new_skills),
            "score": self.score,
            "tier": self.tier,
            "event": self.event,
            "note": self.note,
        }


@dataclass(frozen=True)
class AssignmentSlate:
    learner_id: str
    selected: tuple[str, ...]
    slack: tuple[float, ...]
    total_minutes: float
    trace: tuple[TraceRecord, ...] = ()
    infeasible: bool = False
    solver: str = ""
    relaxed: dict[str, float] | None = field(default=None, compare=False)

    @property
    def slack_mass(self) -> float:
        return float(sum(self.slack))

    @property
    def picks(self) -> tuple[TraceRecord, ...]:
        return tuple(r for r in self.trace if r.event == "pick")

    def to_dict(self) -> dict:
        out = {
            "learner_id": self.learner_id,
            "solver": self.solver,
            "selected": list(self.selected),
            "slack": list(self.slack),
            "total_minutes": round(self.total_minutes, 10),
            "infeasible": self.infeasible,
            "trace": [r.to_dict() for r in self.trace],
        }
        if self.relaxed is not None:
            out["relaxed"] = {k: round(v, 12) for k, v in self.relaxed.items()}
        return out


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float = 1.0
    beta: float = 0.05
    epsilon: float = 0.05
    omega: float = 0.25
    gamma_overlap: float = 0.5
    gamma_slack: float = 100.0

    def __post_init__(self):
        for name in ("alpha", "beta", "omega", "gamma_overlap", "gamma_slack"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def check_dominance(self, n_skills: int) -> None:
        """Slack must outweigh any achievable coverage reward."""
        if not self.gamma_slack > self.alpha * n_skills:
            raise ValueError(f"gamma_slack={self.gamma_slack} must exceed alpha*K="
                             f"{self.alpha * n_skills}")


def compute_slack(learner: LearnerState, items: Iterable[ContentItem]) -> tuple[float, ...]:
    covered: set[int] = set()
    for item in items:
        covered |= item.skills
    return tuple(1.0 if (u and k not in covered) else 0.0 for k, u in enumerate(learner.gaps))


def coverage_matrix(items: Sequence[ContentItem]) -> np.ndarray:
    if not items:
        return np.zeros((0, 0), dtype=float)
    return np.array([it.coverage for it in items], dtype=float)


def _check(name: str, expected: int, got: int) -> None:
    if expected != got:
        raise DimensionError(name, expected, got)


def _as2d(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D")
    return arr


def coverage_reward(gaps, coverage, assignment) -> float:
    """Sum over learners, contents and skills of gap * coverage * assignment."""
    U = _as2d(gaps, "gaps")
    C = _as2d(coverage, "coverage")
    X = _as2d(assignment, "assignment")
    _check("skills", U.shape[1], C.shape[1])
    _check("learners", U.shape[0], X.shape[0])
    _check("contents", C.shape[0], X.shape[1])
    return float(np.einsum("ik,jk,ij->", U, C, X))


def burden_cost(assignment, durations, epsilon: float) -> float:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    X = _as2d(assignment, "assignment")
    L = np.asarray(durations, dtype=float)
    _check("contents", L.shape[0], X.shape[1])
    return float(X.sum() + epsilon * (X @ L).sum())


def capped_coverage(gaps, coverage, assignment) -> float:
    U = _as2d(gaps, "gaps")
    C = _as2d(coverage, "coverage")
    X = _as2d(assignment, "assignment")
    _check("skills", U.shape[1], C.shape[1])
    _check("learners", U.shape[0], X.shape[0])
    _check("contents", C.shape[0], X.shape[1])
    return float((U * np.minimum(1.0, X @ C)).sum())


def slate_objective(learner: LearnerState, items: Sequence[ContentItem],
                    weights: ObjectiveWeights) -> float:
    """Slack-penalized scalar objective of one learner's slate.

    alpha * capped coverage - beta * burden - gamma_slack * slack mass.
    """
    U = np.asarray(learner.gaps, dtype=float)[None, :]
    if items:
        C = coverage_matrix(items)
        x = np.ones((1, len(items)))
        cov = capped_coverage(U, C, x)
        burden = burden_cost(x, [it.duration_minutes for it in items], weights.epsilon)
    else:
        cov = burden = 0.0
    slack = sum(compute_slack(learner, items))
    return weights.alpha * cov - weights.beta * burden - weights.gamma_slack * slack
