"""Per-learner admissible pools, constraint predicates and richness."""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ContentItem, Level, LearnerState, PrereqGraph

log = logging.getLogger(__name__)

REASONS = ("difficulty_window", "prerequisite", "duplicate", "overlong")


@dataclass(frozen=True)
class SimilarityPolicy:
    """Jaccard similarity over coverage vectors; pairs at or above ``threshold`` are near-duplicates."""

    threshold: float = 1.0

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ValueError("similarity threshold must lie in (0, 1]")

    @staticmethod
    def similarity(a: ContentItem, b: ContentItem) -> float:
        sa, sb = a.skills, b.skills
        union = sa | sb
        return len(sa & sb) / len(union) if union else 1.0

    def pairs(self, items: Sequence[ContentItem]) -> set[tuple[str, str]]:
        out = set()
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                if self.similarity(items[i], items[j]) >= self.threshold:
                    out.add((items[i].id, items[j].id))
        return out


@dataclass(frozen=True)
class AdmissiblePool:
    learner_id: str
    admissible_ids: tuple[str, ...]
    nonredundant_ids: tuple[str, ...]
    excluded: tuple[tuple[str, str], ...] = ()
    window_widen: int = 0


@dataclass(frozen=True)
class RichnessScore:
    breadth: float
    median_count: float
    representation_entropy: float
    difficulty_spread: float
    weights: tuple[float, float, float, float]
    composite: float
    flags: tuple[str, ...] = ()


def _index(pool: Sequence[ContentItem]) -> dict[str, ContentItem]:
    return {it.id: it for it in pool}


def build_pool(learner: LearnerState, pool: Sequence[ContentItem], prereqs: PrereqGraph | None = None,
               sim: SimilarityPolicy | None = None, window_widen: int = 0) -> AdmissiblePool:
    """Filter ``pool`` down to what ``learner`` may be assigned.

    ``window_widen`` widens the difficulty window on both sides; solvers
    with difficulty fallback pass the number of fallback levels they use.
    The first failing filter is the recorded reason.
    """
    prereqs = prereqs or PrereqGraph()
    sim = sim or SimilarityPolicy()
    mastered = set(range(learner.n_skills)) - learner.gap_skills
    pool_skills: set[int] = set()
    for it in pool:
        pool_skills |= it.skills
    # a skill k2 is blocked if one of its prerequisites is unmastered and nothing covers it
    blocked = {k2 for k, k2 in prereqs.edges if k not in mastered and k not in pool_skills}

    admissible: list[ContentItem] = []
    excluded: list[tuple[str, str]] = []
    for it in pool:
        if not learner.window_contains(it.difficulty_level, window_widen):
            excluded.append((it.id, "difficulty_window"))
        elif it.duration_minutes > learner.time_budget_minutes:
            excluded.append((it.id, "overlong"))
        elif it.skills & blocked:
            excluded.append((it.id, "prerequisite"))
        else:
            admissible.append(it)

    # connected components of the near-duplicate graph; keep the shortest
    parent = {it.id: it.id for it in admissible}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in sim.pairs(admissible):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    order = {it.id: n for n, it in enumerate(pool)}
    survivors: dict[str, ContentItem] = {}
    for it in admissible:
        root = find(it.id)
        cur = survivors.get(root)
        if cur is None or (it.duration_minutes, order[it.id]) < (cur.duration_minutes, order[cur.id]):
            survivors[root] = it
    keep = {it.id for it in survivors.values()}
    for it in admissible:
        if it.id not in keep:
            excluded.append((it.id, "duplicate"))
    return AdmissiblePool(
        learner_id=learner.id,
        admissible_ids=tuple(it.id for it in admissible),
        nonredundant_ids=tuple(it.id for it in admissible if it.id in keep),
        excluded=tuple(excluded),
        window_widen=window_widen,
    )


def prerequisite_ok(slate: Iterable[str], learner: LearnerState, prereqs: PrereqGraph | None,
                    pool: Sequence[ContentItem] | Mapping[str, ContentItem]) -> bool:
    """Check sum_j C[j,k2] x_j <= S[k] + sum_j C[j,k] x_j for every edge k -> k2."""
    if not prereqs:
        return True
    index = pool if isinstance(pool, Mapping) else _index(pool)
    counts = np.zeros(learner.n_skills)
    for cid in slate:
        counts += index[cid].coverage
    return all(counts[k2] <= learner.mastery[k] + counts[k] for k, k2 in prereqs.edges)


def diversity_ok(slate: Iterable[str], delta: int,
                 pool: Sequence[ContentItem] | Mapping[str, ContentItem]) -> bool:
    """At least ``delta`` distinct representation forms across the slate.

    With ``delta == 1`` untagged content passes vacuously.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    index = pool if isinstance(pool, Mapping) else _index(pool)
    items = [index[c] for c in slate]
    n_forms = max((len(it.representation_tags) for it in index.values()), default=0)
    if delta > 1 and delta > n_forms:
        log.warning("diversity target %d exceeds the %d available forms", delta, n_forms)
        return False
    forms: set[int] = set()
    for it in items:
        forms |= it.forms
    if delta == 1 and items and not forms:
        return True
    return len(forms) >= delta


def window_ok(slate: Iterable[str], learner: LearnerState,
              pool: Sequence[ContentItem] | Mapping[str, ContentItem], widen: int = 0) -> bool:
    index = pool if isinstance(pool, Mapping) else _index(pool)
    return all(learner.window_contains(index[c].difficulty_level, widen) for c in slate)


def budget_ok(slate: Sequence[str], learner: LearnerState,
              pool: Sequence[ContentItem] | Mapping[str, ContentItem], tol: float = 1e-9) -> bool:
    index = pool if isinstance(pool, Mapping) else _index(pool)
    minutes = sum(index[c].duration_minutes for c in slate)
    return len(slate) <= learner.slate_cap and minutes <= learner.time_budget_minutes + tol


def richness(learner: LearnerState, pool: AdmissiblePool, content: Sequence[ContentItem],
             weights: Sequence[float] = (0.25, 0.25, 0.25, 0.25)) -> RichnessScore:
    w = tuple(float(v) for v in weights)
    if len(w) != 4 or min(w) < 0 or not math.isclose(sum(w), 1.0, abs_tol=1e-9):
        raise ValueError("richness weights must be 4 nonnegative numbers summing to 1")
    gaps = sorted(learner.gap_skills)
    if not gaps:
        return RichnessScore(1.0, 1.0, 1.0, 1.0, w, 1.0, flags=("no_gaps",))
    index = _index(content)
    admissible = [index[c] for c in pool.admissible_ids]
    nonred = [index[c] for c in pool.nonredundant_ids]

    breadth = sum(any(k in it.skills for it in admissible) for k in gaps) / len(gaps)
    med = statistics.median(sum(k in it.skills for it in nonred) for k in gaps)
    median_count = med / (1.0 + med)

    n_forms = max((len(it.representation_tags) for it in content), default=0)
    counts = np.zeros(n_forms)
    for it in nonred:
        if it.representation_tags:
            counts += it.representation_tags
    if n_forms > 1 and counts.sum() > 0:
        p = counts[counts > 0] / counts.sum()
        entropy = float(-(p * np.log(p)).sum() / math.log(n_forms))
    else:
        entropy = 0.0

    lo, hi = learner.difficulty_window
    lo, hi = max(0, int(lo) - pool.window_widen), min(2, int(hi) + pool.window_widen)
    half = (hi - lo) / 2.0
    d = [it.difficulty_index for it in nonred]
    spread = min(1.0, float(np.std(d)) / half) if half > 0 and len(d) > 1 else 0.0

    comp = w[0] * breadth + w[1] * median_count + w[2] * entropy + w[3] * spread
    return RichnessScore(breadth, median_count, entropy, spread, w, comp)


def infeasibility_certificate(learners: Sequence[LearnerState],
                              pools: Mapping[str, AdmissiblePool] | Sequence[ContentItem],
                              content: Sequence[ContentItem] | None = None) -> list[tuple[str, int]]:
    """(learner id, skill) pairs whose gap no admissible content covers.

    ``pools`` is either a per-learner mapping of admissible pools (then
    ``content`` resolves ids) or one shared content list.
    """
    out = []
    if isinstance(pools, Mapping):
        index = _index(content or ())
    for learner in learners:
        if isinstance(pools, Mapping):
            items = [index[c] for c in pools[learner.id].admissible_ids]
        else:
            items = list(pools)
        covered: set[int] = set()
        for it in items:
            covered |= it.skills
        out.extend((learner.id, k) for k in sorted(learner.gap_skills) if k not in covered)
    return out


@dataclass(frozen=True)
class WindowPolicy:
    """Maps ability to a preferred level and readiness window."""

    low_cut: float = -0.5
    high_cut: float = 0.5
    radius: int = 0

    def preferred(self, theta: float) -> Level:
        if theta < self.low_cut:
            return Level.BASIC
        if theta > self.high_cut:
            return Level.HARD
        return Level.MEDIUM

    def window(self, theta: float) -> tuple[Level, Level]:
        p = int(self.preferred(theta))
        return Level(max(0, p - self.radius)), Level(min(2, p + self.radius))
