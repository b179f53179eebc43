"""Exhaustive solver for tiny instances; ground truth for the solver tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (AssignmentSlate, ContentItem, LearnerState, ObjectiveWeights, PrereqGraph,
                   TraceRecord, compute_slack)
from .feasibility import AdmissiblePool, SimilarityPolicy

HARD_CAP = 24
_CHUNK = 1 << 16


@dataclass(frozen=True)
class OracleLimits:
    max_content: int = 20
    max_learners: int = 64

    def __post_init__(self):
        if not 0 <= self.max_content <= HARD_CAP:
            raise ValueError(f"max_content must lie in [0, {HARD_CAP}]")
        if self.max_learners < 1:
            raise ValueError("max_learners must be >= 1")


class PoolTooLarge(ValueError):
    pass


def _masks(m: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(np.int8)


def solve_exact(learner: LearnerState, pool: AdmissiblePool | None, content: Sequence[ContentItem],
                prereqs: PrereqGraph | None = None, weights: ObjectiveWeights | None = None,
                limits: OracleLimits | None = None, sim: SimilarityPolicy | None = None,
                delta: int = 1, widen: int = 0) -> tuple[AssignmentSlate, float]:
    """Best feasible slate by full enumeration.

    Feasible means: time and cardinality budgets, the difficulty window
    (widened by the pool's ``window_widen``, or ``widen`` without a pool),
    prerequisites, no near-duplicate pair, and at least ``delta`` forms
    when ``delta > 1``.  The objective is
    alpha * capped coverage - beta * (sum x + eps * sum L x) - gamma_slack * slack.
    Ties go to the lexicographically smallest tuple of repository positions.
    """
    weights = weights or ObjectiveWeights()
    limits = limits or OracleLimits()
    sim = sim or SimilarityPolicy()
    content = list(content)
    pos = {it.id: j for j, it in enumerate(content)}
    if pool is not None:
        ids = sorted(pool.admissible_ids, key=pos.__getitem__)
        widen = pool.window_widen
    else:
        ids = [it.id for it in content]
    items = [content[pos[c]] for c in ids if learner.window_contains(content[pos[c]].difficulty_level, widen)]
    m = len(items)
    if m > limits.max_content:
        raise PoolTooLarge(f"{m} candidates exceed the oracle limit of {limits.max_content}")

    K = learner.n_skills
    C = np.array([it.coverage for it in items], dtype=float).reshape(m, K)
    L = np.array([it.duration_minutes for it in items], dtype=float)
    U = np.asarray(learner.gaps, dtype=float)
    S = np.asarray(learner.mastery, dtype=float)
    edges = sorted(prereqs.edges) if prereqs else []
    local = {it.id: j for j, it in enumerate(items)}
    pairs = [(local[a], local[b]) for a, b in sim.pairs(items)]
    n_forms = max((len(it.representation_tags) for it in items), default=0)
    F = np.array([it.representation_tags if it.representation_tags else (0,) * n_forms
                  for it in items], dtype=float).reshape(m, n_forms)

    best_z, best_codes = -np.inf, []
    for start in range(0, 1 << m, _CHUNK):
        X = _masks(m, start, min(1 << m, start + _CHUNK))
        Xf = X.astype(float)
        ok = (Xf @ L <= learner.time_budget_minutes + 1e-9) & (X.sum(axis=1) <= learner.slate_cap)
        z = Xf @ C
        for k, k2 in edges:
            ok &= z[:, k2] <= S[k] + z[:, k]
        for a, b in pairs:
            ok &= ~((X[:, a] == 1) & (X[:, b] == 1))
        if delta > 1:
            ok &= ((Xf @ F) > 0).sum(axis=1) >= delta
        if not ok.any():
            continue
        capped = np.minimum(1.0, z) @ U
        slack = (U * (z == 0)).sum(axis=1)
        burden = X.sum(axis=1) + weights.epsilon * (Xf @ L)
        obj = weights.alpha * capped - weights.beta * burden - weights.gamma_slack * slack
        obj = np.where(ok, obj, -np.inf)
        top = obj.max()
        if top > best_z + 1e-12:
            best_z = top
            best_codes = []
        if top >= best_z - 1e-12:
            best_codes += (np.flatnonzero(obj >= best_z - 1e-12) + start).tolist()
            best_z = max(best_z, top)

    if not best_codes:
        # no feasible subset at all; cannot happen since the empty slate always fits
        raise RuntimeError("no feasible subset")
    winner = min((tuple(j for j in range(m) if code >> j & 1) for code in best_codes),
                 key=lambda t: tuple(pos[items[j].id] for j in t))
    chosen = [items[j] for j in winner]
    slack = compute_slack(learner, chosen)
    trace = tuple(TraceRecord(it.id, tuple(sorted(it.skills & learner.gap_skills)), None, None,
                              note="exact") for it in chosen)
    slate = AssignmentSlate(learner_id=learner.id, selected=tuple(it.id for it in chosen), slack=slack,
                            total_minutes=float(sum(it.duration_minutes for it in chosen)),
                            trace=trace, solver="oracle")
    return slate, float(best_z)
