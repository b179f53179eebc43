"""Projected-gradient relaxation of the assignment problem, with rounding and repair.

The relaxed problem for one learner is

    min_x  -alpha * sum_k U_k sigma(z_k) + beta * sum_j cost_j x_j
           + lam_time [L.x - T]_+^2 + lam_card [sum x - B]_+^2
           + lam_diff sum_j phi(d_j) x_j
           + lam_pre sum_{k->k2} [z_k2 - S_k - z_k]_+^2
           + lam_div sum_{(j,l) near-duplicate} x_j x_l

over the box [0, 1]^M, where z = C^T x, sigma(z) = 1 - exp(-tau z) and
cost_j = 1 + eps L_j + omega dist(D_j, P).  Learners are independent, so
the solver runs a whole cohort as one batch with a per-learner step size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import (AssignmentSlate, ContentItem, LearnerState, ObjectiveWeights, PrereqGraph,
                   TraceRecord, compute_slack, level_distance)
from .feasibility import AdmissiblePool, SimilarityPolicy, prerequisite_ok


class LossError(FloatingPointError):
    def __init__(self, terms: dict[str, float]):
        self.terms = terms
        super().__init__("non-finite loss; term breakdown: "
                         + ", ".join(f"{k}={v!r}" for k, v in terms.items()))


@dataclass(frozen=True)
class GradientConfig:
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    tau_cov: float = 3.0
    lambda_time: float = 10.0
    lambda_card: float = 10.0
    lambda_diff: float = 1.0
    lambda_pre: float = 10.0
    lambda_div: float = 1.0
    eta_step: float = 0.01
    grad_tol: float = 1e-5
    max_iters: int = 5000
    round_threshold: float = 0.5
    coverage_form: str = "smooth"
    fallback_levels: int = 2
    similarity: SimilarityPolicy = field(default_factory=SimilarityPolicy)
    dedupe: bool = True

    def __post_init__(self):
        lams = (self.lambda_time, self.lambda_card, self.lambda_diff, self.lambda_pre, self.lambda_div)
        if min(lams) < 0:
            raise ValueError("penalty weights must be nonnegative")
        if not 0 < self.round_threshold < 1:
            raise ValueError("round_threshold must lie in (0, 1)")
        if not self.eta_step > 0 or not self.tau_cov > 0:
            raise ValueError("eta_step and tau_cov must be positive")
        if self.coverage_form not in ("smooth", "hinge"):
            raise ValueError("coverage_form must be 'smooth' or 'hinge'")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class Problem:
    """Batched problem data; row ``i`` is learner ``i``, column ``j`` content ``j``."""

    content: list[ContentItem]
    C: np.ndarray          # (m, K)
    L: np.ndarray          # (m,)
    mask: np.ndarray       # (n, m) bool, content admissible for the learner
    U: np.ndarray          # (n, K)
    S: np.ndarray          # (n, K)
    T: np.ndarray          # (n,)
    B: np.ndarray          # (n,)
    cost: np.ndarray       # (n, m)
    phi: np.ndarray        # (n, m)
    edges: np.ndarray      # (E, 2)
    pairs: np.ndarray      # (P, 2)

    @property
    def n(self) -> int:
        return self.mask.shape[0]

    @cached_property
    def edge_incidence(self) -> np.ndarray:
        """(E, K): +1 at the dependent skill, -1 at the prerequisite."""
        E = np.zeros((len(self.edges), self.C.shape[1]))
        E[np.arange(len(self.edges)), self.edges[:, 1]] += 1.0
        E[np.arange(len(self.edges)), self.edges[:, 0]] -= 1.0
        return E

    @cached_property
    def pair_adjacency(self) -> np.ndarray:
        """(m, m) symmetric count of near-duplicate pairs."""
        A = np.zeros((len(self.L), len(self.L)))
        np.add.at(A, (self.pairs[:, 0], self.pairs[:, 1]), 1.0)
        return A + A.T


def candidate_ids(pool: AdmissiblePool, config: GradientConfig) -> tuple[str, ...]:
    """Nonredundant pool by default; with ``dedupe=False`` near-duplicates stay and are priced by lambda_div."""
    return pool.nonredundant_ids if config.dedupe else pool.admissible_ids


def build_problem(learners: Sequence[LearnerState], pools: Sequence[AdmissiblePool],
                  content: Sequence[ContentItem], prereqs: PrereqGraph | None,
                  config: GradientConfig) -> Problem:
    content = list(content)
    w = config.weights
    pos = {it.id: j for j, it in enumerate(content)}
    m = len(content)
    K = learners[0].n_skills if learners else (len(content[0].coverage) if content else 0)
    C = np.array([it.coverage for it in content], dtype=float).reshape(m, K)
    L = np.array([it.duration_minutes for it in content], dtype=float)
    d = np.array([it.difficulty_index for it in content], dtype=float)
    n = len(learners)
    mask = np.zeros((n, m), dtype=bool)
    cost = np.zeros((n, m))
    phi = np.zeros((n, m))
    for i, (lr, pool) in enumerate(zip(learners, pools)):
        for cid in candidate_ids(pool, config):
            mask[i, pos[cid]] = True
        dist = np.array([level_distance(it.difficulty_level, lr.preferred_level) for it in content])
        cost[i] = 1.0 + w.epsilon * L + w.omega * dist
        lo = int(lr.difficulty_window[0]) - config.fallback_levels
        hi = int(lr.difficulty_window[1]) + config.fallback_levels
        phi[i] = np.maximum(0.0, d - hi) ** 2 + np.maximum(0.0, lo - d) ** 2
    edges = np.array(sorted(prereqs.edges) if prereqs else [], dtype=int).reshape(-1, 2)
    pairs = np.array(sorted((pos[a], pos[b]) for a, b in config.similarity.pairs(content)),
                     dtype=int).reshape(-1, 2)
    return Problem(
        content=content, C=C, L=L, mask=mask,
        U=np.array([lr.gaps for lr in learners], dtype=float).reshape(n, K),
        S=np.array([lr.mastery for lr in learners], dtype=float).reshape(n, K),
        T=np.array([lr.time_budget_minutes for lr in learners], dtype=float),
        B=np.array([lr.slate_cap for lr in learners], dtype=float),
        cost=cost, phi=phi, edges=edges, pairs=pairs,
    )


def loss_terms(x: np.ndarray, prob: Problem, config: GradientConfig) -> dict[str, np.ndarray]:
    w = config.weights
    z = x @ prob.C
    if config.coverage_form == "smooth":
        coverage = -w.alpha * (prob.U * (1.0 - np.exp(-config.tau_cov * z))).sum(axis=1)
    else:
        coverage = w.alpha * (np.maximum(0.0, prob.U - z) ** 2).sum(axis=1)
    terms = {
        "coverage": coverage,
        "burden": w.beta * (prob.cost * x).sum(axis=1),
        "time": config.lambda_time * np.maximum(0.0, x @ prob.L - prob.T) ** 2,
        "card": config.lambda_card * np.maximum(0.0, x.sum(axis=1) - prob.B) ** 2,
        "diff": config.lambda_diff * (prob.phi * x).sum(axis=1),
    }
    if len(prob.edges):
        k, k2 = prob.edges[:, 0], prob.edges[:, 1]
        v = z[:, k2] - prob.S[:, k] - z[:, k]
        terms["pre"] = config.lambda_pre * (np.maximum(0.0, v) ** 2).sum(axis=1)
    else:
        terms["pre"] = np.zeros(prob.n)
    if len(prob.pairs):
        terms["div"] = config.lambda_div * (x[:, prob.pairs[:, 0]] * x[:, prob.pairs[:, 1]]).sum(axis=1)
    else:
        terms["div"] = np.zeros(prob.n)
    return terms


def batch_loss(x: np.ndarray, prob: Problem, config: GradientConfig) -> np.ndarray:
    terms = loss_terms(x, prob, config)
    total = sum(terms.values())
    if not np.all(np.isfinite(total)):
        bad = int(np.flatnonzero(~np.isfinite(total))[0])
        raise LossError({k: float(v[bad]) for k, v in terms.items()})
    return total


def batch_gradient(x: np.ndarray, prob: Problem, config: GradientConfig) -> np.ndarray:
    w = config.weights
    z = x @ prob.C
    if config.coverage_form == "smooth":
        gz = -w.alpha * config.tau_cov * prob.U * np.exp(-config.tau_cov * z)
    else:
        gz = -2.0 * w.alpha * np.maximum(0.0, prob.U - z)
    if len(prob.edges):
        k, k2 = prob.edges[:, 0], prob.edges[:, 1]
        r = 2.0 * config.lambda_pre * np.maximum(0.0, z[:, k2] - prob.S[:, k] - z[:, k])
        gz = gz + r @ prob.edge_incidence
    g = gz @ prob.C.T
    g += w.beta * prob.cost
    g += (2.0 * config.lambda_time * np.maximum(0.0, x @ prob.L - prob.T))[:, None] * prob.L[None, :]
    g += (2.0 * config.lambda_card * np.maximum(0.0, x.sum(axis=1) - prob.B))[:, None]
    g += config.lambda_diff * prob.phi
    if len(prob.pairs):
        g += config.lambda_div * (x @ prob.pair_adjacency)
    return g * prob.mask


def _check_box(x: np.ndarray) -> None:
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError("relaxed assignment must lie in [0, 1]^M")


@dataclass
class BatchResult:
    x: np.ndarray
    iterations: np.ndarray
    stop_reasons: list[str]
    loss_history: list[list[float]] | None = None
    grad_history: list[list[float]] | None = None


def optimize_batch(prob: Problem, config: GradientConfig, x0: np.ndarray | None = None,
                   record: bool = False) -> BatchResult:
    """Projected gradient descent with per-learner step halving on any loss increase.

    Stops a learner when the projected-gradient step ``x - P(x - g)`` has
    sup-norm below ``grad_tol``, or at ``max_iters``.
    """
    n, m = prob.mask.shape
    x = np.zeros((n, m)) if x0 is None else np.where(prob.mask, np.clip(x0, 0.0, 1.0), 0.0)
    f = batch_loss(x, prob, config)
    eta = np.full(n, config.eta_step)
    iters = np.zeros(n, dtype=int)
    reasons = [""] * n
    active = np.ones(n, dtype=bool)
    history = [[float(v)] for v in f] if record else None
    ghistory = [[] for _ in range(n)] if record else None
    # rows are independent, so the whole batch is evaluated and finished rows are frozen
    for _ in range(config.max_iters):
        if not active.any():
            break
        g = batch_gradient(x, prob, config)
        pg = np.abs(x - np.clip(x - g, 0.0, 1.0)).max(axis=1) if m else np.zeros(n)
        if record:
            for i in np.flatnonzero(active):
                ghistory[i].append(float(pg[i]))
        conv = active & (pg < config.grad_tol)
        for i in np.flatnonzero(conv):
            reasons[i] = "grad_tol"
        active &= ~conv
        if not active.any():
            break
        trial = np.clip(x - eta[:, None] * g, 0.0, 1.0) * prob.mask
        ft = batch_loss(trial, prob, config)
        ok = active & (ft <= f)
        bad = active & ~(ft <= f)
        x[ok] = trial[ok]
        f[ok] = ft[ok]
        eta[bad] *= 0.5
        iters[active] += 1
        if record:
            for i in np.flatnonzero(active):
                history[i].append(float(f[i]))
        tiny = active & (eta < 1e-14)
        for i in np.flatnonzero(tiny):
            reasons[i] = "step_underflow"
        active &= ~tiny
    for i in np.flatnonzero(active):
        reasons[i] = "max_iters"
    return BatchResult(x=x, iterations=iters, stop_reasons=reasons, loss_history=history,
                       grad_history=ghistory)


def _single(learner, pool, content, prereqs, config):
    if pool is None:
        pool = AdmissiblePool(learner.id, tuple(it.id for it in content), tuple(it.id for it in content))
    return build_problem([learner], [pool], content, prereqs, config)


def loss(x, learner: LearnerState, content: Sequence[ContentItem], prereqs: PrereqGraph | None = None,
         config: GradientConfig | None = None, pool: AdmissiblePool | None = None) -> float:
    config = config or GradientConfig()
    x = np.asarray(x, dtype=float)
    _check_box(x)
    prob = _single(learner, pool, content, prereqs, config)
    return float(batch_loss(x[None, :] * prob.mask, prob, config)[0])


def gradient(x, learner: LearnerState, content: Sequence[ContentItem], prereqs: PrereqGraph | None = None,
             config: GradientConfig | None = None, pool: AdmissiblePool | None = None) -> np.ndarray:
    config = config or GradientConfig()
    x = np.asarray(x, dtype=float)
    _check_box(x)
    prob = _single(learner, pool, content, prereqs, config)
    return batch_gradient(x[None, :] * prob.mask, prob, config)[0]


@dataclass
class Relaxed:
    x: np.ndarray
    iterations: int
    stop_reason: str
    loss_history: list[float] | None = None
    grad_history: list[float] | None = None


def optimize(learner: LearnerState, pool: AdmissiblePool, content: Sequence[ContentItem],
             prereqs: PrereqGraph | None = None, config: GradientConfig | None = None,
             x0=None, record: bool = True) -> Relaxed:
    config = config or GradientConfig()
    prob = build_problem([learner], [pool], content, prereqs, config)
    res = optimize_batch(prob, config, None if x0 is None else np.asarray(x0, float)[None, :], record)
    return Relaxed(res.x[0], int(res.iterations[0]), res.stop_reasons[0],
                   res.loss_history[0] if record else None, res.grad_history[0] if record else None)


def round_and_repair(x_star, learner: LearnerState, content: Sequence[ContentItem],
                     prereqs: PrereqGraph | None = None, config: GradientConfig | None = None,
                     pool: AdmissiblePool | None = None) -> AssignmentSlate:
    """Threshold the relaxed vector, then drop items until every hard constraint holds."""
    config = config or GradientConfig()
    x_star = np.asarray(x_star, dtype=float)
    _check_box(x_star)
    content = list(content)
    index = {it.id: it for it in content}
    pos = {it.id: j for j, it in enumerate(content)}
    allowed = set(candidate_ids(pool, config)) if pool is not None else set(index)
    value = {it.id: float(x_star[j]) for j, it in enumerate(content)}
    selected = [it.id for it in content
                if x_star[pos[it.id]] >= config.round_threshold and it.id in allowed]
    trace: list[TraceRecord] = []

    def drop(cid: str, why: str):
        selected.remove(cid)
        trace.append(TraceRecord(cid, (), value[cid], None, event="drop", note=why))

    def weakest(ids):
        # smallest relaxed value, then longest, then highest position
        return min(ids, key=lambda c: (value[c], -index[c].duration_minutes, -pos[c]))

    widen = config.fallback_levels
    for cid in list(selected):
        if not learner.window_contains(index[cid].difficulty_level, widen):
            drop(cid, "difficulty_window")
    for a, b in sorted(config.similarity.pairs([index[c] for c in selected])):
        if a in selected and b in selected:
            drop(weakest([a, b]), "duplicate")
    while selected and (len(selected) > learner.slate_cap or
                        sum(index[c].duration_minutes for c in selected)
                        > learner.time_budget_minutes + 1e-9):
        drop(weakest(selected), "budget")
    if prereqs:
        rank = {k: r for r, k in enumerate(prereqs.topological_order)}
        while not prerequisite_ok(selected, learner, prereqs, index):
            counts = np.zeros(learner.n_skills)
            for c in selected:
                counts += index[c].coverage
            bad = [k2 for k, k2 in prereqs.edges if counts[k2] > learner.mastery[k] + counts[k]]
            target = max(bad, key=lambda k2: rank[k2])
            drop(weakest([c for c in selected if target in index[c].skills]), "prerequisite")

    # replay picks in descending relaxed value so the trace has marginal gains
    picks = sorted(selected, key=lambda c: (-value[c], pos[c]))
    uncovered = set(learner.gap_skills)
    for cid in picks:
        new = tuple(sorted(index[cid].skills & uncovered))
        uncovered -= index[cid].skills
        trace.append(TraceRecord(cid, new, value[cid], level_distance(index[cid].difficulty_level,
                                                                      learner.preferred_level)))
    items = [index[c] for c in picks]
    slack = compute_slack(learner, items)
    if any(slack):
        trace.append(TraceRecord(None, tuple(k for k, s in enumerate(slack) if s), None, None,
                                 event="slack", note="uncovered_after_rounding"))
    return AssignmentSlate(learner_id=learner.id, selected=tuple(picks), slack=slack,
                           total_minutes=sum(it.duration_minutes for it in items), trace=tuple(trace),
                           solver="gradient", relaxed={c: value[c] for c in candidate_ids(pool, config)}
                           if pool is not None else dict(value))


def solve(learner: LearnerState, pool: AdmissiblePool, content: Sequence[ContentItem],
          prereqs: PrereqGraph | None = None, config: GradientConfig | None = None,
          x0=None) -> AssignmentSlate:
    config = config or GradientConfig()
    rel = optimize(learner, pool, content, prereqs, config, x0=x0, record=False)
    return round_and_repair(rel.x, learner, content, prereqs, config, pool)


def solve_cohort(learners: Sequence[LearnerState], pools: Sequence[AdmissiblePool],
                 content: Sequence[ContentItem], prereqs: PrereqGraph | None = None,
                 config: GradientConfig | None = None, x0: np.ndarray | None = None
                 ) -> list[AssignmentSlate]:
    config = config or GradientConfig()
    if not learners:
        return []
    prob = build_problem(learners, pools, content, prereqs, config)
    res = optimize_batch(prob, config, x0)
    return [round_and_repair(res.x[i], lr, content, prereqs, config, pool)
            for i, (lr, pool) in enumerate(zip(learners, pools))]
