"""Regime law: pick greedy, gradient, or greedy-then-gradient from richness and latency."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import gradient, greedy
from .core import AssignmentSlate, ContentItem, LearnerState, PrereqGraph, TraceRecord, slate_objective
from .feasibility import AdmissiblePool, RichnessScore

MODES = ("auto", "force_greedy", "force_gradient", "force_hybrid")


@dataclass(frozen=True)
class RegimePolicy:
    rho_star: float = 0.5
    lambda_budget_ms: float = math.inf
    lambda_star_ms: float = 50.0
    mode: str = "auto"
    cohort_median: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 <= self.rho_star <= 1:
            raise ValueError("rho_star must lie in [0, 1]")
        if not self.lambda_budget_ms > 0 or not self.lambda_star_ms > 0:
            raise ValueError("latency thresholds must be positive")


@dataclass(frozen=True)
class SolverChoice:
    solver: str  # greedy | gradient | hybrid
    rationale: str


def _rho(rho: RichnessScore | float) -> float:
    return rho.composite if isinstance(rho, RichnessScore) else float(rho)


def choose_solver(rho: RichnessScore | float, policy: RegimePolicy | None = None) -> SolverChoice:
    policy = policy or RegimePolicy()
    r = _rho(rho)
    lam, lam_star = policy.lambda_budget_ms, policy.lambda_star_ms
    if policy.mode != "auto":
        solver = policy.mode.removeprefix("force_")
        return SolverChoice(solver, f"mode={policy.mode}")
    if r < policy.rho_star:
        return SolverChoice("greedy", f"rho={r:.3f} < rho*={policy.rho_star:g}")
    if lam < lam_star:
        return SolverChoice("greedy", f"budget={lam:g}ms < lambda*={lam_star:g}ms")
    if lam >= 4 * lam_star:
        return SolverChoice("gradient", f"rho={r:.3f} >= rho*={policy.rho_star:g} and "
                                        f"budget={lam:g}ms >= 4*lambda*={4 * lam_star:g}ms")
    return SolverChoice("hybrid", f"rho={r:.3f} >= rho*={policy.rho_star:g} and "
                                  f"lambda*={lam_star:g}ms <= budget={lam:g}ms < {4 * lam_star:g}ms")


def choose_cohort(scores: Sequence[RichnessScore | float], policy: RegimePolicy | None = None) -> SolverChoice:
    """One choice for the whole cohort from the median richness."""
    policy = policy or RegimePolicy()
    med = statistics.median(_rho(s) for s in scores) if scores else 0.0
    choice = choose_solver(med, policy)
    return SolverChoice(choice.solver, f"cohort median; {choice.rationale}")


def solve_hybrid(learner: LearnerState, pool: AdmissiblePool, content: Sequence[ContentItem],
                 prereqs: PrereqGraph | None = None, greedy_cfg: greedy.GreedyConfig | None = None,
                 grad_cfg: gradient.GradientConfig | None = None) -> AssignmentSlate:
    """Greedy slate, then gradient refinement warm-started from it; keep the better one.

    Both candidates are scored by the slack-penalized objective under the
    gradient config's weights, so adequacy dominates and ties go to greedy.
    """
    greedy_cfg = greedy_cfg or greedy.GreedyConfig()
    grad_cfg = grad_cfg or gradient.GradientConfig()
    index = {it.id: it for it in content}
    base = greedy.solve(learner, pool, content, prereqs, greedy_cfg)
    picked = set(base.selected)
    x0 = np.array([1.0 if it.id in picked else 0.0 for it in content])
    refined = gradient.solve(learner, pool, content, prereqs, grad_cfg, x0=x0)

    w = grad_cfg.weights
    z_greedy = slate_objective(learner, [index[c] for c in base.selected], w)
    z_refined = slate_objective(learner, [index[c] for c in refined.selected], w)
    winner = refined if z_refined > z_greedy + 1e-12 else base
    note = f"Z_greedy={z_greedy:.6g} Z_refined={z_refined:.6g}"
    record = TraceRecord(None, (), max(z_greedy, z_refined), None, event="arbitration", note=note)
    return replace(winner, trace=winner.trace + (record,), solver="hybrid")
