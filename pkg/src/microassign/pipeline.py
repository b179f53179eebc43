"""Stage functions behind the CLI: synthesis, diagnosis, assignment, evaluation, sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import files, gradient, greedy, hybrid, metrics, oracle
from .config import RunConfig
from .core import AssignmentSlate, ContentItem, LearnerState, PrereqGraph, QMatrix, TraceRecord
from .feasibility import AdmissiblePool, build_pool, infeasibility_certificate, richness
from .psychometrics import CatConfig, estimate_theta_eap, fit_dina_em, run_cat
from .synth import gen_cohort, gen_content_pool, gen_item_bank, gen_theta, rng_for

log = logging.getLogger(__name__)

SOLVER_NAMES = {"greedy": "GH", "gd": "GD", "hybrid": "HY", "auto": "AUTO"}


def make_learners(mastery: np.ndarray, theta: Sequence[float], ids: Sequence[str], cfg: RunConfig,
                  n_content: int) -> list[LearnerState]:
    cap = cfg.budgets.slate_cap or max(1, n_content)
    wp = cfg.window
    return [LearnerState(str(lid), float(t), tuple(int(v) for v in row), cfg.budgets.time_budget_minutes,
                         cap, wp.window(float(t)), wp.preferred(float(t)))
            for lid, t, row in zip(ids, theta, np.asarray(mastery))]


def resolve_caps(learners: Sequence[LearnerState], cfg: RunConfig, n_content: int) -> list[LearnerState]:
    """Apply the configured slate cap (default: repository size) to learners read without one."""
    cap = cfg.budgets.slate_cap or max(1, n_content)
    return [lr if lr.slate_cap < 10**9 else replace(lr, slate_cap=cap) for lr in learners]


def pool_widen(solver: str, cfg: RunConfig) -> int:
    if solver == "gd":
        return cfg.gradient.fallback_levels
    top = cfg.greedy_config().top_tier
    return max(top, cfg.gradient.fallback_levels) if solver in ("hybrid", "auto") else top


def build_pools(learners, content, prereqs, cfg: RunConfig, solver: str) -> list[AdmissiblePool]:
    widen = pool_widen(solver, cfg)
    return [build_pool(lr, content, prereqs, cfg.similarity, widen) for lr in learners]


@dataclass
class AssignResult:
    slates: list[AssignmentSlate]
    pools: list[AdmissiblePool]
    gd_trace: list[dict] | None = None


def _gd_batch(learners, pools, content, prereqs, cfg: RunConfig, record: bool):
    gcfg = cfg.gradient_config()
    prob = gradient.build_problem(learners, pools, content, prereqs, gcfg)
    res = gradient.optimize_batch(prob, gcfg, record=record)
    slates = [gradient.round_and_repair(res.x[i], lr, content, prereqs, gcfg, pool)
              for i, (lr, pool) in enumerate(zip(learners, pools))]
    rows = None
    if record:
        rows = [{"learner_id": lr.id, "iter": t, "loss": loss, "grad_norm": g}
                for i, lr in enumerate(learners)
                for t, (loss, g) in enumerate(zip(res.loss_history[i], res.grad_history[i]))]
    return slates, rows


def assign(learners: Sequence[LearnerState], content: Sequence[ContentItem], prereqs: PrereqGraph | None,
           cfg: RunConfig, solver: str | None = None, record_gd: bool = False) -> AssignResult:
    solver = solver or cfg.solver
    learners = list(learners)
    pools = build_pools(learners, content, prereqs, cfg, solver)
    if solver == "greedy":
        gcfg = cfg.greedy_config()
        return AssignResult([greedy.solve(lr, p, content, prereqs, gcfg) for lr, p in zip(learners, pools)],
                            pools)
    if solver == "gd":
        slates, rows = _gd_batch(learners, pools, content, prereqs, cfg, record_gd)
        return AssignResult(slates, pools, rows)
    if solver == "hybrid":
        return AssignResult([hybrid.solve_hybrid(lr, p, content, prereqs, cfg.greedy_config(),
                                                 cfg.gradient_config())
                             for lr, p in zip(learners, pools)], pools)
    if solver != "auto":
        raise ValueError(f"unknown solver {solver!r}")

    scores = [richness(lr, p, content) for lr, p in zip(learners, pools)]
    if cfg.regime.cohort_median:
        choices = [hybrid.choose_cohort(scores, cfg.regime)] * len(learners)
    else:
        choices = [hybrid.choose_solver(s, cfg.regime) for s in scores]
    slates: list[AssignmentSlate | None] = [None] * len(learners)
    gd_idx = [i for i, c in enumerate(choices) if c.solver == "gradient"]
    rows = None
    if gd_idx:
        gd_slates, rows = _gd_batch([learners[i] for i in gd_idx], [pools[i] for i in gd_idx], content,
                                    prereqs, cfg, record_gd)
        for i, s in zip(gd_idx, gd_slates):
            slates[i] = s
    for i, (lr, p, c) in enumerate(zip(learners, pools, choices)):
        if c.solver == "greedy":
            slates[i] = greedy.solve(lr, p, content, prereqs, cfg.greedy_config())
        elif c.solver == "hybrid":
            slates[i] = hybrid.solve_hybrid(lr, p, content, prereqs, cfg.greedy_config(), cfg.gradient_config())
        note = TraceRecord(None, (), None, None, event="regime", note=f"{c.solver}: {c.rationale}")
        slates[i] = replace(slates[i], trace=(note,) + slates[i].trace)
    return AssignResult(slates, pools, rows)


def slack_report(slates: Sequence[AssignmentSlate], learners: Sequence[LearnerState],
                 pools: Sequence[AdmissiblePool], content: Sequence[ContentItem]) -> dict:
    """Uncovered (learner, skill) pairs, split by whether any admissible content could cover them."""
    cert = set(infeasibility_certificate(learners, {p.learner_id: p for p in pools}, content))
    rows = []
    for s in slates:
        for k, v in enumerate(s.slack):
            if v > 0:
                rows.append({"learner_id": s.learner_id, "skill": k + 1,
                             "reason": "repository_insufficient" if (s.learner_id, k) in cert
                             else "budget_or_repair"})
    by_skill: dict[int, int] = {}
    for r in rows:
        by_skill[r["skill"]] = by_skill.get(r["skill"], 0) + 1
    return {"uncovered": rows, "by_skill": {str(k): v for k, v in sorted(by_skill.items())}}


def synth_cohort(cfg: RunConfig):
    return gen_cohort(cfg.cohort)


def synthetic_learners(cfg: RunConfig, n_content: int) -> list[LearnerState]:
    cohort = gen_cohort(cfg.cohort)
    ids = [f"s{i + 1}" for i in range(cfg.cohort.n_students)]
    return make_learners(cohort.mastery, cohort.theta, ids, cfg, n_content)


def diagnose(responses: np.ndarray, qmatrix: QMatrix, irt_items=None, cat: CatConfig | None = None):
    """DINA EM for mastery, plus EAP ability when 3PL parameters are supplied."""
    fit = fit_dina_em(responses, qmatrix)
    if irt_items is not None:
        est = [estimate_theta_eap(row, irt_items, cat) for row in np.asarray(responses)]
        theta = np.array([m for m, _ in est])
        se = np.array([s for _, s in est])
    else:
        theta = se = None
    return fit, theta, se


def cat_sim(n_learners: int, n_items: int, cfg: RunConfig):
    bank = gen_item_bank(n_items, cfg.seed)
    truth = gen_theta(n_learners, cfg.seed)
    seeds = [int(rng_for(cfg.seed, "responses", i + 1).integers(2**63)) for i in range(n_learners)]
    return bank, truth, [run_cat(float(t), bank, cfg.cat, s) for t, s in zip(truth, seeds)]


COMPARE_COLUMNS = metrics.EvaluationReport.CSV_COLUMNS


def compare(cfg: RunConfig, pools: Sequence[int] | None = None,
            solvers: Sequence[str] = ("gd", "greedy")) -> list[metrics.EvaluationReport]:
    """Both solvers over synthetic repositories of each size, one cohort throughout."""
    pools = tuple(pools or cfg.evaluation.pools)
    cohort = gen_cohort(cfg.cohort)
    ids = [f"s{i + 1}" for i in range(cfg.cohort.n_students)]
    reports = []
    for solver in solvers:
        for m in pools:
            content = gen_content_pool(replace(cfg.content, n_content=m, n_skills=cfg.cohort.n_skills))
            learners = make_learners(cohort.mastery, cohort.theta, ids, cfg, m)
            res = assign(learners, content, None, cfg, solver)
            reports.append(metrics.evaluate(res.slates, learners, content, SOLVER_NAMES[solver],
                                            f"sim_{m}", cfg.evaluation.w1, cfg.evaluation.w2))
    return reports


def run_oracle(learners, content, prereqs, cfg: RunConfig, limits: oracle.OracleLimits | None = None):
    limits = limits or oracle.OracleLimits()
    if len(learners) > limits.max_learners:
        raise ValueError(f"{len(learners)} learners exceed the oracle limit of {limits.max_learners}")
    pools = build_pools(learners, content, prereqs, cfg, "greedy")
    return [oracle.solve_exact(lr, p, content, prereqs, cfg.weights, limits, cfg.similarity)
            for lr, p in zip(learners, pools)]


def write_slates(path: Path, slates: Sequence[AssignmentSlate], cfg: RunConfig, solver: str) -> None:
    files.dump_json(path, {**cfg.provenance(), "solver": solver, "slates": [s.to_dict() for s in slates]})


def read_slates(path: Path) -> list[AssignmentSlate]:
    data = files.load_json(path)
    out = []
    for d in data["slates"]:
        trace = tuple(TraceRecord(r["content_id"], tuple(r["new_skills"]), r["score"], r["tier"],
                                  r["event"], r["note"]) for r in d["trace"])
        out.append(AssignmentSlate(d["learner_id"], tuple(d["selected"]), tuple(d["slack"]),
                                   d["total_minutes"], trace, d["infeasible"], d["solver"], d.get("relaxed")))
    return out
