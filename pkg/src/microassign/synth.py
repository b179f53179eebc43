"""Seeded generators for synthetic cohorts, item banks and content pools.

Every generator derives child streams from ``numpy.random.SeedSequence``
keyed by (seed, purpose, index) so output does not depend on call order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ContentItem, Level, QMatrix
from .psychometrics import ItemParams3PL, ItemParamsDINA, simulate_responses

_STREAMS = {"qmatrix": 1, "mastery": 2, "dina": 3, "responses": 4, "content": 5,
            "bank": 6, "theta": 7, "tags": 8}


def rng_for(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[purpose], int(index)]))


def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Split ``total`` into integer counts proportional to ``fractions``.

    Ties in the remainders go to the earlier entry.
    """
    fr = np.asarray(fractions, dtype=float)
    if total < 0 or (fr < 0).any() or not math.isclose(fr.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("fractions must be nonnegative and sum to 1")
    raw = fr * total
    base = np.floor(raw + 1e-12).astype(int)
    short = total - base.sum()
    order = sorted(range(len(fr)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base.tolist()


@dataclass(frozen=True)
class CohortSpec:
    n_students: int = 1000
    n_items: int = 60
    n_skills: int = 5
    mastery_rate: float = 0.6
    guess_prior: tuple[float, float] = (7.0, 18.0)
    slip_prior: tuple[float, float] = (5.0, 15.0)
    single_skill_item_fraction: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if min(self.n_students, self.n_items, self.n_skills) < 1:
            raise ValueError("counts must be positive")
        for name in ("mastery_rate", "single_skill_item_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ContentPoolSpec:
    n_content: int = 20
    n_skills: int = 5
    duration_mu: float = math.log(20.0)
    duration_sigma: float = 2.0
    duration_bounds: tuple[float, float] = (5.0, 15.0)
    difficulty_mix: tuple[float, float, float] = (0.3, 0.5, 0.2)  # basic, medium, hard
    single_skill_fraction: float = 0.8
    max_multi_skills: int = 2
    n_forms: int = 0
    full_coverage: bool = True
    seed: int = 0

    def __post_init__(self):
        if not math.isclose(sum(self.difficulty_mix), 1.0, abs_tol=1e-9):
            raise ValueError("difficulty mix must sum to 1")
        if self.n_content < 1 or self.n_skills < 1:
            raise ValueError("counts must be positive")


def gen_qmatrix(spec: CohortSpec) -> QMatrix:
    """Single-skill rows cycle through the skills; multi-skill rows need 2 or 3."""
    n_single = int(round(spec.n_items * spec.single_skill_item_fraction))
    n_multi = spec.n_items - n_single
    K = spec.n_skills
    if n_multi > 0 and K < 3:
        raise ValueError("multi-skill items need at least 3 skills")
    rng = rng_for(spec.seed, "qmatrix")
    Q = np.zeros((spec.n_items, K), dtype=np.int8)
    skills = np.concatenate([rng.permutation(K) for _ in range(n_single // K + 1)])[:n_single]
    Q[np.arange(n_single), skills] = 1
    for r in range(n_single, spec.n_items):
        size = int(rng.integers(2, 4))
        Q[r, rng.choice(K, size=size, replace=False)] = 1
    # n_single < K leaves skills untested; patch them onto multi rows
    for k in np.flatnonzero(Q.sum(axis=0) == 0):
        r = n_single + int(rng.integers(n_multi))
        Q[r, k] = 1
    return QMatrix(Q)


def gen_dina_params(spec: CohortSpec) -> list[ItemParamsDINA]:
    rng = rng_for(spec.seed, "dina")
    g = rng.beta(*spec.guess_prior, size=spec.n_items)
    s = rng.beta(*spec.slip_prior, size=spec.n_items)
    return [ItemParamsDINA(slip=float(si), guess=float(gi)) for si, gi in zip(s, g)]


def gen_mastery(spec: CohortSpec) -> np.ndarray:
    rng = rng_for(spec.seed, "mastery")
    return (rng.uniform(size=(spec.n_students, spec.n_skills)) < spec.mastery_rate).astype(np.int8)


@dataclass
class SyntheticCohort:
    qmatrix: QMatrix
    mastery: np.ndarray
    dina_params: list[ItemParamsDINA]
    responses: np.ndarray
    theta: np.ndarray


def gen_cohort(spec: CohortSpec) -> SyntheticCohort:
    qmatrix = gen_qmatrix(spec)
    mastery = gen_mastery(spec)
    params = gen_dina_params(spec)
    responses = simulate_responses(mastery, qmatrix, params,
                                   rng_seed=int(rng_for(spec.seed, "responses").integers(2**63)))
    theta = gen_theta(spec.n_students, spec.seed)
    return SyntheticCohort(qmatrix, mastery, params, responses, theta)


def gen_theta(n: int, seed: int) -> np.ndarray:
    return rng_for(seed, "theta").standard_normal(n)


def gen_item_bank(n_items: int = 60, seed: int = 0) -> list[ItemParams3PL]:
    """3PL bank: a ~ U(1.5, 3.0), b ~ N(0, 1), c ~ Beta(2, 18)."""
    rng = rng_for(seed, "bank")
    a = rng.uniform(1.5, 3.0, size=n_items)
    b = rng.standard_normal(n_items)
    c = rng.beta(2.0, 18.0, size=n_items)
    return [ItemParams3PL(float(ai), float(bi), float(ci), id=f"item{j + 1}")
            for j, (ai, bi, ci) in enumerate(zip(a, b, c))]


def draw_durations(rng: np.random.Generator, size: int, mu: float = math.log(20.0),
                   sigma: float = 2.0, bounds: tuple[float, float] = (5.0, 15.0)) -> np.ndarray:
    # the clip puts real probability mass on both bounds
    return np.clip(rng.lognormal(mu, sigma, size=size), *bounds)


def gen_content_pool(spec: ContentPoolSpec) -> list[ContentItem]:
    K, M = spec.n_skills, spec.n_content
    if spec.full_coverage and M * spec.max_multi_skills < K:
        raise ValueError(f"{M} items cannot cover {K} skills")
    rng = rng_for(spec.seed, "content")
    durations = draw_durations(rng, M, spec.duration_mu, spec.duration_sigma, spec.duration_bounds)
    counts = largest_remainder(M, spec.difficulty_mix)
    levels = np.repeat([Level.BASIC, Level.MEDIUM, Level.HARD], counts)
    levels = levels[rng.permutation(M)]
    n_single = int(round(M * spec.single_skill_fraction))
    sizes = np.array([1] * n_single + [min(spec.max_multi_skills, K)] * (M - n_single))
    sizes = sizes[rng.permutation(M)]

    cov = np.zeros((M, K), dtype=np.int8)
    if spec.full_coverage:
        # deal every skill once before drawing the rest at random
        slots = [(j, s) for j in range(M) for s in range(sizes[j])]
        order = rng.permutation(len(slots))
        need = list(rng.permutation(K))
        if len(slots) < K:
            raise ValueError(f"uncovered skills: {sorted(int(k) for k in need[len(slots):])}")
        for pos, k in zip(order[:K], need):
            cov[slots[pos][0], k] = 1
    for j in range(M):
        free = np.flatnonzero(cov[j] == 0)
        extra = sizes[j] - int(cov[j].sum())
        if extra > 0:
            cov[j, rng.choice(free, size=extra, replace=False)] = 1
    uncovered = np.flatnonzero(cov.sum(axis=0) == 0)
    if spec.full_coverage and uncovered.size:
        raise ValueError(f"uncovered skills: {uncovered.tolist()}")

    tags_rng = rng_for(spec.seed, "tags")
    items = []
    for j in range(M):
        tags: tuple[int, ...] = ()
        if spec.n_forms:
            t = np.zeros(spec.n_forms, dtype=int)
            t[tags_rng.integers(spec.n_forms)] = 1
            tags = tuple(t)
        items.append(ContentItem(id=str(j + 1), coverage=tuple(cov[j]),
                                 duration_minutes=round(float(durations[j]), 3),
                                 difficulty_level=Level(int(levels[j])),
                                 representation_tags=tags))
    return items
