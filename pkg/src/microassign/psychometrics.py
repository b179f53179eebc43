"""3PL and DINA response models, ability estimation, CAT and DINA EM."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import QMatrix


@dataclass(frozen=True)
class ItemParams3PL:
    discrimination: float
    difficulty: float
    guessing: float = 0.0
    id: str = ""

    def __post_init__(self):
        if not self.discrimination > 0:
            raise ValueError(f"item {self.id}: discrimination must be positive")
        if not 0 <= self.guessing < 1:
            raise ValueError(f"item {self.id}: guessing must lie in [0, 1)")

    @classmethod
    def from_intercept(cls, a: float, d: float, c: float = 0.0, id: str = "") -> "ItemParams3PL":
        """Slope-intercept form ``a*theta + d``; stored as ``b = -d/a``."""
        return cls(discrimination=a, difficulty=-d / a, guessing=c, id=id)


@dataclass(frozen=True)
class ItemParamsDINA:
    slip: float
    guess: float

    def __post_init__(self):
        if not (0 < self.slip < 1 and 0 < self.guess < 1):
            raise ValueError("slip and guess must lie in (0, 1)")

    @property
    def monotone(self) -> bool:
        return 1 - self.slip > self.guess


@dataclass(frozen=True)
class CatConfig:
    se_threshold: float = 0.2
    max_items: int = 30
    grid_min: float = -4.0
    grid_max: float = 4.0
    grid_points: int = 61

    def __post_init__(self):
        if not self.se_threshold > 0:
            raise ValueError("se_threshold must be positive")
        if self.max_items < 1:
            raise ValueError("max_items must be >= 1")
        if self.grid_points < 3 or not self.grid_max > self.grid_min:
            raise ValueError("bad quadrature grid")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.grid_min, self.grid_max, self.grid_points)


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def p_3pl(theta, item: ItemParams3PL):
    """Probability of a correct response under the 3PL model."""
    theta_arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta_arr)):
        raise ValueError("theta must be finite")
    c = item.guessing
    p = c + (1.0 - c) * _logistic(item.discrimination * (theta_arr - item.difficulty))
    return float(p) if p.ndim == 0 else p


def fisher_information(theta: float, item: ItemParams3PL) -> float:
    """Exact 3PL item information ``a^2 (Q/P) ((P - c)/(1 - c))^2``."""
    a, c = item.discrimination, item.guessing
    p = p_3pl(theta, item)
    q = 1.0 - p
    if p <= 0 or q <= 0:
        return 0.0
    return a * a * (q / p) * ((p - c) / (1.0 - c)) ** 2


def eta_ideal(mastery: Sequence[int], q_row: Sequence[int]) -> int:
    """Conjunctive ideal response: 1 iff every required skill is mastered."""
    m = np.asarray(mastery)
    q = np.asarray(q_row)
    if m.shape != q.shape:
        raise ValueError(f"mastery length {m.size} != q-row length {q.size}")
    return int(np.all(m >= q))


def p_dina(mastery: Sequence[int], q_row: Sequence[int], item: ItemParamsDINA) -> float:
    eta = eta_ideal(mastery, q_row)
    return (1.0 - item.slip) ** eta * item.guess ** (1 - eta)


def ideal_responses(profiles: np.ndarray, qmatrix: QMatrix) -> np.ndarray:
    """Matrix of ideal responses (learners x items).

    Untagged items get 0 everywhere so that they are answered at the guess
    rate; their likelihood does not depend on the latent class either way.
    """
    A = np.asarray(profiles, dtype=int)
    Q = qmatrix.entries.astype(int)
    if A.shape[1] != Q.shape[1]:
        raise ValueError(f"profiles have {A.shape[1]} skills, Q-matrix has {Q.shape[1]}")
    missing = (1 - A) @ Q.T
    eta = (missing == 0).astype(int)
    eta[:, qmatrix.untagged] = 0
    return eta


def simulate_responses(profiles, qmatrix: QMatrix, dina_params: Sequence[ItemParamsDINA],
                       rng_seed: int) -> np.ndarray:
    """Draw DINA responses by comparing a uniform draw with the success probability."""
    if len(dina_params) != qmatrix.n_items:
        raise ValueError(f"{len(dina_params)} DINA parameter sets for {qmatrix.n_items} items")
    eta = ideal_responses(profiles, qmatrix)
    slip = np.array([p.slip for p in dina_params])
    guess = np.array([p.guess for p in dina_params])
    prob = np.where(eta == 1, 1.0 - slip, guess)
    u = np.random.default_rng(rng_seed).uniform(size=prob.shape)
    return (u < prob).astype(np.int8)


def _item_arrays(items: Sequence[ItemParams3PL]):
    a = np.array([it.discrimination for it in items])
    b = np.array([it.difficulty for it in items])
    c = np.array([it.guessing for it in items])
    return a, b, c


def estimate_theta_eap(responses: Sequence[int], items: Sequence[ItemParams3PL],
                       grid: CatConfig | None = None) -> tuple[float, float]:
    """Posterior mean and sd of theta under a standard-normal prior."""
    grid = grid or CatConfig()
    y = np.asarray(responses, dtype=float)
    if y.size == 0:
        raise ValueError("at least one response is required")
    if y.size != len(items):
        raise ValueError(f"{y.size} responses for {len(items)} items")
    nodes = grid.grid
    a, b, c = _item_arrays(items)
    p = c[None, :] + (1 - c[None, :]) * _logistic(a[None, :] * (nodes[:, None] - b[None, :]))
    p = np.clip(p, 1e-12, 1 - 1e-12)
    loglik = (y * np.log(p) + (1 - y) * np.log1p(-p)).sum(axis=1) - 0.5 * nodes ** 2
    w = np.exp(loglik - loglik.max())
    w /= w.sum()
    mean = float(w @ nodes)
    sd = float(np.sqrt(max(w @ (nodes - mean) ** 2, 1e-300)))
    return mean, sd


def select_next_item(theta_hat: float, administered, bank: Sequence[ItemParams3PL]) -> int:
    """Index of the unadministered item with maximal information; ties go to the lowest index."""
    done = set(administered)
    best, best_info = None, -math.inf
    for idx, item in enumerate(bank):
        if idx in done:
            continue
        info = fisher_information(theta_hat, item)
        if info > best_info:
            best, best_info = idx, info
    if best is None:
        raise LookupError("item bank exhausted")
    return best


@dataclass
class CatTranscript:
    items: list[int] = field(default_factory=list)
    responses: list[int] = field(default_factory=list)
    theta_path: list[float] = field(default_factory=list)
    se_path: list[float] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def theta_hat(self) -> float:
        return self.theta_path[-1]

    @property
    def se(self) -> float:
        return self.se_path[-1]

    def to_dict(self) -> dict:
        return {
            "items": list(self.items),
            "responses": list(self.responses),
            "theta_path": [round(t, 12) for t in self.theta_path],
            "se_path": [round(s, 12) for s in self.se_path],
            "stop_reason": self.stop_reason,
        }


def run_cat(true_theta: float, bank: Sequence[ItemParams3PL], config: CatConfig | None = None,
            rng_seed: int = 0) -> CatTranscript:
    """Adaptive test for one simulated learner.

    Starts at the prior mean, administers the most informative remaining
    item, and stops at the first of: se <= threshold, max_items reached,
    bank exhausted.
    """
    config = config or CatConfig()
    if not bank:
        raise ValueError("empty item bank")
    rng = np.random.default_rng(rng_seed)
    tr = CatTranscript()
    theta_hat = 0.0
    while True:
        j = select_next_item(theta_hat, tr.items, bank)
        y = int(rng.uniform() < p_3pl(true_theta, bank[j]))
        tr.items.append(j)
        tr.responses.append(y)
        theta_hat, se = estimate_theta_eap(tr.responses, [bank[i] for i in tr.items], config)
        tr.theta_path.append(theta_hat)
        tr.se_path.append(se)
        if se <= config.se_threshold:
            tr.stop_reason = "se_threshold"
        elif len(tr.items) >= config.max_items:
            tr.stop_reason = "max_items"
        elif len(tr.items) >= len(bank):
            tr.stop_reason = "bank_exhausted"
        if tr.stop_reason:
            return tr


def all_profiles(n_skills: int) -> np.ndarray:
    """Every binary mastery pattern, in lexicographic order."""
    return np.array(list(itertools.product((0, 1), repeat=n_skills)), dtype=int)


@dataclass
class DinaFit:
    slip: np.ndarray
    guess: np.ndarray
    class_prior: np.ndarray
    posterior: np.ndarray
    profiles: np.ndarray
    map_profiles: np.ndarray
    loglik: list[float]
    iterations: int
    converged: bool
    flagged_items: list[int]

    @property
    def mastery_probability(self) -> np.ndarray:
        return self.posterior @ self.profiles


_CLAMP = (0.001, 0.999)


def _loglik_and_posterior(Y, eta, slip, guess, prior):
    p = np.where(eta == 1, 1.0 - slip[None, :], guess[None, :])  # classes x items
    logp = np.log(p)
    log1mp = np.log1p(-p)
    ll = Y @ logp.T + (1 - Y) @ log1mp.T + np.log(prior)[None, :]  # learners x classes
    mx = ll.max(axis=1, keepdims=True)
    w = np.exp(ll - mx)
    tot = w.sum(axis=1, keepdims=True)
    return float((mx[:, 0] + np.log(tot[:, 0])).sum()), w / tot


def dina_loglik(responses, qmatrix: QMatrix, slip, guess, class_prior) -> float:
    Y = np.asarray(responses, dtype=float)
    profiles = all_profiles(qmatrix.n_skills)
    eta = ideal_responses(profiles, qmatrix)
    return _loglik_and_posterior(Y, eta, np.asarray(slip, float), np.asarray(guess, float),
                                 np.asarray(class_prior, float))[0]


def fit_dina_em(responses, qmatrix: QMatrix, tol: float = 1e-6, max_iter: int = 500,
                init: float = 0.2) -> DinaFit:
    """Marginal maximum-likelihood EM over all 2^K latent classes."""
    Y = np.asarray(responses, dtype=float)
    K = qmatrix.n_skills
    if K > 20:
        raise ValueError("class enumeration is limited to K <= 20")
    if Y.ndim != 2 or Y.shape[1] != qmatrix.n_items:
        raise ValueError(f"responses must be learners x {qmatrix.n_items}")
    if not np.isin(Y, (0, 1)).all():
        raise ValueError("responses must be binary")
    profiles = all_profiles(K)
    eta = ideal_responses(profiles, qmatrix)  # classes x items
    n_items = qmatrix.n_items
    slip = np.full(n_items, init)
    guess = np.full(n_items, init)
    prior = np.full(len(profiles), 1.0 / len(profiles))
    flagged = sorted(set(np.flatnonzero((Y.sum(axis=0) == 0) | (Y.sum(axis=0) == Y.shape[0])))
                     | set(np.flatnonzero(qmatrix.untagged)))

    ll, post = _loglik_and_posterior(Y, eta, slip, guess, prior)
    trajectory = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # expected counts per item split by ideal response
        n1 = post @ eta                       # learners x items: P(eta=1)
        n0 = 1.0 - n1
        r1 = (n1 * Y).sum(axis=0)
        r0 = (n0 * Y).sum(axis=0)
        t1 = n1.sum(axis=0)
        t0 = n0.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            new_slip = np.where(t1 > 0, 1.0 - r1 / t1, slip)
            new_guess = np.where(t0 > 0, r0 / t0, guess)
        slip = np.clip(new_slip, *_CLAMP)
        guess = np.clip(new_guess, *_CLAMP)
        prior = np.maximum(post.mean(axis=0), 1e-300)
        prior /= prior.sum()
        ll, post = _loglik_and_posterior(Y, eta, slip, guess, prior)
        trajectory.append(ll)
        if abs(trajectory[-1] - trajectory[-2]) < tol:
            converged = True
            break

    map_profiles = profiles[post.argmax(axis=1)]
    return DinaFit(slip=slip, guess=guess, class_prior=prior, posterior=post, profiles=profiles,
                   map_profiles=map_profiles, loglik=trajectory, iterations=it,
                   converged=converged, flagged_items=[int(i) for i in flagged])
