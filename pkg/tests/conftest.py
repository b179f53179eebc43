import numpy as np
import pytest

from microassign.core import ContentItem, LearnerState, Level


def item(id, skills, minutes=10.0, level="medium", K=5, tags=()):
    cov = tuple(int(k in skills) for k in range(K))
    return ContentItem(id=str(id), coverage=cov, duration_minutes=minutes,
                       difficulty_level=Level.parse(level), representation_tags=tuple(tags))


def learner(mastery, budget=45.0, cap=100, window=("medium", "medium"), preferred="medium",
            id="L", theta=0.0):
    return LearnerState(id, theta, tuple(mastery), budget, cap,
                        (Level.parse(window[0]), Level.parse(window[1])), Level.parse(preferred))


def random_instance(rng, M=8, K=4, p_master=0.4, budget=None, levels=True):
    """Random content list plus one learner; skills drawn 1-3 per item."""
    content = []
    for j in range(M):
        size = int(rng.integers(1, min(3, K) + 1))
        skills = set(rng.choice(K, size=size, replace=False).tolist())
        lvl = ["basic", "medium", "hard"][int(rng.integers(3))] if levels else "medium"
        content.append(item(j + 1, skills, round(float(rng.uniform(5, 15)), 2), lvl, K))
    mastery = (rng.uniform(size=K) < p_master).astype(int)
    T = budget if budget is not None else float(rng.uniform(10, 40))
    lr = learner(mastery, budget=T, cap=M, window=("basic", "hard"), preferred="medium")
    return content, lr


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> summary line, filled by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
