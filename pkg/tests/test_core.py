import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microassign.core import (AssignmentSlate, DimensionError, Level, ObjectiveWeights, PrereqGraph,
                              QMatrix, burden_cost, capped_coverage, compute_slack, coverage_reward,
                              level_distance, slate_objective)

from conftest import item, learner


def triple_loop(U, C, x):
    total = 0
    for i in range(len(U)):
        for j in range(len(C)):
            for k in range(len(U[0])):
                total += U[i][k] * C[j][k] * x[i][j]
    return total


def union_count(U, C, x):
    n = 0
    for i in range(len(U)):
        touched = set()
        for j in range(len(C)):
            if x[i][j]:
                touched |= {k for k in range(len(U[0])) if C[j][k]}
        n += sum(1 for k in touched if U[i][k])
    return n


class TestCoverageReward:
    def test_empty_assignment(self):
        assert coverage_reward([[1, 1]], [[1, 0], [0, 1]], [[0, 0]]) == 0

    def test_mastered_skill_contributes_nothing(self):
        assert coverage_reward([[1, 0]], [[1, 1]], [[1]]) == 1

    def test_against_triple_loop(self, rng):
        for _ in range(20):
            U = rng.integers(0, 2, size=(3, 5))
            C = rng.integers(0, 2, size=(4, 5))
            x = rng.integers(0, 2, size=(3, 4))
            assert coverage_reward(U, C, x) == triple_loop(U, C, x)

    @pytest.mark.parametrize("shapes, axis", [
        (((2, 3), (4, 3), (3, 4)), "learners"),
        (((2, 3), (4, 2), (2, 4)), "skills"),
        (((2, 3), (4, 3), (2, 5)), "contents"),
    ])
    def test_dimension_error_names_axis(self, shapes, axis):
        U, C, x = (np.zeros(s) for s in shapes)
        with pytest.raises(DimensionError) as exc:
            coverage_reward(U, C, x)
        assert exc.value.axis == axis


class TestBurden:
    def test_empty(self):
        assert burden_cost([[0, 0]], [5, 7], 0.1) == 0

    def test_single_item(self):
        assert burden_cost([[1]], [10.0], 0.1) == pytest.approx(2.0)

    def test_against_two_pass_sum(self, rng):
        L = rng.uniform(5, 15, size=5)
        x = np.ones((1, 5))
        expected = sum(x[0]) + 0.05 * sum(l * v for l, v in zip(L, x[0]))
        assert burden_cost(x, L, 0.05) == pytest.approx(expected, rel=1e-12)

    def test_linear_in_indicator(self, rng):
        x = rng.integers(0, 2, size=(2, 6)).astype(float)
        L = rng.uniform(5, 15, size=6)
        assert burden_cost(2 * x, L, 0.2) == pytest.approx(2 * burden_cost(x, L, 0.2))

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            burden_cost([[1]], [1.0], 0.0)


class TestCappedCoverage:
    def test_cap_at_one(self):
        assert capped_coverage([[1, 0]], [[1, 0], [1, 0]], [[1, 1]]) == 1

    def test_no_gaps(self):
        assert capped_coverage([[0, 0, 0]], [[1, 1, 1]], [[1]]) == 0

    def test_against_union_oracle(self, rng):
        for _ in range(30):
            U = rng.integers(0, 2, size=(3, 4))
            C = rng.integers(0, 2, size=(5, 4))
            x = rng.integers(0, 2, size=(3, 5))
            assert capped_coverage(U, C, x) == union_count(U, C, x)
            assert coverage_reward(U, C, x) >= capped_coverage(U, C, x)

    def test_monotone_add_one(self, rng):
        for _ in range(200):
            U = rng.integers(0, 2, size=(1, 5))
            C = rng.integers(0, 2, size=(6, 5))
            x = rng.integers(0, 2, size=(1, 6))
            j = int(rng.integers(6))
            y = x.copy()
            y[0, j] = 1
            assert capped_coverage(U, C, y) >= capped_coverage(U, C, x)

    def test_submodular(self, rng):
        def gain(S, j, U, C):
            x = np.zeros((1, C.shape[0]))
            x[0, list(S)] = 1
            base = capped_coverage(U, C, x)
            x[0, j] = 1
            return capped_coverage(U, C, x) - base

        checked = 0
        while checked < 500:
            U = rng.integers(0, 2, size=(1, 5))
            C = rng.integers(0, 2, size=(7, 5))
            T = set(np.flatnonzero(rng.uniform(size=7) < 0.5).tolist())
            S = {j for j in T if rng.uniform() < 0.5}
            outside = [j for j in range(7) if j not in T]
            if not outside:
                continue
            j = int(rng.choice(outside))
            assert gain(S, j, U, C) >= gain(T, j, U, C)
            checked += 1


class TestTypes:
    def test_level_parse_and_distance(self):
        assert Level.parse("Hard") is Level.HARD
        assert level_distance(Level.BASIC, Level.HARD) == 2
        with pytest.raises(ValueError):
            Level.parse("expert")

    def test_gaps_follow_mastery(self):
        lr = learner((1, 0, 1, 0, 0))
        assert lr.gaps == (0, 1, 0, 1, 1)
        assert lr.gap_skills == {1, 3, 4}

    def test_preferred_must_sit_in_window(self):
        with pytest.raises(ValueError):
            learner((1, 0), window=("basic", "basic"), preferred="hard")

    def test_content_needs_a_skill(self):
        with pytest.raises(ValueError):
            item("x", set())

    def test_qmatrix_untagged_row_is_legal(self):
        q = QMatrix(np.array([[1, 0], [0, 0]]))
        assert q.untagged.tolist() == [False, True]

    def test_prereq_cycle_rejected(self):
        with pytest.raises(ValueError, match="cycle"):
            PrereqGraph(frozenset({(0, 1), (1, 2), (2, 0)}))

    def test_prereq_topological_order(self):
        g = PrereqGraph(frozenset({(0, 1), (1, 2)}))
        order = g.topological_order
        assert order.index(0) < order.index(1) < order.index(2)

    def test_slack_only_for_uncovered_gaps(self):
        lr = learner((0, 0, 1, 1, 1))
        assert compute_slack(lr, [item(1, {0, 2})]) == (0.0, 1.0, 0.0, 0.0, 0.0)

    def test_dominance_check(self):
        ObjectiveWeights().check_dominance(5)
        with pytest.raises(ValueError):
            ObjectiveWeights(gamma_slack=4.0).check_dominance(5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans()), min_size=1, max_size=6),
       st.tuples(st.booleans(), st.booleans(), st.booleans()))
def test_slate_objective_penalizes_slack_first(rows, mastery):
    lr = learner(tuple(int(m) for m in mastery))
    items = [item(j, {k for k, v in enumerate(r) if v} or {0}, 5.0, K=3) for j, r in enumerate(rows)]
    w = ObjectiveWeights()
    # any subset covering more gaps scores higher, whatever it costs
    best = {}
    for r in range(len(items) + 1):
        for sub in itertools.combinations(items, r):
            uncovered = sum(compute_slack(lr, sub))
            best.setdefault(uncovered, []).append(slate_objective(lr, list(sub), w))
    levels = sorted(best)
    for a, b in zip(levels, levels[1:]):
        assert min(best[a]) > max(best[b])
