import numpy as np
import pytest

from microassign import metrics
from microassign.core import AssignmentSlate, TraceRecord, compute_slack
from microassign.feasibility import build_pool
from microassign.greedy import solve

from conftest import item, learner, random_instance

CONTENT = [item(1, {0}, 5), item(2, {1}, 5), item(3, {0, 1}, 10), item(4, {2}, 10)]


def slate(lr, ids, gains=None):
    idx = {it.id: it for it in CONTENT}
    items = [idx[c] for c in ids]
    if gains is None:
        left, gains = set(lr.gap_skills), []
        for it in items:
            gains.append(len(it.skills & left))
            left -= it.skills
    trace = tuple(TraceRecord(c, tuple(range(g)), None, 0) for c, g in zip(ids, gains))
    return AssignmentSlate(lr.id, tuple(ids), compute_slack(lr, items),
                           float(sum(it.duration_minutes for it in items)), trace)


class TestSatisfactoryRate:
    def test_all_and_none(self):
        lr = learner((0, 0, 1, 1, 1))
        assert metrics.satisfactory_rate([slate(lr, ["3"])], [lr], CONTENT) == 100.0
        assert metrics.satisfactory_rate([slate(lr, ["4"])], [lr], CONTENT) == 0.0

    def test_mismatch(self):
        lr = learner((0, 0, 1, 1, 1))
        with pytest.raises(ValueError):
            metrics.satisfactory_rate([], [lr], CONTENT)
        with pytest.raises(ValueError):
            metrics.satisfactory_rate([slate(learner((0, 1, 1, 1, 1), id="x"), [])], [lr], CONTENT)

    def test_against_per_learner_scan(self, rng):
        content = [item(j, set(rng.choice(5, size=2, replace=False).tolist()), 8) for j in range(1, 8)]
        lrs, slates = [], []
        for i in range(40):
            lr = learner(tuple(rng.integers(0, 2, size=5)), id=f"s{i}")
            pool = build_pool(lr, content)
            lrs.append(lr)
            slates.append(solve(lr, pool, content))
        expect = 100 * np.mean([not any(s.slack) for s in slates])
        assert metrics.satisfactory_rate(slates, lrs, content) == pytest.approx(expect)


class TestGainDecay:
    def test_single_pick(self):
        lr = learner((0, 1, 1, 1, 1))
        assert metrics.learner_gain_decay(slate(lr, ["1"])) == 0.0

    def test_two_picks(self):
        lr = learner((0, 0, 0, 1, 1))
        assert metrics.learner_gain_decay(slate(lr, ["3", "4"], gains=[2, 1])) == pytest.approx(-0.5)

    def test_empty_excluded(self):
        a, b = learner((0, 0, 0, 1, 1), id="a"), learner((1, 1, 1, 1, 1), id="b")
        s = metrics.gain_decay([slate(a, ["3", "4"], gains=[2, 1]), slate(b, [])])
        assert s.mean == pytest.approx(-0.5) and s.n == 1 and s.excluded == 1

    def test_against_trace_replay(self, rng):
        vals, slates = [], []
        for i in range(30):
            content, lr = random_instance(rng, M=8, K=4)
            s = solve(lr, build_pool(lr, content, window_widen=2), content)
            slates.append(s)
            g = [len(t.new_skills) for t in s.trace if t.event == "pick"]
            if g:
                vals.append(sum(x - g[0] for x in g) / len(g))
        out = metrics.gain_decay(slates)
        assert out.mean == pytest.approx(np.mean(vals))
        assert out.sd == pytest.approx(np.std(vals, ddof=1))


class TestUtility:
    def test_two_gaps_in_ten_minutes(self):
        lr = learner((0, 0, 1, 1, 1))
        assert metrics.utility([slate(lr, ["3"])], [lr], CONTENT).mean == pytest.approx(0.2)

    def test_no_gaps_empty_slate_excluded(self):
        a, b = learner((0, 0, 1, 1, 1), id="a"), learner((1, 1, 1, 1, 1), id="b")
        u = metrics.utility([slate(a, ["1", "2"]), slate(b, [])], [a, b], CONTENT)
        assert u.n == 1 and u.excluded == 1 and u.mean == pytest.approx(0.2)

    def test_gaps_but_no_minutes_flagged(self):
        a = learner((0, 0, 1, 1, 1))
        u = metrics.utility([slate(a, [])], [a], CONTENT)
        assert u.mean == 0.0 and u.flagged == 1

    def test_mean_against_recomputation(self):
        lrs = [learner((0, 0, 1, 1, 1), id="a"), learner((0, 1, 0, 1, 1), id="b")]
        ss = [slate(lrs[0], ["1", "3"]), slate(lrs[1], ["1", "4"])]
        assert metrics.utility(ss, lrs, CONTENT).mean == pytest.approx((2 / 15 + 2 / 15) / 2)


class TestPenaltyAndCategories:
    def test_zero_when_exact_and_all_used(self):
        content = CONTENT[:2]
        lrs = [learner((0, 1, 1, 1, 1), id="a"), learner((1, 0, 1, 1, 1), id="b")]
        ss = [slate(lrs[0], ["1"]), slate(lrs[1], ["2"])]
        assert metrics.total_penalty(ss, lrs, content) == 0

    def test_unused_content(self):
        lr = learner((0, 0, 1, 1, 1))
        # 1 and 2 unused, 4 unused
        assert metrics.total_penalty([slate(lr, ["3"])], [lr], CONTENT, w1=1, w2=1) == 3

    def test_overcover_counts(self):
        lr = learner((0, 1, 1, 1, 1))
        # item 3 covers mastered skill 1; item 1 repeats skill 0
        assert metrics.total_penalty([slate(lr, ["3", "1"])], [lr], CONTENT, w1=1, w2=0) == 2

    def test_categories(self):
        lrs = [learner((0, 0, 1, 1, 1), id="a"), learner((0, 1, 1, 1, 1), id="b"),
               learner((0, 0, 0, 1, 1), id="c"), learner((1, 1, 1, 1, 1), id="d")]
        ss = [slate(lrs[0], ["3"]), slate(lrs[1], ["1", "3"]), slate(lrs[2], ["3"]), slate(lrs[3], [])]
        cats = metrics.coverage_categories(ss, lrs, CONTENT)
        assert (cats.fully_covered, cats.over_covered, cats.unsatisfied) == (1, 1, 1)
        assert cats.non_used == 2

    def test_partition_against_classifier(self, rng):
        content = [item(j, set(rng.choice(5, size=2, replace=False).tolist()), 8) for j in range(1, 9)]
        lrs, ss = [], []
        for i in range(60):
            lr = learner(tuple(rng.integers(0, 2, size=5)), id=f"s{i}")
            lrs.append(lr)
            ss.append(solve(lr, build_pool(lr, content), content))
        cats = metrics.coverage_categories(ss, lrs, content)
        with_gaps = sum(bool(lr.gap_skills) for lr in lrs)
        assert cats.fully_covered + cats.over_covered + cats.unsatisfied == with_gaps
        idx = {it.id: it for it in content}
        over = 0
        for s, lr in zip(ss, lrs):
            seen = set(range(5)) - lr.gap_skills
            red = 0
            for c in s.selected:
                red += len(idx[c].skills & seen)
                seen |= idx[c].skills
            over += bool(lr.gap_skills) and not any(s.slack) and red > 0
        assert cats.over_covered == over

    def test_negative_weights(self):
        with pytest.raises(ValueError):
            metrics.total_penalty([], [], CONTENT, w1=-1)


def test_evaluate_report():
    lrs = [learner((0, 0, 1, 1, 1), id="a"), learner((0, 1, 0, 1, 1), id="b")]
    ss = [slate(lrs[0], ["3"]), slate(lrs[1], ["1"])]
    rep = metrics.evaluate(ss, lrs, CONTENT, "GH", "toy")
    assert rep.satisfactory_rate == 50.0
    assert rep.per_content_usage == {"1": 1, "2": 0, "3": 1, "4": 0}
    assert rep.unique_content_assigned == 2
    assert rep.slack_summary == {2: 1}
    row = rep.csv_row()
    assert list(row) == list(metrics.EvaluationReport.CSV_COLUMNS)
    assert rep.to_dict()["slack_summary"] == {"2": 1}
