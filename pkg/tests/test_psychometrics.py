import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microassign.core import QMatrix
from microassign.psychometrics import (CatConfig, ItemParams3PL, ItemParamsDINA, all_profiles, dina_loglik,
                                       estimate_theta_eap, eta_ideal, fisher_information, fit_dina_em,
                                       ideal_responses, p_3pl, p_dina, run_cat, select_next_item,
                                       simulate_responses)
from microassign.synth import CohortSpec, gen_cohort, gen_item_bank, rng_for

# 1/(1+exp(-1.107)) evaluated at 50 digits with mpmath
LOGISTIC_1107 = 0.75156939576401496


class TestThreePL:
    def test_midpoint(self):
        assert p_3pl(0.7, ItemParams3PL(1.3, 0.7, 0.2)) == pytest.approx(0.6)

    def test_saturation(self):
        it = ItemParams3PL(1.8, -0.4)
        assert p_3pl(-0.4 + 10 / 1.8, it) == pytest.approx(1.0, abs=1e-4)

    def test_slope_intercept_item(self):
        it = ItemParams3PL.from_intercept(2.451, 1.107)
        assert p_3pl(0.0, it) == pytest.approx(LOGISTIC_1107, rel=1e-12)
        assert it.difficulty == pytest.approx(-1.107 / 2.451)

    def test_lower_asymptote(self):
        it = ItemParams3PL(1.5, 0.0, 0.17)
        assert p_3pl(-50.0, it) == pytest.approx(0.17, abs=1e-15)

    def test_vectorized_and_increasing(self):
        it = ItemParams3PL(0.9, 0.3, 0.1)
        p = p_3pl(np.linspace(-6, 6, 101), it)
        assert np.all(np.diff(p) > 0)
        assert np.all((p > 0.1) & (p < 1))

    @pytest.mark.parametrize("theta", [math.nan, math.inf, -math.inf])
    def test_nonfinite_theta(self, theta):
        with pytest.raises(ValueError):
            p_3pl(theta, ItemParams3PL(1.0, 0.0))

    @pytest.mark.parametrize("a, c", [(0.0, 0.1), (-1.0, 0.1), (1.0, 1.0), (1.0, -0.1)])
    def test_bad_params(self, a, c):
        with pytest.raises(ValueError):
            ItemParams3PL(a, 0.0, c)

    def test_information_matches_numeric_derivative(self):
        # I = P'^2 / (P Q) for a binary item
        it = ItemParams3PL(1.7, 0.4, 0.22)
        for th in (-2.0, 0.0, 0.4, 1.9):
            h = 1e-6
            dp = (p_3pl(th + h, it) - p_3pl(th - h, it)) / (2 * h)
            p = p_3pl(th, it)
            assert fisher_information(th, it) == pytest.approx(dp * dp / (p * (1 - p)), rel=1e-6)


class TestDina:
    @pytest.mark.parametrize("mastery, q, expected", [
        ([1, 1, 0], [1, 1, 0], 1),
        ([1, 0, 0], [1, 1, 0], 0),
        ([0, 0, 0], [0, 0, 0], 1),
        ([1, 1, 1], [0, 1, 1], 1),
    ])
    def test_eta(self, mastery, q, expected):
        assert eta_ideal(mastery, q) == expected

    def test_eta_length_mismatch(self):
        with pytest.raises(ValueError):
            eta_ideal([1, 0], [1, 0, 0])

    def test_two_values(self):
        assert p_dina([1, 1], [1, 0], ItemParamsDINA(slip=0.1, guess=0.3)) == pytest.approx(0.9)
        assert p_dina([0, 1], [1, 0], ItemParamsDINA(slip=0.1, guess=0.28)) == pytest.approx(0.28)

    def test_item_16_mastered(self):
        assert p_dina([1, 1], [1, 1], ItemParamsDINA(slip=0.034, guess=0.337)) == pytest.approx(0.966)

    def test_exactly_two_values_over_profiles(self):
        item = ItemParamsDINA(0.15, 0.25)
        q = [1, 0, 1, 0]
        vals = {p_dina(m, q, item) for m in itertools.product((0, 1), repeat=4)}
        assert sorted(vals) == pytest.approx([0.25, 0.85])

    def test_monotone_flag(self):
        assert ItemParamsDINA(0.1, 0.2).monotone
        assert not ItemParamsDINA(0.7, 0.4).monotone

    def test_untagged_item_uses_guess(self):
        q = QMatrix(np.array([[1, 0], [0, 0]]))
        eta = ideal_responses(np.array([[1, 1]]), q)
        assert eta.tolist() == [[1, 0]]


class TestSimulate:
    def test_noise_free_full_mastery(self):
        q = QMatrix(np.array([[1, 0], [0, 1], [1, 1]]))
        params = [ItemParamsDINA(1e-12, 1e-12)] * 3
        Y = simulate_responses(np.array([[1, 1], [1, 0]]), q, params, 3)
        assert Y.tolist() == [[1, 1, 1], [1, 0, 0]]

    def test_law_of_large_numbers(self):
        q = QMatrix(np.array([[1]]))
        Y = simulate_responses(np.ones((10_000, 1), dtype=int), q, [ItemParamsDINA(0.25, 0.2)], 11)
        assert Y.mean() == pytest.approx(0.75, abs=0.02)

    def test_seeded(self):
        q = QMatrix(np.array([[1, 0], [1, 1]]))
        A = np.array([[1, 0], [0, 1], [1, 1]])
        params = [ItemParamsDINA(0.2, 0.2)] * 2
        assert np.array_equal(simulate_responses(A, q, params, 5), simulate_responses(A, q, params, 5))

    def test_param_count_checked(self):
        with pytest.raises(ValueError):
            simulate_responses(np.ones((1, 1)), QMatrix(np.array([[1]])), [], 0)


class TestEap:
    def test_easy_items_all_correct(self):
        items = [ItemParams3PL(1.2, b) for b in (-2.0, -1.5, -1.0)]
        theta, se = estimate_theta_eap([1, 1, 1], items)
        assert theta > 0 and se > 0

    def test_symmetric_half_correct(self):
        items = [ItemParams3PL(1.5, -1.0), ItemParams3PL(1.5, 1.0)]
        theta, _ = estimate_theta_eap([1, 0], items)
        assert abs(theta) < 8 / 60

    def test_empty(self):
        with pytest.raises(ValueError):
            estimate_theta_eap([], [])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            estimate_theta_eap([1, 0], [ItemParams3PL(1, 0)])

    def test_against_direct_quadrature(self):
        # independent posterior-mean computation on the same grid
        items = [ItemParams3PL(1.1, -0.3, 0.1), ItemParams3PL(2.0, 0.5, 0.2), ItemParams3PL(0.8, 1.2)]
        y = [1, 0, 1]
        nodes = np.linspace(-4, 4, 61)
        post = []
        for t in nodes:
            lik = math.exp(-t * t / 2)
            for it, r in zip(items, y):
                p = it.guessing + (1 - it.guessing) / (1 + math.exp(-it.discrimination * (t - it.difficulty)))
                lik *= p if r else 1 - p
            post.append(lik)
        post = np.array(post) / sum(post)
        mean = float(post @ nodes)
        theta, se = estimate_theta_eap(y, items)
        assert theta == pytest.approx(mean, abs=1e-12)
        assert se == pytest.approx(math.sqrt(post @ (nodes - mean) ** 2), abs=1e-12)

    def test_coverage_at_theta_one(self):
        bank = gen_item_bank(60, seed=4)
        rng = np.random.default_rng(8)
        hits = 0
        for _ in range(1000):
            idx = rng.choice(60, size=30, replace=False)
            items = [bank[i] for i in idx]
            y = (rng.uniform(size=30) < np.array([p_3pl(1.0, it) for it in items])).astype(int)
            theta, se = estimate_theta_eap(y, items)
            hits += abs(theta - 1.0) <= 3 * se
        assert hits >= 990


class TestItemSelection:
    def test_single_item(self):
        assert select_next_item(0.0, set(), [ItemParams3PL(1, 3)]) == 0

    def test_information_peaks_at_difficulty(self):
        bank = [ItemParams3PL(1.3, 0.5), ItemParams3PL(1.3, 2.5)]
        assert select_next_item(0.5, set(), bank) == 0

    def test_tie_goes_to_lowest_index(self):
        bank = [ItemParams3PL(1.0, 1.0), ItemParams3PL(1.0, -1.0)]
        assert select_next_item(0.0, set(), bank) == 0

    def test_exhausted(self):
        with pytest.raises(LookupError):
            select_next_item(0.0, {0}, [ItemParams3PL(1, 0)])

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-3, 3), st.integers(0, 1000), st.sets(st.integers(0, 19), max_size=19))
    def test_matches_scan(self, theta, seed, done):
        bank = gen_item_bank(20, seed)
        infos = [(-fisher_information(theta, it), j) for j, it in enumerate(bank) if j not in done]
        assert select_next_item(theta, done, bank) == min(infos)[1]


class TestCat:
    def test_one_item(self):
        tr = run_cat(0.3, gen_item_bank(10, 1), CatConfig(max_items=1), 2)
        assert len(tr.items) == 1 and tr.stop_reason == "max_items"

    def test_large_threshold_stops_immediately(self):
        tr = run_cat(0.3, gen_item_bank(10, 1), CatConfig(se_threshold=100.0), 2)
        assert len(tr.items) == 1 and tr.stop_reason == "se_threshold"

    def test_bank_exhausted(self):
        tr = run_cat(0.0, gen_item_bank(3, 1), CatConfig(se_threshold=0.01, max_items=30), 0)
        assert tr.stop_reason == "bank_exhausted" and sorted(tr.items) == [0, 1, 2]

    def test_replayable(self):
        bank = gen_item_bank(60, 3)
        assert run_cat(-0.7, bank, rng_seed=9).to_dict() == run_cat(-0.7, bank, rng_seed=9).to_dict()

    def test_mean_length_below_cap(self):
        bank = gen_item_bank(60, 0)
        lengths = [len(run_cat(float(rng_for(s, "theta").standard_normal()), bank, rng_seed=s).items)
                   for s in range(200)]
        assert np.mean(lengths) < 30

    def test_no_repeats(self):
        tr = run_cat(2.0, gen_item_bank(60, 5), rng_seed=1)
        assert len(set(tr.items)) == len(tr.items)

    @pytest.mark.parametrize("kw", [{"se_threshold": 0}, {"max_items": 0}, {"grid_points": 2}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            CatConfig(**kw)


class TestDinaEm:
    def test_single_learner_single_item_posterior(self):
        q = QMatrix(np.array([[1, 0]]))
        Y = np.array([[1]])
        fit = fit_dina_em(Y, q, max_iter=1)
        # hand enumeration with the fitted parameters and prior
        s, g = fit.slip[0], fit.guess[0]
        lik = np.array([g if not (m[0] >= 1) else 1 - s for m in all_profiles(2)]) * fit.class_prior
        assert fit.posterior[0] == pytest.approx(lik / lik.sum(), abs=1e-9)

    def test_noise_free_round_trip(self):
        spec = CohortSpec(n_students=500, n_items=40, n_skills=4, seed=2)
        c = gen_cohort(spec)
        Y = simulate_responses(c.mastery, c.qmatrix, [ItemParamsDINA(0.001, 0.001)] * 40, 5)
        fit = fit_dina_em(Y, c.qmatrix)
        acc = (fit.map_profiles == c.mastery).all(axis=1).mean()
        assert acc >= 0.99

    def test_loglik_monotone_and_posterior_normalized(self):
        c = gen_cohort(CohortSpec(n_students=300, n_items=30, n_skills=4, seed=6))
        fit = fit_dina_em(c.responses, c.qmatrix)
        assert np.all(np.diff(fit.loglik) >= -1e-9)
        assert np.allclose(fit.posterior.sum(axis=1), 1.0, atol=1e-9)
        assert np.all((fit.slip > 0) & (fit.slip < 1) & (fit.guess > 0) & (fit.guess < 1))
        assert fit.loglik[-1] == pytest.approx(dina_loglik(c.responses, c.qmatrix, fit.slip, fit.guess,
                                                           fit.class_prior), abs=1e-6)

    def test_degenerate_column_flagged(self):
        q = QMatrix(np.array([[1, 0], [0, 1], [1, 1]]))
        Y = np.array([[1, 0, 1], [1, 1, 0], [1, 0, 0], [1, 1, 1]])
        fit = fit_dina_em(Y, q)
        assert 0 in fit.flagged_items
        assert 0.001 <= fit.slip[0] <= 0.999

    def test_rejects_nonbinary(self):
        with pytest.raises(ValueError):
            fit_dina_em(np.array([[2]]), QMatrix(np.array([[1]])))

    def test_rejects_large_k(self):
        with pytest.raises(ValueError):
            fit_dina_em(np.zeros((1, 1)), QMatrix(np.ones((1, 21), dtype=int)))
