import math

import numpy as np
import pytest

from corrcascades import (
    EventLog,
    InfeasibleLikelihoodError,
    LinearMark,
    ModelParams,
    SoftMaxMark,
    UserParams,
    build_all_features,
    build_features,
    log_sum_exp,
    total_nll,
    user_nll,
    user_nll_gradient,
    window_nll,
)

from conftest import brute_total_nll, random_log, random_params


class TestLogSumExp:
    def test_singleton(self):
        assert log_sum_exp([0.0]) == 0.0

    def test_pair_no_overflow(self):
        assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2), rel=1e-14)

    def test_hand_value(self):
        assert log_sum_exp([1.0, 2.0, 3.0]) == pytest.approx(3.407606, abs=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_sum_exp([])

    def test_huge_inputs(self):
        assert math.isfinite(log_sum_exp([1e300, 1e300]))


def _single_event_setup():
    log = EventLog([(1.0, 0, 0)], 2.0, 1, 1)
    theta = UserParams(np.array([0.1]), np.array([0.5]))
    return log, theta


class TestUserNll:
    def test_single_event_hand_value(self):
        log, theta = _single_event_setup()
        expected = -(math.log(0.5) - (1.0 + 0.1 * (1 - math.exp(-1))))
        assert user_nll(log, 0, theta, beta=1.0) == pytest.approx(expected, rel=1e-12)

    def test_single_product_beta_terms_cancel(self):
        # with M = 1 the value is the plain unmarked Hawkes NLL for any beta
        rng = np.random.default_rng(31)
        log = random_log(rng, n_users=2, n_products=1, max_events=15)
        theta = UserParams(rng.uniform(0.01, 0.3, 2), rng.uniform(0.2, 1.0, 1))
        values = {beta: user_nll(log, 0, theta, beta) for beta in (0.1, 1.0, 50.0)}
        base = values[1.0]
        for v in values.values():
            assert v == pytest.approx(base, rel=1e-12)

    def test_zero_params_with_events_infeasible(self):
        log, _ = _single_event_setup()
        theta = UserParams(np.array([0.0]), np.array([0.0]))
        with pytest.raises(InfeasibleLikelihoodError):
            user_nll(log, 0, theta, beta=1.0)

    def test_features_cache_matches_rescan(self):
        # oracle equivalence: cached features vs from-scratch rescans
        rng = np.random.default_rng(37)
        for _ in range(20):
            log = random_log(rng, max_events=20)
            params = random_params(rng, log.n_users, log.n_products)
            total_cached = total_nll(log, params)
            total_brute = brute_total_nll(log, params, use_quad=False)
            assert total_cached == pytest.approx(total_brute, rel=1e-10)


class TestTotalNll:
    def test_empty_log_is_survival_only(self):
        rng = np.random.default_rng(41)
        params = random_params(rng, 3, 2)
        log = EventLog([], 4.0, 3, 2)
        assert total_nll(log, params) == pytest.approx(4.0 * params.mu.sum(), rel=1e-12)

    def test_silent_user_adds_compensator(self):
        mu = np.array([[0.5], [0.3]])
        alpha = np.zeros((2, 2))
        alpha[0, 0] = 0.1
        params = ModelParams(mu, alpha, SoftMaxMark(1.0))
        log = EventLog([(1.0, 0, 0)], 2.0, 2, 1)
        one_user = -(math.log(0.5) - (1.0 + 0.1 * (1 - math.exp(-1))))
        assert total_nll(log, params) == pytest.approx(one_user + 0.6, rel=1e-12)

    def test_decomposes_into_user_terms(self):
        rng = np.random.default_rng(43)
        for _ in range(10):
            log = random_log(rng)
            params = random_params(rng, log.n_users, log.n_products)
            per_user = sum(
                user_nll(log, u, UserParams(params.alpha[:, u], params.mu[u]), params.mark.beta)
                for u in range(log.n_users)
            )
            assert total_nll(log, params) == pytest.approx(per_user, rel=1e-12)
            # independent path through the windowed evaluator
            assert window_nll(log, params, 0.0, log.horizon) == pytest.approx(
                total_nll(log, params), rel=1e-10
            )

    def test_likelihood_factorization_single_stream(self):
        # one user, one product: exp(-NLL) equals the product of interevent
        # densities times the final survival factor
        rng = np.random.default_rng(47)
        log = random_log(rng, n_users=1, n_products=1, max_events=12)
        params = random_params(rng, 1, 1, alpha_high=0.4)
        mu, a = params.mu[0, 0], params.alpha[0, 0]

        def lam(t):
            mask = log.times < t
            return mu + (a * np.exp(-(t - log.times[mask]))).sum()

        def integral(t0, t1):
            mask = log.times < t1
            ts = log.times[mask]
            return mu * (t1 - t0) + a * float(
                (np.exp(-np.maximum(t0 - ts, 0)) - np.exp(-(t1 - ts))).sum()
            )

        log_lik = 0.0
        prev = 0.0
        for t in log.times:
            log_lik += math.log(lam(float(t))) - integral(prev, float(t))
            prev = float(t)
        log_lik -= integral(prev, log.horizon)
        assert math.exp(-total_nll(log, params)) == pytest.approx(
            math.exp(log_lik), rel=1e-8
        )


class TestGradient:
    @staticmethod
    def _fd_gradient(log, user, theta, beta, step=1e-6):
        packed = theta.pack()
        n, m = log.n_users, log.n_products
        grad = np.zeros_like(packed)
        for i in range(packed.size):
            hi, lo = packed.copy(), packed.copy()
            hi[i] += step
            lo[i] = max(lo[i] - step, 1e-12)
            f_hi = user_nll(log, user, UserParams.unpack(hi, n, m), beta)
            f_lo = user_nll(log, user, UserParams.unpack(lo, n, m), beta)
            grad[i] = (f_hi - f_lo) / (hi[i] - lo[i])
        return grad

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(53)
        checked = 0
        for _ in range(50):
            log = random_log(rng)
            if len(log) == 0:
                continue
            beta = float(rng.uniform(0.3, 3.0))
            theta = UserParams(
                rng.uniform(0.05, 0.4, log.n_users), rng.uniform(0.1, 1.0, log.n_products)
            )
            user = int(rng.integers(log.n_users))
            analytic = user_nll_gradient(log, user, theta, beta)
            numeric = self._fd_gradient(log, user, theta, beta)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)
            checked += 1
        assert checked >= 30

    def test_single_product_mark_terms_cancel(self):
        rng = np.random.default_rng(59)
        log = random_log(rng, n_users=2, n_products=1, max_events=10)
        theta = UserParams(rng.uniform(0.05, 0.2, 2), np.array([0.5]))
        features = build_features(log, 0)
        grad = user_nll_gradient(log, 0, theta, beta=1.0, features=features)
        # d/d mu = -sum 1/lambda + T regardless of beta
        g = features.b_totals @ theta.alpha_col + theta.mu_row.sum()
        expected_mu = -np.sum(1.0 / g) + log.horizon if len(g) else log.horizon
        assert grad[-1] == pytest.approx(expected_mu, rel=1e-10)
        grad2 = user_nll_gradient(log, 0, theta, beta=7.0)
        np.testing.assert_allclose(grad, grad2, rtol=1e-10)

    def test_silent_user_zero_alpha_pure_compensator(self):
        log = EventLog([(1.0, 0, 0)], 3.0, 2, 2)
        theta = UserParams(np.zeros(2) + 1e-9, np.array([0.2, 0.3]))
        grad = user_nll_gradient(log, 1, theta, beta=1.0)
        np.testing.assert_allclose(grad[2:], 3.0, rtol=1e-12)


class TestConvexity:
    def test_chord_inequality(self):
        rng = np.random.default_rng(61)
        log = random_log(rng, n_users=3, n_products=2, max_events=20)
        beta = 1.0
        n, m = log.n_users, log.n_products
        features = build_features(log, 0)
        for _ in range(200):
            a = rng.uniform(0.01, 1.0, n + m)
            b = rng.uniform(0.01, 1.0, n + m)
            for w in (0.25, 0.5, 0.75):
                mid = w * a + (1 - w) * b
                f_mid = user_nll(log, 0, UserParams.unpack(mid, n, m), beta, features)
                f_a = user_nll(log, 0, UserParams.unpack(a, n, m), beta, features)
                f_b = user_nll(log, 0, UserParams.unpack(b, n, m), beta, features)
                assert f_mid <= w * f_a + (1 - w) * f_b + 1e-9


class TestWindowNll:
    def test_additive_over_adjacent_windows(self):
        rng = np.random.default_rng(67)
        for _ in range(10):
            log = random_log(rng, max_events=25)
            params = random_params(rng, log.n_users, log.n_products)
            t1 = log.horizon * 0.4
            whole = window_nll(log, params, 0.0, log.horizon)
            split = window_nll(log, params, 0.0, t1) + window_nll(log, params, t1, log.horizon)
            assert split == pytest.approx(whole, abs=1e-9)

    def test_linear_mark_supported(self):
        rng = np.random.default_rng(71)
        log = random_log(rng, max_events=15)
        params = random_params(rng, log.n_users, log.n_products, beta=None)
        assert math.isfinite(window_nll(log, params, 0.0, log.horizon))

    def test_bad_window_rejected(self):
        log = EventLog([], 2.0, 1, 1)
        params = ModelParams(np.array([[0.5]]), np.zeros((1, 1)), SoftMaxMark(1.0))
        with pytest.raises(ValueError):
            window_nll(log, params, 1.5, 1.0)


class TestEventFeatures:
    def test_totals_match_row_sums(self):
        rng = np.random.default_rng(73)
        log = random_log(rng, max_events=20)
        feats = build_all_features(log)
        for u in range(log.n_users):
            f = feats[u]
            np.testing.assert_allclose(f.b_totals, f.b_mats.sum(axis=2), atol=1e-12)

    def test_snapshot_excludes_simultaneous_events(self):
        log = EventLog([(1.0, 0, 0), (1.0, 1, 0)], 2.0, 2, 1)
        feats = build_all_features(log)
        # the tied event by user 0 must not appear in user 1's snapshot
        assert feats[1].b_mats[0].sum() == 0.0

    def test_packed_layout(self):
        theta = UserParams(np.array([0.1, 0.2]), np.array([0.3]))
        np.testing.assert_array_equal(theta.pack(), [0.1, 0.2, 0.3])
        back = UserParams.unpack(theta.pack(), 2, 1)
        np.testing.assert_array_equal(back.alpha_col, theta.alpha_col)
        np.testing.assert_array_equal(back.mu_row, theta.mu_row)
