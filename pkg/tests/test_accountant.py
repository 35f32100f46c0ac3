import math

import numpy as np
import pytest
from scipy import integrate, stats

from respriv.accountant import (CalibrationInputs, DpBudget, InfeasibleNoise, RdpPoint,
                                achieved_epsilon_optimized_alpha, achieved_epsilon_strategy1,
                                achieved_epsilon_strategy2, calibrate_strategy1,
                                calibrate_strategy2, clopper_pearson_upper,
                                empirical_epsilon_lower_bound, epsilon_lower_bound_from_rates,
                                gaussian_rdp, rdp_compose, rdp_to_dp)


def renyi_divergence_quadrature(alpha, shift, sigma):
    """Independent oracle: numerical quadrature of the Renyi integral
    between N(shift, sigma^2) and N(0, sigma^2), in log space."""

    def integrand(x):
        log_q = -0.5 * (x / sigma) ** 2
        log_p = -0.5 * ((x - shift) / sigma) ** 2
        return math.exp(log_q + alpha * (log_p - log_q)) / (sigma * math.sqrt(2 * math.pi))

    center = alpha * shift  # the integrand is a Gaussian bump around alpha*shift
    total, _ = integrate.quad(integrand, center - 40 * sigma, center + 40 * sigma, limit=200)
    return math.log(total) / (alpha - 1.0)


class TestGaussianRdp:
    def test_basic_value(self):
        assert gaussian_rdp(2.0, 1.0, 1.0).eps_rdp == pytest.approx(1.0, abs=1e-15)

    def test_zero_sensitivity(self):
        for alpha in (1.5, 2.0, 8.0):
            for sigma in (0.5, 2.0):
                assert gaussian_rdp(alpha, 0.0, sigma).eps_rdp == 0.0

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            gaussian_rdp(2.0, 1.0, 0.0)

    @pytest.mark.parametrize("alpha", [1.5, 2.0, 4.0, 8.0])
    @pytest.mark.parametrize("shift", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_matches_quadrature(self, alpha, shift, sigma):
        expected = renyi_divergence_quadrature(alpha, shift, sigma)
        assert gaussian_rdp(alpha, shift, sigma).eps_rdp == pytest.approx(expected, abs=1e-6)


class TestCompose:
    def test_pair(self):
        out = rdp_compose([RdpPoint(2.0, 0.3), RdpPoint(2.0, 0.7)])
        assert out == RdpPoint(2.0, 1.0)

    def test_single(self):
        assert rdp_compose([RdpPoint(3.0, 0.4)]) == RdpPoint(3.0, 0.4)

    def test_k_identical(self):
        pts = [RdpPoint(2.0, 0.25)] * 8
        assert rdp_compose(pts).eps_rdp == pytest.approx(2.0, abs=1e-15)

    def test_mixed_alpha_rejected(self):
        with pytest.raises(ValueError):
            rdp_compose([RdpPoint(2.0, 0.1), RdpPoint(3.0, 0.1)])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rdp_compose([])


class TestRdpToDp:
    def test_log_term_only(self):
        assert rdp_to_dp(RdpPoint(2.0, 0.0), math.exp(-1.0)) == pytest.approx(1.0, rel=1e-12)

    def test_high_precision_value(self):
        # 1 + ln(1e5) evaluated independently
        expected = 1.0 + math.log(10 ** 5)
        assert rdp_to_dp(RdpPoint(2.0, 1.0), 1e-5) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(12.512925, abs=1e-6)

    def test_monotone_decreasing_in_delta(self):
        deltas = [1e-8, 1e-5, 1e-2, 0.5, 0.999999]
        values = [rdp_to_dp(RdpPoint(2.0, 0.0), d) for d in deltas]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] > 0.0  # epsilon -> 0+ as delta -> 1-

    def test_monotone_increasing_in_eps(self):
        assert rdp_to_dp(RdpPoint(2.0, 2.0), 1e-5) > rdp_to_dp(RdpPoint(2.0, 1.0), 1e-5)

    def test_delta_range(self):
        with pytest.raises(ValueError):
            rdp_to_dp(RdpPoint(2.0, 1.0), 1.5)


def integer_ratio_inputs(T=100, b=10, N=100, M=4, R=3.0, G=2.0):
    # T*b/N integer so the participation count equals the exact ratio
    return CalibrationInputs(T=T, b=b, N=N, M=M, R=R, G=G)


class TestCalibrateStrategy1:
    def test_closed_form_plug_in(self):
        inputs = integer_ratio_inputs()
        report = calibrate_strategy1(DpBudget(2.0, math.exp(-1.0), 0.5), inputs)
        assert report.alpha == pytest.approx(2.0, rel=1e-12)
        # alpha=2, lambda*eps=1, k=10: pi_min = R*sqrt(2*10*2/1) = 2R*sqrt(10)
        assert report.pi_min == pytest.approx(2.0 * inputs.R * math.sqrt(10.0), rel=1e-12)
        assert report.gamma_min == pytest.approx(2.0 * inputs.G * math.sqrt(10.0), rel=1e-12)
        assert report.whole_model_epsilon == 2.0

    def test_doubling_T_scales_by_sqrt2(self):
        budget = DpBudget(2.0, math.exp(-1.0), 0.5)
        r1 = calibrate_strategy1(budget, integer_ratio_inputs(T=100))
        r2 = calibrate_strategy1(budget, integer_ratio_inputs(T=200))
        assert r2.pi_min == pytest.approx(math.sqrt(2.0) * r1.pi_min, rel=1e-12)
        assert r2.gamma_min == pytest.approx(math.sqrt(2.0) * r1.gamma_min, rel=1e-12)

    def test_per_layer_epsilons_exact_and_monotone(self):
        lam, eps = 0.3, 4.0
        report = calibrate_strategy1(DpBudget(eps, 1e-5, lam), integer_ratio_inputs(M=6))
        assert len(report.per_layer_epsilons) == 7  # six blocks plus the head
        for i, eps_i in report.per_layer_epsilons:
            assert eps_i == (lam / (i + 1.0) + (1.0 - lam)) * eps
        values = [e for _, e in report.per_layer_epsilons]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert values[0] == pytest.approx(eps, rel=1e-12)
        assert all((1.0 - lam) * eps <= v <= eps for v in values)

    def test_participation_count_rounds_up(self):
        inputs = CalibrationInputs(T=100, b=128, N=39952, M=4, R=30.0, G=30.0)
        assert inputs.participations == 1  # 100*128/39952 = 0.32 -> 1

    def test_report_text_echoes_inputs(self):
        report = calibrate_strategy1(DpBudget(2.0, 1e-5, 0.5), integer_ratio_inputs())
        text = report.to_text()
        for key in ("T = 100", "N = 100", "pi_min", "gamma_min", "layer_epsilon_00"):
            assert key in text


class TestAchievedEpsilon:
    def test_round_trip_random_grid(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            eps = float(rng.uniform(0.05, 50.0))
            delta = float(rng.uniform(1e-8, 0.5))
            lam = float(rng.uniform(0.05, 0.95))
            inputs = CalibrationInputs(
                T=int(rng.integers(10, 5000)), b=int(rng.integers(1, 100)),
                N=int(rng.integers(100, 100000)), M=int(rng.integers(1, 10)),
                R=float(rng.uniform(0.5, 50)), G=float(rng.uniform(0.5, 50)))
            report = calibrate_strategy1(DpBudget(eps, delta, lam), inputs)
            back = achieved_epsilon_strategy1(report.gamma_min, report.pi_min,
                                              delta, lam, inputs)
            assert back == pytest.approx(eps, rel=1e-6)

    def test_round_trip_strategy2(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            eps = float(rng.uniform(0.05, 50.0))
            delta = float(rng.uniform(1e-8, 0.5))
            lam = float(rng.uniform(0.05, 0.95))
            inputs = CalibrationInputs(
                T=10, b=1, N=100, M=int(rng.integers(1, 10)),
                R=1.0, G=1.0, B=float(rng.uniform(0.5, 5)),
                eta=float(rng.uniform(0.01, 1.0)), a=float(rng.uniform(0.5, 5)))
            cal = calibrate_strategy2(DpBudget(eps, delta, lam), inputs)
            back = achieved_epsilon_strategy2(cal.gamma_min, cal.pi_min, delta, lam, inputs)
            assert back == pytest.approx(eps, rel=1e-6)

    def test_huge_noise_gives_small_epsilon(self):
        inputs = integer_ratio_inputs()
        eps = achieved_epsilon_strategy1(1e12, 1e12, 1e-5, 0.5, inputs)
        assert eps < 1e-3

    def test_smaller_gamma_needs_larger_epsilon(self):
        inputs = integer_ratio_inputs()
        hi = achieved_epsilon_strategy1(0.5, 10.0, 1e-5, 0.5, inputs)
        lo = achieved_epsilon_strategy1(5.0, 10.0, 1e-5, 0.5, inputs)
        assert hi > lo

    def test_infeasible_noise_raises(self):
        with pytest.raises(InfeasibleNoise):
            achieved_epsilon_strategy1(1e-30, 1e-30, 1e-5, 0.5, integer_ratio_inputs())

    def test_optimized_alpha_never_worse(self):
        inputs = integer_ratio_inputs()
        gamma = pi = 20.0
        fixed = achieved_epsilon_strategy1(gamma, pi, 1e-5, 0.5, inputs)
        best = achieved_epsilon_optimized_alpha(gamma, pi, 1e-5, inputs, strategy=1)
        assert best <= fixed * (1.0 + 1e-9)


class TestCalibrateStrategy2:
    def test_plug_in(self):
        inputs = CalibrationInputs(T=10, b=1, N=100, M=4, R=1.0, G=1.0,
                                   B=2.0, eta=0.5, a=3.0)
        cal = calibrate_strategy2(DpBudget(2.0, math.exp(-1.0), 0.5), inputs)
        assert cal.alpha == pytest.approx(2.0, rel=1e-12)
        # alpha=2, lambda*eps=1: gamma_min=(B/eta)sqrt(2*2*4)=4(B/eta), pi_min=4a
        assert cal.gamma_min == pytest.approx((2.0 / 0.5) * 4.0, rel=1e-12)
        assert cal.pi_min == pytest.approx(3.0 * 4.0, rel=1e-12)

    def test_sqrt_M_scaling(self):
        budget = DpBudget(2.0, 1e-5, 0.5)
        base = dict(T=10, b=1, N=100, R=1.0, G=1.0, B=1.0, eta=0.1, a=1.0)
        c1 = calibrate_strategy2(budget, CalibrationInputs(M=1, **base))
        c4 = calibrate_strategy2(budget, CalibrationInputs(M=4, **base))
        assert c4.gamma_min == pytest.approx(2.0 * c1.gamma_min, rel=1e-12)
        assert c4.pi_min == pytest.approx(2.0 * c1.pi_min, rel=1e-12)

    def test_small_B_shrinks_gamma(self):
        # B=0 is outside the validated domain; the limit is linear in B
        budget = DpBudget(2.0, 1e-5, 0.5)
        base = dict(T=10, b=1, N=100, M=4, R=1.0, G=1.0, eta=0.1, a=1.0)
        tiny = calibrate_strategy2(budget, CalibrationInputs(B=1e-12, **base))
        one = calibrate_strategy2(budget, CalibrationInputs(B=1.0, **base))
        assert tiny.gamma_min == pytest.approx(1e-12 * one.gamma_min, rel=1e-9)


class TestEmpiricalLowerBound:
    def test_random_guess_certifies_nothing(self):
        assert epsilon_lower_bound_from_rates(0.5, 0.5, 0.0) == 0.0

    def test_direct_evaluation(self):
        assert epsilon_lower_bound_from_rates(0.1, 0.1, 0.0) == pytest.approx(
            math.log(0.9 / 0.1), rel=1e-12)
        assert math.log(0.9 / 0.1) == pytest.approx(2.1972, abs=1e-4)

    def test_monotone_in_fpr(self):
        values = [epsilon_lower_bound_from_rates(f, 0.2, 1e-5) for f in (0.3, 0.1, 0.01, 1e-4)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_clopper_pearson_zero_successes_closed_form(self):
        # P(X = 0) = (1-p)^n = 1-conf at the upper bound
        n, conf = 50, 0.95
        expected = 1.0 - (1.0 - conf) ** (1.0 / n)
        assert clopper_pearson_upper(0, n, conf) == pytest.approx(expected, rel=1e-10)

    def test_clopper_pearson_all_failures(self):
        assert clopper_pearson_upper(10, 10, 0.95) == 1.0

    def test_clopper_pearson_monotone(self):
        vals = [clopper_pearson_upper(k, 40, 0.95) for k in range(0, 41, 8)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_clopper_pearson_covers_truth(self):
        # frequentist sanity: the bound exceeds the MLE proportion
        for k, n in ((3, 100), (17, 40), (0, 7)):
            assert clopper_pearson_upper(k, n, 0.95) > k / n

    def test_full_bound_from_counts(self):
        eps = empirical_epsilon_lower_bound(5, 5, 100, 100, delta=1e-5)
        fpr_hi = clopper_pearson_upper(5, 100, 0.95)
        expected = math.log((1.0 - 1e-5 - fpr_hi) / fpr_hi)
        assert eps == pytest.approx(expected, rel=1e-12)

    def test_perfect_attack_large_bound(self):
        weak = empirical_epsilon_lower_bound(20, 20, 100, 100, delta=0.0)
        strong = empirical_epsilon_lower_bound(0, 0, 1000, 1000, delta=0.0)
        assert strong > weak > 0.0

    def test_beta_quantile_matches_scipy(self):
        assert clopper_pearson_upper(7, 30, 0.9) == pytest.approx(
            float(stats.beta.ppf(0.9, 8, 23)), rel=1e-12)
