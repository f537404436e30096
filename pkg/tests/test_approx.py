import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm, skewnorm

from leakq import (
    MAX_SKEW_NORMAL_SKEWNESS,
    ConstPlusExpDemand,
    GaussianChargeModel,
    MgfSpec,
    QueueConfig,
    ReferenceMoments,
    classify_regime,
    clt_probe,
    fit_skew_normal,
    gaussian_loss_probs,
    gaussian_theta_star,
    kr_gap_bound,
    make_rng,
    martingale_bounds,
    moments,
    reference_moments,
    reference_path,
    sample_reference_steady_state,
    skew_normal_loss_probs,
    theta_star,
)

# the 20%-per-day leakage scenario with E[delta] = 200 Wh, Var = 1 kWh^2
GAMMA = 0.0093
REF_MEAN = 21505.376344086022
REF_VAR = 54014608.79109393
REF_STD = 7349.463163462617
# standard normal tails computed independently via erfc
P_UNDER = 0.001716118727231435
P_OVER_40K = 0.005927032434581618


class TestReferenceMoments:
    def test_published_mean(self):
        ref = reference_moments(200.0, 1.0, 0.0, GAMMA)
        assert ref.mean_wh == pytest.approx(21500.0, rel=0.005)
        assert ref.mean_wh == pytest.approx(REF_MEAN, rel=1e-12)

    def test_variance_scaling(self):
        ref = reference_moments(0.0, 1e6, 0.0, GAMMA)
        assert ref.variance_wh2 == pytest.approx(REF_VAR, rel=1e-12)
        assert ref.std_wh == pytest.approx(7349.5, rel=1e-3)

    def test_skewness_multiplier(self):
        ref = reference_moments(0.0, 1.0, 1.0, GAMMA)
        assert ref.skewness == pytest.approx(0.0911, abs=5e-5)

    def test_gamma_zero_rejected(self):
        with pytest.raises(ValueError):
            reference_moments(200.0, 1.0, 0.0, 0.0)

    def test_agrees_with_series_sampler(self):
        # i.i.d. draws of the discounted series vs the closed-form moments
        gamma = 0.02
        mean_d, std_d = 50.0, 300.0

        def sampler(rng, n):
            return std_d * (rng.standard_exponential(n) - 1.0) + mean_d

        draws = sample_reference_steady_state(sampler, gamma, 200_000, make_rng(7))
        ref = reference_moments(mean_d, std_d**2, 2.0, gamma)
        m = moments(draws)
        n = draws.size
        assert abs(m.mean - ref.mean_wh) < 4.0 * ref.std_wh / math.sqrt(n)
        assert abs(m.variance - ref.variance_wh2) < 6.0 * ref.variance_wh2 / math.sqrt(n)
        assert abs(m.skewness - ref.skewness) < 4.0 * math.sqrt(6.0 / n) + 0.01

    def test_agrees_with_reference_path_run(self):
        # second, independent route: a long autocorrelated path
        gamma = 0.05
        cfg = QueueConfig(math.inf, gamma, 0.0)
        deltas = GaussianChargeModel(10.0, 40.0).sample(make_rng(3), 400_000)
        path = reference_path(cfg, deltas)[5_000:]
        ref = reference_moments(10.0, 1600.0, 0.0, gamma)
        # effective sample size is about n * gamma / 2 for this chain
        n_eff = path.size * gamma / 2.0
        assert abs(path.mean() - ref.mean_wh) < 4.0 * ref.std_wh / math.sqrt(n_eff)
        assert np.var(path, ddof=1) == pytest.approx(ref.variance_wh2, rel=0.05)

    def test_agrees_with_wind_minus_exp_demand_sampler(self):
        from leakq import (
            ConstPlusExpDemand,
            SupplyMinusDemand,
            WeibullWind,
            WindSupplyModel,
            WindTurbineParams,
        )

        turbine = WindTurbineParams(1.0, 3.0, 12.0, 25.0, 10.8, 0.5)
        source = SupplyMinusDemand(
            WindSupplyModel(turbine, WeibullWind(7.0, 3.0)), ConstPlusExpDemand(750.0, 50.0)
        )
        delta = source.moments()
        gamma = 0.02
        ref = reference_moments(delta.mean_wh, delta.var_wh2, delta.skewness, gamma)
        draws = sample_reference_steady_state(
            lambda rng, n: source.generate(rng, n), gamma, 20_000, make_rng(6)
        )
        m = moments(draws)
        n = draws.size
        assert abs(m.mean - ref.mean_wh) < 4.0 * ref.std_wh / math.sqrt(n)
        assert abs(m.variance - ref.variance_wh2) < 6.0 * ref.variance_wh2 / math.sqrt(n)
        assert abs(m.skewness - ref.skewness) < 4.0 * math.sqrt(6.0 / n) + 0.01


class TestRegime:
    REF = ReferenceMoments(21500.0, REF_VAR)

    def test_leakage_dominated(self):
        assert classify_regime(40_000.0, self.REF).label == "leakage_dominated"

    def test_capacity_dominated(self):
        assert classify_regime(10_000.0, self.REF).label == "capacity_dominated"

    def test_boundary_at_equality(self):
        assert classify_regime(21_500.0, self.REF).label == "boundary"

    def test_default_tolerance_is_one_percent(self):
        assert classify_regime(40_000.0, self.REF).tolerance_wh == pytest.approx(215.0)


class TestGaussianLossProbs:
    REF = ReferenceMoments(REF_MEAN, REF_VAR)

    def test_underflow_tail(self):
        p_u, _ = gaussian_loss_probs(40_000.0, self.REF)
        assert p_u == pytest.approx(P_UNDER, rel=1e-9)

    def test_overflow_tail(self):
        _, p_o = gaussian_loss_probs(40_000.0, self.REF)
        assert p_o == pytest.approx(P_OVER_40K, rel=1e-9)

    def test_infinite_capacity(self):
        _, p_o = gaussian_loss_probs(math.inf, self.REF)
        assert p_o == 0.0

    def test_underflow_independent_of_capacity_and_overflow_monotone(self):
        p1 = gaussian_loss_probs(30_000.0, self.REF)
        p2 = gaussian_loss_probs(50_000.0, self.REF)
        assert p1[0] == p2[0]
        assert p2[1] < p1[1]

    def test_degenerate_variance(self):
        assert gaussian_loss_probs(10.0, ReferenceMoments(-1.0, 0.0)) == (1.0, 0.0)
        assert gaussian_loss_probs(10.0, ReferenceMoments(20.0, 0.0)) == (0.0, 1.0)


class TestSkewNormal:
    def test_zero_skew_equals_gaussian(self):
        ref = ReferenceMoments(REF_MEAN, REF_VAR, 0.0)
        sn = skew_normal_loss_probs(40_000.0, ref)
        ga = gaussian_loss_probs(40_000.0, ref)
        assert sn[0] == pytest.approx(ga[0], rel=1e-9)
        assert sn[1] == pytest.approx(ga[1], rel=1e-9)

    def test_fit_round_trips_through_scipy_moments(self):
        for skew in (-0.6, -0.1, 0.15, 0.8):
            xi, omega, shape = fit_skew_normal(100.0, 49.0, skew)
            m, v, s = skewnorm.stats(shape, loc=xi, scale=omega, moments="mvs")
            assert float(m) == pytest.approx(100.0, rel=1e-9)
            assert float(v) == pytest.approx(49.0, rel=1e-9)
            assert float(s) == pytest.approx(skew, rel=1e-6, abs=1e-9)

    def test_mean_shift_moves_both_tails_together(self):
        ref = ReferenceMoments(1000.0, 2500.0, 0.4)
        shifted = ReferenceMoments(1250.0, 2500.0, 0.4)
        p_u, p_o = skew_normal_loss_probs(2000.0, ref)
        q_u, q_o = skew_normal_loss_probs(2250.0, shifted)
        assert q_u < p_u  # farther from the lower threshold
        assert q_o == pytest.approx(p_o, rel=1e-9)  # same distance to the cap

    def test_out_of_range_skewness_instructs_fallback(self):
        with pytest.raises(ValueError, match="Gaussian"):
            fit_skew_normal(0.0, 1.0, 1.2)
        assert MAX_SKEW_NORMAL_SKEWNESS == pytest.approx(0.99527, abs=1e-5)


class TestKrGapBound:
    def test_vanishes_for_huge_capacity_and_mean(self):
        ref = ReferenceMoments(1e9, 1.0)
        assert kr_gap_bound(math.inf, ref, 0.01) == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_half_moments(self):
        ref = ReferenceMoments(0.0, 100.0)
        want = 10.0 * math.sqrt(2.0 / math.pi) / 0.1
        assert kr_gap_bound(0.0, ref, 0.1) == pytest.approx(want, rel=1e-12)

    def test_against_quadrature(self):
        ref = ReferenceMoments(REF_MEAN, REF_VAR)
        got = kr_gap_bound(40_000.0, ref, GAMMA)
        low = quad(lambda x: norm.cdf((x - ref.mean_wh) / ref.std_wh), -np.inf, 0.0)[0]
        high = quad(lambda x: norm.sf((x - ref.mean_wh) / ref.std_wh), 40_000.0, np.inf)[0]
        assert got == pytest.approx((low + high) / GAMMA, rel=1e-6)

    def test_gamma_zero_rejected(self):
        with pytest.raises(ValueError):
            kr_gap_bound(1.0, ReferenceMoments(0.0, 1.0), 0.0)


class TestThetaStar:
    def test_gaussian_closed_form(self):
        spec = MgfSpec.gaussian(200.0, math.sqrt(5000.0))
        got = theta_star(spec, GAMMA, 1000.0)
        want = gaussian_theta_star(200.0, 5000.0, GAMMA, 1000.0)
        assert want == pytest.approx(2.0 * (200.0 - 9.3) / 5000.0, rel=1e-12)
        assert got == pytest.approx(want, rel=1e-8)

    def test_fixed_point_residual(self):
        spec = MgfSpec.gaussian(200.0, math.sqrt(5000.0))
        got = theta_star(spec, GAMMA, 1000.0)
        assert abs(math.exp(got * GAMMA * 1000.0 + spec.log_mgf(-got)) - 1.0) < 1e-8

    def test_boundary_rejected(self):
        # mean at or below gamma*C leaves no positive tilt
        spec = MgfSpec.gaussian(9.0, 10.0)
        with pytest.raises(ValueError, match="capacity-dominated"):
            theta_star(spec, GAMMA, 1000.0)

    def test_sample_based_close_to_closed_form(self):
        x = GaussianChargeModel(200.0, 1000.0).sample(make_rng(3), 100_000)
        got = theta_star(MgfSpec.from_samples(x), GAMMA, 1000.0)
        want = gaussian_theta_star(200.0, 1e6, GAMMA, 1000.0)
        assert got == pytest.approx(want, rel=0.02)

    def test_exp_demand_family_has_finite_pole(self):
        spec = MgfSpec.gaussian_supply_exp_demand(1000.0, 50.0, ConstPlusExpDemand(350.0, 50.0))
        got = theta_star(spec, GAMMA, 1000.0)
        assert 0.0 < got < 1.0 / 50.0
        assert abs(math.exp(got * GAMMA * 1000.0 + spec.log_mgf(-got)) - 1.0) < 1e-8


class TestMartingaleBounds:
    def test_closed_form_values(self):
        rep = martingale_bounds(0.005, 1000.0, ConstPlusExpDemand(0.0, 50.0))
        assert rep.basic_bound == pytest.approx(math.exp(-5.0), rel=1e-12)
        assert rep.sharpened_bound == pytest.approx(math.exp(-5.0) * 0.75, rel=1e-12)

    def test_constant_demand_no_sharpening_gain(self):
        rep = martingale_bounds(0.005, 1000.0, ConstPlusExpDemand(400.0, 0.0))
        assert rep.sharpened_bound == rep.basic_bound

    def test_sharpened_never_exceeds_basic(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            theta = float(rng.uniform(1e-4, 0.01))
            cap = float(rng.uniform(100, 3000))
            demand = ConstPlusExpDemand(float(rng.uniform(0, 500)), float(rng.uniform(0, 80)))
            rep = martingale_bounds(theta, cap, demand)
            if rep.sharpened_bound is not None:
                assert rep.sharpened_bound <= rep.basic_bound

    def test_diverging_conditional_mgf_is_omitted(self):
        rep = martingale_bounds(0.03, 1000.0, ConstPlusExpDemand(0.0, 50.0))
        assert rep.sharpened_bound is None
        assert any("omitted" in note for note in rep.notes)

    def test_sample_demand_grid_matches_closed_form(self):
        demand = ConstPlusExpDemand(750.0, 50.0)
        samples = demand.sample(make_rng(11), 200_000)
        closed = martingale_bounds(0.005, 1000.0, demand)
        sampled = martingale_bounds(0.005, 1000.0, samples)
        assert sampled.sharpened_bound == pytest.approx(closed.sharpened_bound, rel=0.05)
        assert sampled.sharpened_bound <= sampled.basic_bound

    def test_rejects_nonpositive_theta(self):
        with pytest.raises(ValueError):
            martingale_bounds(0.0, 1000.0)


class TestCltProbe:
    def test_gaussian_charge_is_already_normal(self):
        def sampler(rng, n):
            return 200.0 + 1000.0 * rng.standard_normal(n)

        results = clt_probe(sampler, 200.0, 1e6, [0.1], 20_000, master_seed=1)
        dkw = math.sqrt(math.log(2.0 / 0.05) / (2.0 * 20_000))
        assert results[0][1] < 2.0 * dkw

    def test_skewed_charge_approaches_normal_as_gamma_shrinks(self):
        def sampler(rng, n):
            return 1000.0 * (rng.standard_exponential(n) - 1.0) + 200.0

        results = clt_probe(sampler, 200.0, 1e6, [0.1, 0.03], 20_000, master_seed=2)
        assert results[0][1] > results[1][1]

    def test_truncation_depth_doubling_is_invisible(self):
        def sampler(rng, n):
            return rng.standard_exponential(n)

        a = sample_reference_steady_state(sampler, 0.1, 500, make_rng(9), tail_rel=1e-12)
        b = sample_reference_steady_state(sampler, 0.1, 500, make_rng(9), tail_rel=1e-24)
        assert np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-6)) < 1e-9
