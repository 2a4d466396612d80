import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import closed_form_moments, single_mode_plan
from hspsmux.calibration import calibrate_gain, expected_rate_khz, power_for_rate
from hspsmux.feedforward import trigger_survival_probability
from hspsmux.losses import LossBudget
from hspsmux.oracle import enumerate_moments, thermal_pmf, truncation_mass
from hspsmux.simulator import (
    MOMENT_NAMES,
    Arrangement,
    build_plan,
    default_detectors,
    estimate_moments,
    side_click_probabilities,
)


def rates(model, power):
    m = model.with_power(power)
    arrs = [Arrangement.mux()] + [Arrangement.single(k) for k in range(m.grid.mode_count)]
    return [enumerate_moments(build_plan(m, a)).rate_khz()[0] for a in arrs]


def ideal_shift(model):
    return replace(model, feedforward=replace(model.feedforward, shift_efficiency=1.0, awg_f3db=math.inf))


class TestPlan:
    def test_efficiencies_from_the_loss_tables(self, model):
        # optical dB sums per arm plus the detector share, evaluated by hand
        signal_db = 2.50 + 1.83 + 0.40 + 4.56 + 5.30 + 2.20
        herald_f_i2_db = 2.50 + 2.21 + 4.58 + 1.80
        herald_f_i1_db = herald_f_i2_db + 1.0
        plan = build_plan(model.with_power(4.0), Arrangement.mux())
        assert model.signal_efficiency() * model.detector("A").efficiency == pytest.approx(10 ** (-signal_db / 10))
        assert plan.qa[0, 1] == pytest.approx(0.5 * 10 ** (-signal_db / 10))
        assert plan.route[1, 1] == pytest.approx(10 ** (-herald_f_i2_db / 10), rel=1e-9)
        assert plan.route[0, 0] == pytest.approx(10 ** (-herald_f_i1_db / 10), rel=1e-9)

    def test_background_ratio(self, model):
        leak = 2 * 2.0 ** (-((2 * 12.5 / 12.5) ** 2))  # two neighbours through the 12.5 GHz output filter
        assert model.background_ratio() == pytest.approx(1 / (6.5 / 12.5 * (1 + leak)) - 1, rel=1e-12)
        assert replace(model, background=False).background_ratio() == 0.0

    def test_single_mode_arrangement(self, model):
        plan = build_plan(model.with_power(4.0), Arrangement.single(0))
        assert plan.herald_channels.tolist() == [True, False, False]
        assert not plan.shift_enabled
        # the output filter now sits on mode 0
        assert plan.qa[0, 0] > 10 * plan.qa[0, 1]

    def test_survival_uses_side_trigger_rate(self, model):
        plan = build_plan(model.with_power(16.98), Arrangement.mux())
        side = side_click_probabilities(plan.mu, plan.route, plan.herald_dark)
        khz = (side[0] + side[2]) * plan.bin_rate / 1e3
        assert plan.trigger_rate_khz == pytest.approx(khz)
        assert plan.survival == pytest.approx(trigger_survival_probability(khz, model.feedforward))

    def test_side_clicks_exact_for_one_mode(self):
        mu, eta, d = 0.3, 0.4, 0.01
        got = side_click_probabilities([mu], np.array([[eta]]), np.array([d]))[0]
        assert got == pytest.approx(1 - (1 - d) / (1 + mu * eta))

    def test_invalid_arrangements(self, model):
        with pytest.raises(ValueError):
            Arrangement(True, 1)
        with pytest.raises(IndexError):
            build_plan(model, Arrangement.single(5))

    def test_mode_count_consistency(self, model):
        with pytest.raises(ValueError):
            replace(model, losses=LossBudget.lossless(2))


class TestOracle:
    def test_thermal_pmf(self):
        np.testing.assert_array_equal(thermal_pmf(0.0, 3), [1, 0, 0, 0])
        np.testing.assert_allclose(thermal_pmf(1.0, 2), [0.5, 0.25, 0.125])

    def test_truncation_mass(self):
        plan = single_mode_plan(1.0)
        assert truncation_mass(plan, 2) == pytest.approx(0.125)

    @settings(max_examples=25, deadline=None)
    @given(
        mu=st.floats(1e-4, 0.3),
        eta_h=st.floats(0.01, 1.0),
        qa=st.floats(0.0, 0.5),
        qb=st.floats(0.0, 0.5),
        dark=st.floats(0.0, 1e-3),
        bg=st.floats(0.0, 2.0),
    )
    def test_matches_generating_function(self, mu, eta_h, qa, qb, dark, bg):
        args = dict(eta_h=eta_h, qa=qa, qb=qb, dark_h=dark, dark_a=dark / 2, dark_b=dark / 3, mu_bg=bg * mu)
        exact = closed_form_moments(mu, **args)
        got = enumerate_moments(single_mode_plan(mu, **args), n_max=14, bg_max=14)
        for k in MOMENT_NAMES:
            assert got[k] == pytest.approx(exact[k], rel=1e-6, abs=1e-15)


class TestImportanceSampling:
    def test_single_mode_against_closed_form(self):
        args = dict(eta_h=0.5, qa=0.2, qb=0.2, dark_h=1e-5, dark_a=1e-5, dark_b=1e-5, mu_bg=1e-3)
        est = estimate_moments(single_mode_plan(0.01, **args), 1 << 19, seed=1)
        exact = closed_form_moments(0.01, **args)
        for i, k in enumerate(MOMENT_NAMES):
            sd = math.sqrt(est.cov[i, i])
            assert abs(est[k] - exact[k]) < 4.5 * sd + 1e-15, k

    @pytest.mark.parametrize("power", [3.0, 16.98])
    @pytest.mark.parametrize("arr", [Arrangement.mux(), Arrangement.single(0), Arrangement.single(1)])
    def test_against_enumeration(self, model, power, arr):
        plan = build_plan(model.with_power(power), arr)
        est = estimate_moments(plan, 1 << 19, seed=2)
        exact = enumerate_moments(plan)
        for i, k in enumerate(MOMENT_NAMES):
            assert abs(est[k] - exact[k]) < 4.5 * math.sqrt(est.cov[i, i]) + 1e-18, k
        g, ge = est.g2()
        assert abs(g - exact.g2()[0]) < 4.5 * ge

    def test_independent_of_batch_order(self, model):
        plan = build_plan(model.with_power(8.0), Arrangement.mux())
        a = estimate_moments(plan, 1 << 16, seed=9)
        b = estimate_moments(plan, 1 << 16, seed=9)
        np.testing.assert_array_equal(a.values, b.values)

    def test_small_mu_law(self, model):
        # heralded g2 grows linearly with the pair number; slope checked against the oracle
        arr = Arrangement.single(1)
        powers = [2.0, 3.0, 4.0]
        plans = [build_plan(model.with_power(p), arr) for p in powers]
        mus = [p.mu[0] for p in plans]
        est = [estimate_moments(p, 1 << 20, seed=3).g2()[0] for p in plans]
        exact = [enumerate_moments(p).g2()[0] for p in plans]
        s_est, s_exact = np.polyfit(mus, est, 1)[0], np.polyfit(mus, exact, 1)[0]
        assert s_est == pytest.approx(s_exact, rel=0.10)


class TestFeedForwardInvariants:
    def test_ideal_shift_sums_the_single_modes(self, model):
        r = rates(ideal_shift(model), 2.0)
        assert r[0] == pytest.approx(sum(r[1:]), rel=2e-3)

    def test_ideal_limit(self, model):
        ideal = replace(ideal_shift(model), losses=LossBudget.lossless(), detectors=default_detectors(3, 0.0))
        r = rates(ideal, 1.0)
        assert r[0] / np.mean(r[1:]) == pytest.approx(3.0, abs=0.05)
        assert r[0] / r[2] == pytest.approx(3.0, abs=0.05)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 6.0), st.floats(0.5, 30.0))
    def test_enhancement_never_exceeds_mode_count(self, model, eff, excess, power):
        m = replace(
            model,
            feedforward=replace(model.feedforward, shift_efficiency=eff),
            losses=replace(model.losses, narrowband_excess=(excess, 0.0, 0.0)),
        )
        r = rates(m, power)
        assert r[0] / r[2] <= 3.0 + 1e-9
        assert r[0] / np.mean(r[1:]) <= 3.0 + 1e-9

    def test_enhancement_falls_with_heralding_rate(self, model):
        powers = [2.0, 8.0, 16.0, 30.0, 60.0]
        enh, herald = [], []
        for p in powers:
            r = rates(model, p)
            enh.append(r[0] / np.mean(r[1:]))
            herald.append(build_plan(model.with_power(p), Arrangement.mux()).trigger_rate_khz)
        assert np.all(np.diff(herald) > 0)
        assert np.all(np.diff(enh) < 1e-5)
        assert enh[-1] < 0.6 * enh[0]


class TestCalibration:
    def test_preset_gain_is_the_calibrated_one(self, model):
        assert calibrate_gain(model) == pytest.approx(model.source.gain_coefficient, rel=1e-4)

    def test_calibration_point(self, model):
        assert expected_rate_khz(model.with_power(16.98), Arrangement.mux()) == pytest.approx(23.6, rel=0.10)

    def test_power_for_rate_inverts(self, model):
        p = power_for_rate(model, Arrangement.single(1), 3.1)
        assert expected_rate_khz(model.with_power(p), Arrangement.single(1)) == pytest.approx(3.1, rel=1e-6)

    def test_car_times_rate_is_flat_at_low_power(self, model):
        plans = [build_plan(model.with_power(p), Arrangement.mux()) for p in (2.0, 3.0, 4.0, 6.0)]
        m = [enumerate_moments(p) for p in plans]
        slope = np.polyfit(np.log([x.rate_khz()[0] for x in m]), np.log([x.car()[0] for x in m]), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.1)
