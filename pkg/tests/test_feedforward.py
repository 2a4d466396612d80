import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hspsmux.feedforward import (
    NO_SHIFT,
    SHIFT_DOWN,
    SHIFT_UP,
    FeedForwardConfig,
    ShiftOutcome,
    apply_feedforward,
    channel_actions,
    frequency_shift_magnitude,
    trigger_survival_probability,
)
from hspsmux.spectral import F_S0, F_SMINUS, F_SPLUS, ModeGrid

IDEAL = FeedForwardConfig(shift_efficiency=1.0, awg_f3db=math.inf)
rng = np.random.default_rng


class TestShiftMagnitude:
    def test_no_ramp(self):
        assert frequency_shift_magnitude(0.0, 1.4) == 0.0

    def test_one_mode_spacing(self):
        assert frequency_shift_magnitude(3.5e10, 1.4) == pytest.approx(12.5)
        assert frequency_shift_magnitude(-3.5e10, 1.4) == pytest.approx(-12.5)

    def test_four_times_the_ramp(self):
        assert frequency_shift_magnitude(4 * 3.5e10, 1.4) == pytest.approx(50.0)
        assert frequency_shift_magnitude(4 * 3.5e10, 1.4) == pytest.approx(4 * frequency_shift_magnitude(3.5e10, 1.4))

    @pytest.mark.parametrize("v_pi", [0.0, -1.0])
    def test_bad_v_pi(self, v_pi):
        with pytest.raises(ValueError):
            frequency_shift_magnitude(1e10, v_pi)

    def test_config_defaults_span_one_spacing(self):
        cfg = FeedForwardConfig()
        assert cfg.up_shift_ghz == pytest.approx(12.5)
        assert cfg.down_shift_ghz == pytest.approx(-12.5)


class TestSurvival:
    cfg = FeedForwardConfig()

    def test_idle(self):
        assert trigger_survival_probability(0.0, self.cfg) == 1.0

    def test_three_db_point(self):
        assert abs(trigger_survival_probability(1200.0, self.cfg) - 1 / math.sqrt(2)) < 1e-12

    def test_second_order_roll_off(self):
        assert trigger_survival_probability(2400.0, self.cfg) == pytest.approx(1 / math.sqrt(17), rel=1e-12)

    def test_negative_rate(self):
        with pytest.raises(ValueError):
            trigger_survival_probability(-1.0, self.cfg)

    @given(st.floats(0, 1e5), st.floats(0, 1e5), st.integers(1, 6))
    def test_monotone_and_bounded(self, r1, r2, order):
        cfg = FeedForwardConfig(butterworth_order=order)
        lo, hi = sorted((r1, r2))
        p_lo, p_hi = trigger_survival_probability(lo, cfg), trigger_survival_probability(hi, cfg)
        assert 0.0 <= p_hi <= p_lo <= 1.0


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"v_pi": 0.0}, {"shift_efficiency": 1.1}, {"awg_f3db": 0.0}, {"butterworth_order": 0}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            FeedForwardConfig(**kw)

    def test_outcome_invariant(self):
        with pytest.raises(ValueError):
            ShiftOutcome(attempted=True, trigger_survived=False, shift_applied=True, resulting_frequency=F_S0)

    def test_channel_actions(self):
        assert channel_actions(ModeGrid(), FeedForwardConfig()).tolist() == [SHIFT_DOWN, NO_SHIFT, SHIFT_UP]
        # modes two spacings away cannot be reached with one ramp
        assert channel_actions(ModeGrid(5), FeedForwardConfig()).tolist() == [0, SHIFT_DOWN, 0, SHIFT_UP, 0]


def one_bin(channel: int, mode: int, cfg=IDEAL, rate=0.0):
    clicks = np.zeros((1, 3), bool)
    clicks[0, channel] = True
    return apply_feedforward(clicks, [mode], cfg, rng(0), trigger_rate_khz=rate)[0]


class TestStateMachine:
    def test_central_herald_needs_no_shift(self):
        out = one_bin(1, 1)
        assert not out.attempted and not out.shift_applied
        assert out.resulting_frequency == pytest.approx(F_S0)

    def test_f_i1_moves_twin_down_one_spacing(self):
        out = one_bin(0, 0)
        assert out.attempted and out.trigger_survived and out.shift_applied
        assert out.resulting_frequency == pytest.approx(F_SPLUS - 12.5e-3)
        assert out.resulting_frequency == pytest.approx(F_S0, abs=1e-9)

    def test_dead_trigger_leaves_twin_in_place(self):
        cfg = FeedForwardConfig(shift_efficiency=1.0, awg_f3db=1e-12)
        out = one_bin(2, 2, cfg, rate=1e9)
        assert out.attempted and not out.trigger_survived and not out.shift_applied
        assert out.resulting_frequency == pytest.approx(F_SMINUS)

    def test_opposite_triggers_cancel(self):
        clicks = np.array([[True, False, True]])
        out = apply_feedforward(clicks, [0], IDEAL, rng(0))[0]
        assert not out.attempted
        assert out.resulting_frequency == pytest.approx(F_SPLUS)

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            apply_feedforward(np.zeros((2, 3), bool), [0], IDEAL, rng(0))
        with pytest.raises(ValueError):
            apply_feedforward(np.zeros((1, 2), bool), [0], IDEAL, rng(0))

    def test_shift_efficiency_statistics(self):
        n = 40_000
        clicks = np.zeros((n, 3), bool)
        clicks[:, 0] = True
        out = apply_feedforward(clicks, np.zeros(n, int), FeedForwardConfig(shift_efficiency=0.9, awg_f3db=math.inf), rng(1))
        frac = np.mean([o.shift_applied for o in out])
        assert abs(frac - 0.9) < 4 * math.sqrt(0.09 / n)

    @given(st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans(), st.integers(-1, 2)), min_size=1, max_size=40),
           st.floats(0.0, 1.0))
    def test_at_most_one_spacing(self, rows, eff):
        clicks = np.array([r[:3] for r in rows], bool)
        modes = np.array([r[3] for r in rows])
        grid = ModeGrid()
        out = apply_feedforward(clicks, modes, FeedForwardConfig(shift_efficiency=eff), rng(2), grid=grid)
        for o, m in zip(out, modes):
            if o.shift_applied:
                assert o.trigger_survived and o.attempted
            if m < 0:
                assert math.isnan(o.resulting_frequency)
                continue
            moved_ghz = abs(o.resulting_frequency - grid.signal_frequency(int(m))) * 1e3
            assert moved_ghz == pytest.approx(12.5 if o.shift_applied else 0.0, abs=1e-6)
