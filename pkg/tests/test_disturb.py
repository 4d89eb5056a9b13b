import math
from dataclasses import replace

import numpy as np
import pytest

from driftmap import (CellState, ConvergenceError, ValidationError,
                      accumulate_stress, calibrate_hrs, default_params,
                      hrs_closed_form_time, hrs_transition_time,
                      inference_lifetime, lrs_transition_time,
                      transition_time, transition_time_for_level)

ANCHORS = ((0.57, 5.227), (0.40, 31.214))


class TestLrsLaw:
    def test_at_040(self):
        direct = 10.0 ** (-14.7 * 0.40 + 6.7)
        assert lrs_transition_time(0.40) == pytest.approx(direct, rel=1e-3)
        assert lrs_transition_time(0.40) == pytest.approx(6.607, rel=5e-3)

    def test_at_057(self):
        direct = 10.0 ** (-14.7 * 0.57 + 6.7)
        assert lrs_transition_time(0.57) == pytest.approx(direct, rel=1e-3)
        assert lrs_transition_time(0.57) == pytest.approx(0.0209, rel=5e-3)

    def test_monotone_decreasing(self):
        grid = np.linspace(0.05, 1.0, 30)
        times = [lrs_transition_time(v) for v in grid]
        assert all(a > b for a, b in zip(times, times[1:]))

    def test_nonpositive_voltage(self):
        with pytest.raises(ValidationError):
            lrs_transition_time(0.0)


class TestHrsIntegration:
    def test_matches_closed_form_on_grid(self):
        params = default_params()
        for v in np.linspace(0.30, 0.70, 10):
            analytic = hrs_closed_form_time(float(v), params)
            integrated = hrs_transition_time(float(v), params)
            assert integrated == pytest.approx(analytic, rel=1e-6)

    def test_tolerance_halving_stable(self):
        params = default_params()
        t1 = hrs_transition_time(0.5, params, rtol=1e-8)
        t2 = hrs_transition_time(0.5, params, rtol=5e-9)
        assert t2 == pytest.approx(t1, rel=1e-6)

    def test_nonzero_beta_still_integrates(self):
        params = replace(default_params(), beta=0.4)
        t = hrs_transition_time(0.5, params)
        assert t > 0
        # beta shrinks gamma near g0, slowing early closure
        assert t > hrs_transition_time(0.5, replace(params, beta=0.0))

    def test_gamma_collapse_reported(self):
        params = replace(default_params(), beta=1e9)
        with pytest.raises(ValidationError, match="gamma"):
            hrs_transition_time(0.5, params)

    def test_monotone_decreasing(self):
        params = default_params()
        grid = np.linspace(0.2, 1.0, 12)
        times = [hrs_transition_time(float(v), params) for v in grid]
        assert all(a > b for a, b in zip(times, times[1:]))


class TestCalibration:
    def test_anchors_reproduced(self):
        params = calibrate_hrs(*ANCHORS)
        for v, t in ANCHORS:
            assert hrs_transition_time(v, params) == pytest.approx(t,
                                                                   rel=1e-3)
            assert hrs_closed_form_time(v, params) == pytest.approx(t,
                                                                    rel=1e-6)

    def test_fitted_ratio_equation(self):
        # recover the lumped field constant and check its defining equation
        params = calibrate_hrs(*ANCHORS)
        kt = params.k_boltzmann * params.temperature
        b_fit = params.gamma0 * params.a0 * params.q / (params.l_fil * kt)
        ratio = 31.214 / 5.227
        assert math.sinh(b_fit * 0.57) / math.sinh(b_fit * 0.40) == \
            pytest.approx(ratio, rel=1e-9)

    def test_midpoint_between_anchors(self):
        params = calibrate_hrs(*ANCHORS)
        mid = hrs_transition_time(0.485, params)
        assert 5.227 < mid < 31.214

    def test_non_monotone_anchors_rejected(self):
        with pytest.raises(ValidationError, match="monotone"):
            calibrate_hrs((0.57, 31.214), (0.40, 5.227))

    def test_equal_voltages_rejected(self):
        with pytest.raises(ValidationError, match="distinct"):
            calibrate_hrs((0.5, 2.0), (0.5, 1.0))

    def test_too_shallow_ratio_rejected(self):
        with pytest.raises(ValidationError, match="shallow"):
            calibrate_hrs((0.57, 10.0), (0.40, 11.0))


class TestTransitionDispatch:
    def test_hrs_slower_than_lrs_at_same_voltage(self):
        params = default_params()
        v = 0.45
        assert transition_time_for_level(0, v, params) > \
            transition_time_for_level(1, v, params)

    def test_lrs_levels_identical(self):
        params = default_params()
        assert transition_time_for_level(1, 0.5, params) == \
            transition_time_for_level(2, 0.5, params)

    def test_level1_at_040(self):
        params = default_params()
        assert transition_time_for_level(1, 0.40, params) == \
            pytest.approx(6.607, rel=5e-3)

    def test_state_object_dispatch(self):
        params = default_params()
        assert transition_time(CellState(level=0), 0.5, params) == \
            transition_time_for_level(0, 0.5, params)
        assert CellState(level=0).phase == "HRS"
        assert CellState(level=2).phase == "LRS"


class TestInferenceLifetime:
    def test_unit_case(self):
        assert inference_lifetime(1.0, 1.0, 1e-3) == 1000.0

    def test_linear_in_eta(self):
        assert inference_lifetime(1.0, 10.0, 1e-3) == 100.0
        assert inference_lifetime(1.0, 2.0, 1e-3) == \
            inference_lifetime(1.0, 1.0, 1e-3) / 2

    def test_epsilon_synapse_outlives(self):
        assert inference_lifetime(1.0, 1e-6, 1e-3) == pytest.approx(1e9)

    def test_nonpositive_eta(self):
        with pytest.raises(ValidationError):
            inference_lifetime(1.0, 0.0, 1e-3)


class TestAccumulateStress:
    def params(self):
        return default_params()

    def test_zero_spikes_identity(self):
        state = CellState(level=1, accumulated_stress=0.02)
        out, events = accumulate_stress(state, 0, 0.5, self.params())
        assert out == state
        assert events == []

    def test_trace_with_residual(self):
        # 60 ms of stress against a 50 ms transition: one event, 10 ms left
        state = CellState(level=1)
        out, events = accumulate_stress(state, 60, None, self.params(),
                                        transition_times=(1.0, 0.050, 0.050))
        assert len(events) == 1
        assert events[0].from_level == 1 and events[0].to_level == 2
        assert out.level == 2
        assert out.accumulated_stress == pytest.approx(0.010, rel=1e-9)

    def test_max_level_accumulates_without_event(self):
        state = CellState(level=2)
        out, events = accumulate_stress(state, 1000, 0.5, self.params())
        assert out.level == 2
        assert events == []
        assert out.accumulated_stress == pytest.approx(1.0)

    def test_exact_boundary_does_not_fire(self):
        state = CellState(level=1)
        out, events = accumulate_stress(state, 50, None, self.params(),
                                        transition_times=(1.0, 0.050, 0.050))
        assert events == []
        assert out.level == 1

    def test_multi_hop(self):
        state = CellState(level=0)
        out, events = accumulate_stress(
            state, 100, None, self.params(),
            transition_times=(0.010, 0.020, 1.0))
        assert [e.to_level for e in events] == [1, 2]
        assert out.level == 2

    def test_jump_to_max_switch(self):
        params = replace(self.params(), hrs_jump_to_max=True)
        state = CellState(level=0)
        out, events = accumulate_stress(
            state, 100, None, params, transition_times=(0.010, 0.020, 1.0))
        assert [e.to_level for e in events] == [2]
        assert out.level == 2

    def test_level_never_decreases(self):
        rng = np.random.default_rng(0)
        params = self.params()
        state = CellState(level=0)
        table = (0.005, 0.008, 1.0)
        for _ in range(50):
            prev = state.level
            state, _ = accumulate_stress(state, int(rng.integers(0, 5)),
                                         None, params,
                                         transition_times=table)
            assert state.level >= prev

    def test_negative_spikes_rejected(self):
        with pytest.raises(ValidationError):
            accumulate_stress(CellState(level=0), -1, 0.5, self.params())

    def test_needs_voltage_or_table(self):
        with pytest.raises(ValidationError):
            accumulate_stress(CellState(level=0), 1, None, self.params())
