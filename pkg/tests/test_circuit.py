import numpy as np
import pytest

from driftmap import (ConvergenceError, CrossbarConfig, TECH_TABLE,
                      ValidationError, calibrate_rcell,
                      calibrate_reference_nodal, corner_current_difference,
                      nodal_environment, path_resistance, series_cell_state,
                      series_environment, solve_nodal, voltage_map_stats)

TECH65 = TECH_TABLE["65nm"]


def cfg(n, tech=TECH65, v_drive=0.5, levels=(100_000.0, 10_000.0, 5_000.0)):
    return CrossbarConfig(n=n, tech=tech, r_cell_by_level=levels,
                          v_drive=v_drive)


class TestPathResistance:
    def test_origin_is_single_access_unit(self):
        assert path_resistance(0, 0, cfg(128)) == 2.5

    def test_far_corner(self):
        assert path_resistance(127, 127, cfg(128)) == 447.0

    def test_unit_step_along_wordline_axis(self):
        c = cfg(128)
        assert path_resistance(1, 0, c) - path_resistance(0, 0, c) == 2.5

    def test_out_of_range(self):
        with pytest.raises(ValidationError, match="out of range"):
            path_resistance(128, 0, cfg(128))


class TestSeriesCellState:
    def test_no_divider_limit(self):
        # vanishing parasitics: the full drive appears across the cell
        tech = TECH_TABLE["65nm"].__class__("tiny", 1e-12, 1e-12)
        reading = series_cell_state(0, 0, cfg(4, tech=tech), 1000.0)
        assert reading.stress_voltage == pytest.approx(0.5, rel=1e-9)

    def test_equal_divider(self):
        # cell resistance equal to its path resistance halves the drive
        reading = series_cell_state(0, 0, cfg(4), 2.5)
        assert reading.stress_voltage == pytest.approx(0.25, rel=1e-12)

    def test_current_strictly_decreases_with_distance(self):
        c = cfg(16)
        currents = [series_cell_state(i, j, c, 5000.0).current
                    for i, j in [(0, 0), (0, 1), (1, 1), (3, 5), (15, 15)]]
        assert all(a > b for a, b in zip(currents, currents[1:]))

    def test_bad_cell_resistance(self):
        with pytest.raises(ValidationError):
            series_cell_state(0, 0, cfg(4), 0.0)


class TestCalibrateRcell:
    def test_closed_form_value(self):
        # solve 0.392 * r = 0.608 * r_long - r_short at the 128x128 anchor
        r_long, r_short = 447.0, 2.5
        expect = ((1 - 0.392) * r_long - r_short) / 0.392
        got = calibrate_rcell(cfg(128), 0.392, 128)
        assert got == pytest.approx(expect, rel=1e-12)
        assert got == pytest.approx(686.9285714285714, rel=1e-12)

    @pytest.mark.parametrize("n,target_pct", [(32, 13.3), (64, 25.1),
                                              (128, 39.2), (256, 55.8)])
    def test_size_sweep_within_tolerance(self, n, target_pct):
        r_cell = calibrate_rcell(cfg(128), 0.392, 128)
        diff_pct = 100 * corner_current_difference(cfg(128), n, r_cell)
        assert abs(diff_pct - target_pct) <= 1.5  # percentage points

    def test_difference_increases_with_size(self):
        r_cell = calibrate_rcell(cfg(128), 0.392, 128)
        diffs = [corner_current_difference(cfg(128), n, r_cell)
                 for n in (32, 64, 128, 256)]
        assert all(a < b for a, b in zip(diffs, diffs[1:]))

    def test_scaled_node_has_larger_difference(self):
        r_cell = calibrate_rcell(cfg(128), 0.392, 128)
        d65 = corner_current_difference(cfg(128, TECH_TABLE["65nm"]), 64,
                                        r_cell)
        d16 = corner_current_difference(cfg(128, TECH_TABLE["16nm"]), 64,
                                        r_cell)
        assert d16 > d65

    def test_target_out_of_range(self):
        with pytest.raises(ValidationError):
            calibrate_rcell(cfg(128), 1.0, 128)

    def test_infeasible_target(self):
        with pytest.raises(ValidationError, match="infeasible"):
            calibrate_rcell(cfg(2), 0.999, 2)


class TestNodal:
    def test_1x1_matches_divider(self):
        c = cfg(1, v_drive=0.5)
        env = solve_nodal(c, [[1000.0]])
        analytic = 0.5 * 1000.0 / (1000.0 + 2.5)
        assert env.stress_voltage[0, 0] == pytest.approx(analytic, rel=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_kcl_residual_random_32(self, seed):
        rng = np.random.default_rng(seed)
        c = cfg(32)
        env = solve_nodal(c, rng.uniform(2e3, 2e5, (32, 32)))
        assert env.kcl_residual < 1e-9

    @pytest.mark.parametrize("cell", [(0, 0), (2, 5), (7, 1), (7, 7)])
    def test_single_cell_matches_series(self, cell):
        i, j = cell
        c = cfg(8)
        r = np.full((8, 8), np.inf)
        r[i, j] = 4000.0
        env = solve_nodal(c, r)
        series = series_cell_state(i, j, c, 4000.0)
        assert env.stress_voltage[i, j] == pytest.approx(
            series.stress_voltage, rel=1e-6)
        assert env.current[i, j] == pytest.approx(series.current, rel=1e-6)

    def test_energy_balance(self):
        rng = np.random.default_rng(3)
        c = cfg(16)
        env, details = solve_nodal(c, rng.uniform(1e3, 1e5, (16, 16)),
                                   return_details=True)
        dissipated = sum(g * (va - vb) ** 2
                         for va, vb, g in details.elements)
        assert dissipated == pytest.approx(details.injected_power, rel=1e-6)

    def test_inactive_inputs_grounded(self):
        c = cfg(4)
        r = np.full((4, 4), 10_000.0)
        env = solve_nodal(c, r, active_inputs={0})
        # cells on undriven lines see at most a sliver of back-injection
        assert env.stress_voltage[:, 0].max() > 0.4
        assert abs(env.stress_voltage[:, 1]).max() < 0.1

    def test_singular_system_rejected(self):
        with pytest.raises(ValidationError, match="singular"):
            solve_nodal(cfg(2), np.full((2, 2), np.inf))

    def test_nonpositive_resistance_rejected(self):
        with pytest.raises(ValidationError):
            solve_nodal(cfg(2), [[1.0, 1.0], [0.0, 1.0]])

    def test_bad_active_input(self):
        with pytest.raises(ValidationError, match="active input"):
            solve_nodal(cfg(2), np.full((2, 2), 1e4), active_inputs={5})


class TestEnvironments:
    def test_series_levels_order_voltages(self):
        # deeper (lower-resistance) levels receive less of the divider
        env = series_environment(cfg(8))
        assert (env.stress_voltage_by_level[0]
                > env.stress_voltage_by_level[1]).all()
        assert (env.stress_voltage_by_level[1]
                > env.stress_voltage_by_level[2]).all()

    def test_nodal_environment_levels(self):
        env = nodal_environment(cfg(4))
        assert env.stress_voltage_by_level.shape == (3, 4, 4)
        assert env.kcl_residual < 1e-9

    def test_voltage_map_stats_1x1(self):
        env = series_environment(cfg(1))
        stats = voltage_map_stats(env)
        assert stats["v_min"] == stats["v_max"]

    def test_series_extremes_at_corners(self):
        env = series_environment(cfg(128))
        stats = voltage_map_stats(env)
        assert env.stress_voltage[0, 0] == stats["v_max"]
        assert env.stress_voltage[127, 127] == stats["v_min"]

    def test_grid_row_major(self):
        env = series_environment(cfg(3))
        grid = voltage_map_stats(env)["grid"]
        assert len(grid) == 9
        assert [(i, j) for i, j, _, _ in grid] == [
            (i, j) for i in range(3) for j in range(3)]

    def test_reference_calibration_hits_corners(self):
        ref = calibrate_reference_nodal(TECH65, n=32)
        env = solve_nodal(ref, np.full((32, 32), ref.r_cell_by_level[0]))
        stats = voltage_map_stats(env)
        assert stats["v_max"] == pytest.approx(0.57, rel=0.10)
        assert stats["v_min"] == pytest.approx(0.40, rel=0.10)


class TestConfigValidation:
    def test_levels_must_decrease(self):
        with pytest.raises(ValidationError, match="decrease"):
            CrossbarConfig(n=4, tech=TECH65, r_cell_by_level=(1e3, 1e4))

    def test_builtin_table(self):
        assert TECH_TABLE["65nm"].r_wordline_unit == 2.5
        assert TECH_TABLE["65nm"].r_bitline_unit == 1.0
        assert TECH_TABLE["16nm"].r_wordline_unit == 10.0
        assert TECH_TABLE["16nm"].r_bitline_unit == 3.8
        assert TECH_TABLE["5nm"].r_wordline_unit == 25.0
        assert TECH_TABLE["5nm"].projected
