"""Right-hand side evaluation and the two integrators."""

import math

import numpy as np
import pytest

from rydchain.dynamics import (IntegrationError, bloch_radius_sq, eom_rhs,
                               initial_state, integrate_adaptive,
                               integrate_rk4, join_state, random_bloch_states,
                               read_trajectory_csv, split_state)
from rydchain.lattice import ModelParams, build_unit_cell, dump_config, preset


def cell22(**kw):
    p = preset("paper-default", **kw)
    return build_unit_cell(2, 2, p), p


class TestRhs:
    def test_empty_state_without_drive_is_stationary(self):
        cell, _ = cell22(v_inter=1.0)
        p0 = ModelParams(omega=0.0, delta=2.5, v_intra=5.0, v_inter=1.0)
        np.testing.assert_array_equal(eom_rhs(np.zeros(12), cell, p0), np.zeros(12))

    def test_empty_state_with_drive_pumps_y(self):
        cell, p = cell22(v_inter=1.0)
        deriv = eom_rhs(np.zeros(12), cell, p)
        np.testing.assert_allclose(deriv[:8], 0.0)
        np.testing.assert_allclose(deriv[8:], 1.1)

    def test_frozen_symbolic_evaluation(self):
        # expected values computed independently from the printed four-site
        # equations with exact rational arithmetic before this module existed
        cell, p = cell22(v_inter=1.0)
        state = join_state([0.3, 0.1, 0.2, 0.05],
                           [0.05, -0.02, 0.01, 0.0],
                           [-0.1, 0.04, 0.02, -0.03])
        deriv = eom_rhs(state, cell, p)
        np.testing.assert_allclose(deriv[:4], [-0.52, -0.012, -0.156, -0.116],
                                   rtol=0, atol=1e-14)
        np.testing.assert_allclose(deriv[4:8], [-0.155, -0.012, 0.029, -0.012],
                                   rtol=0, atol=1e-14)
        np.testing.assert_allclose(deriv[8:], [0.425, 0.849, 0.633, 1.005],
                                   rtol=0, atol=1e-14)

    def test_dimension_mismatch_rejected(self):
        cell, p = cell22()
        with pytest.raises(ValueError):
            eom_rhs(np.zeros(9), cell, p)

    def test_single_site_cell_reduces_to_uniform_chain_equation(self):
        # independent scalar implementation of the one-chain equations
        p = ModelParams(omega=2.2, delta=2.5, v_intra=5.0, v_inter=0.0)
        cell = build_unit_cell(1, 1, p)
        rng = np.random.default_rng(1)
        for _ in range(10):
            n, x, y = rng.uniform(-0.4, 0.9, size=3)
            rot = p.delta - 2 * p.v_intra * n
            expected = [p.omega * y - n,
                        -0.5 * x + rot * y,
                        -0.5 * y - rot * x - 0.5 * p.omega * (2 * n - 1)]
            got = eom_rhs(np.array([n, x, y]), cell, p)
            np.testing.assert_allclose(got, expected, atol=1e-14)

    def test_high_order_term_shifts_detuning_by_r_vsum_nsq(self):
        p = ModelParams(omega=2.2, delta=2.5, v_intra=5.0, v_inter=1.0,
                        r_high_order=2.0)
        cell = build_unit_cell(2, 2, p)
        n = np.array([0.3, 0.1, 0.2, 0.05])
        x = np.array([0.05, -0.02, 0.01, 0.0])
        y = np.array([-0.1, 0.04, 0.02, -0.03])
        base = ModelParams(**{**p.as_dict(), "r_high_order": 0.0})
        d0 = eom_rhs(join_state(n, x, y), cell, base)
        d2 = eom_rhs(join_state(n, x, y), cell, p)
        extra = p.r_high_order * cell.v_sum * n * n
        np.testing.assert_allclose(d2[:4], d0[:4], atol=1e-15)
        np.testing.assert_allclose(d2[4:8], d0[4:8] - extra * y, atol=1e-14)
        np.testing.assert_allclose(d2[8:], d0[8:] + extra * x, atol=1e-14)


def decay_setup():
    p = ModelParams(omega=0.0, delta=2.5, v_intra=0.0, v_inter=0.0)
    cell = build_unit_cell(1, 1, p)
    state0 = np.array([1.0, 0.0, 0.0])
    return cell, p, state0


class TestIntegrateRK4:
    def test_closed_form_decay(self):
        cell, p, s0 = decay_setup()
        traj = integrate_rk4(s0, cell, p, 1.0, dt=1e-3, record_stride=1)
        assert traj.populations()[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-8)

    def test_zero_state_stays_zero(self):
        cell, p, _ = decay_setup()
        traj = integrate_rk4(np.zeros(3), cell, p, 2.0, dt=1e-3)
        np.testing.assert_array_equal(traj.states, 0.0)

    def test_fourth_order_convergence(self):
        cell, p, s0 = decay_setup()
        errs = []
        for dt in (0.05, 0.025):
            traj = integrate_rk4(s0, cell, p, 1.0, dt=dt, record_stride=1)
            errs.append(abs(traj.populations()[-1, 0] - math.exp(-1.0)))
        assert errs[0] / errs[1] >= 12.0

    def test_af2_seed_oscillates_with_chains_half_period_apart(self):
        cell, p = cell22(v_inter=1.0)
        traj = integrate_rk4(initial_state("af2", cell), cell, p, 200.0)
        win = traj.window(150.0)
        n = win.populations()
        swing = np.ptp(n, axis=0) / 2
        assert (swing > 5e-3).all()  # persistent oscillation on every site
        # the two chains repeat each other half a period later (pi offset);
        # same-time chain equality does not hold for this mode
        assert np.max(np.abs(n[:, 0] - n[:, 2])) > 0.5 * swing[0]

    def test_determinism(self):
        cell, p = cell22(v_inter=1.0)
        t1 = integrate_rk4(initial_state("af", cell), cell, p, 10.0)
        t2 = integrate_rk4(initial_state("af", cell), cell, p, 10.0)
        np.testing.assert_array_equal(t1.states, t2.states)

    def test_batched_matches_single(self):
        cell, p = cell22(v_inter=1.0)
        s1 = initial_state("af", cell)
        s2 = initial_state("af2", cell)
        batch = integrate_rk4(np.stack([s1, s2]), cell, p, 5.0)
        single = integrate_rk4(s1, cell, p, 5.0)
        np.testing.assert_array_equal(batch.select(0).states, single.states)

    def test_chain_swap_equivariance(self):
        # with a chain-symmetric coupling the swapped seed integrates to the
        # swapped trajectory (up to floating-point reassociation)
        cell, p = cell22(v_inter=1.0)
        rng = np.random.default_rng(8)
        s0 = random_bloch_states(4, 1, rng)[0]
        perm = cell.permutation_swap_chains()
        full = np.concatenate([perm, perm + 4, perm + 8])
        t1 = integrate_rk4(s0, cell, p, 50.0, record_stride=100)
        t2 = integrate_rk4(s0[full], cell, p, 50.0, record_stride=100)
        np.testing.assert_allclose(t2.states, t1.states[:, full], atol=1e-9)

    def test_nonfinite_state_aborts_with_diagnostic(self):
        cell, p = cell22()
        bad = np.full(12, np.nan)
        with pytest.raises(IntegrationError):
            integrate_rk4(bad, cell, p, 1.0)

    def test_bloch_ball_contraction(self):
        cell, p = cell22(v_inter=1.0)
        seeds = random_bloch_states(4, 30, np.random.default_rng(17))
        traj = integrate_rk4(seeds, cell, p, 200.0, record_stride=50)
        radius = bloch_radius_sq(traj.states, 4)
        assert float(radius.max()) <= 1.0 + 1e-6


class TestIntegrateAdaptive:
    def test_decay_oracle_at_tight_tolerance(self):
        cell, p, s0 = decay_setup()
        traj = integrate_adaptive(s0, cell, p, 1.0, tol=1e-10)
        assert abs(traj.populations()[-1, 0] - math.exp(-1.0)) < 1e-8

    def test_halving_tolerance_does_not_reduce_steps(self):
        cell, p = cell22(v_inter=1.0)
        s0 = initial_state("af", cell)
        a = integrate_adaptive(s0, cell, p, 20.0, tol=1e-8)
        b = integrate_adaptive(s0, cell, p, 20.0, tol=5e-9)
        assert b.meta["accepted"] >= a.meta["accepted"]

    def test_matches_fixed_step_pointwise(self):
        cell, p = cell22(v_inter=5.0)
        s0 = initial_state("af", cell)
        fixed = integrate_rk4(s0, cell, p, 50.0, dt=1e-3, record_stride=1)
        free = integrate_adaptive(s0, cell, p, 50.0, tol=1e-10)
        dense = fixed.interp(free.times)
        assert np.max(np.abs(dense - free.states)) < 1e-5

    def test_step_underflow_aborts(self):
        cell, p, s0 = decay_setup()
        with pytest.raises((IntegrationError, ValueError)):
            integrate_adaptive(s0, cell, p, 1.0, tol=0.0)


class TestSeeds:
    def test_ground_is_zero(self):
        cell, _ = cell22()
        np.testing.assert_array_equal(initial_state("ground", cell), 0.0)

    def test_af_checkerboard(self):
        cell, _ = cell22()
        n, x, y = split_state(initial_state("af", cell), 4)
        np.testing.assert_allclose(n, [0.8, 0.2, 0.2, 0.8])
        assert not x.any() and not y.any()

    def test_af2_column_pattern_with_small_checkerboard_bias(self):
        cell, _ = cell22()
        n, _, _ = split_state(initial_state("af2", cell), 4)
        np.testing.assert_allclose(n, [0.8001, 0.1999, 0.7999, 0.2001])

    def test_random_bloch_inside_ball_and_seeded(self):
        states = random_bloch_states(4, 200, np.random.default_rng(4))
        assert float(bloch_radius_sq(states, 4).max()) <= 1.0 + 1e-12
        again = random_bloch_states(4, 200, np.random.default_rng(4))
        np.testing.assert_array_equal(states, again)

    def test_unknown_kind_rejected(self):
        cell, _ = cell22()
        with pytest.raises(ValueError):
            initial_state("bogus", cell)


class TestTrajectoryCsv:
    def test_round_trip_with_config_echo(self, tmp_path):
        cell, p = cell22(v_inter=1.0)
        traj = integrate_rk4(initial_state("af", cell), cell, p, 1.0,
                             record_stride=100)
        path = tmp_path / "traj.csv"
        traj.to_csv(path, config_echo=dump_config(p, 2, 2))
        times, columns, comments = read_trajectory_csv(path)
        np.testing.assert_allclose(times, traj.times, rtol=1e-9)
        np.testing.assert_allclose(columns["1A:n"], traj.populations()[:, 0],
                                   rtol=1e-10)
        assert any(c.startswith("v_inter") for c in comments)
        assert list(columns)[:4] == ["t", "1A:n", "1A:x", "1A:y"]

    def test_zero_run_writes_zero_columns(self, tmp_path):
        p = ModelParams(omega=0.0, v_intra=5.0, v_inter=0.0)
        cell = build_unit_cell(2, 2, p)
        traj = integrate_rk4(initial_state("ground", cell), cell, p, 1.0,
                             record_stride=200)
        path = tmp_path / "zero.csv"
        traj.to_csv(path)
        _, columns, _ = read_trajectory_csv(path)
        for key, vals in columns.items():
            if key != "t":
                np.testing.assert_array_equal(vals, 0.0)
