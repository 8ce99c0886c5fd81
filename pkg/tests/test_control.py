import math

import numpy as np
import pytest

import oracles
from flocksim import se3
from flocksim.control import (
    MODE_ATTITUDE,
    MODE_VELOCITY,
    AttitudeCommands,
    CommandBatch,
    ControlGains,
    ControlLimits,
    InvalidCommandError,
    VelocityCommands,
    attitude_control,
    attitude_errors,
    control_batch,
    desired_attitude,
    velocity_control,
)
from flocksim.dynamics import RigidStateBatch, RobotParams


def random_states(rng, n, tilt=1.2):
    angles = np.stack([
        rng.uniform(-tilt, tilt, n),
        rng.uniform(-tilt, tilt, n),
        rng.uniform(-math.pi, math.pi, n),
    ], axis=-1)
    return RigidStateBatch(
        p=rng.uniform(-5, 5, (n, 3)),
        q=se3.rot_zyx(angles[:, 0], angles[:, 1], angles[:, 2]),
        v=rng.uniform(-4, 4, (n, 3)),
        omega=rng.uniform(-3, 3, (n, 3)),
    )


class TestCommandValidation:
    def test_attitude_rejects_steep_tilt(self):
        with pytest.raises(InvalidCommandError):
            AttitudeCommands.single(math.pi / 2, 0.0, 0.0, 10.0)

    def test_attitude_rejects_nan(self):
        with pytest.raises(InvalidCommandError):
            AttitudeCommands.single(0.0, np.nan, 0.0, 10.0)

    def test_velocity_rejects_nan(self):
        with pytest.raises(InvalidCommandError):
            VelocityCommands.single([np.nan, 0, 0], 0.0)

    def test_gains_must_be_positive(self):
        with pytest.raises(ValueError):
            ControlGains(attitude=[8.0, 0.0, 2.0])

    def test_limits_validation(self):
        with pytest.raises(ValueError):
            ControlLimits(max_tilt=2.0)


class TestDesiredAttitude:
    def test_level_yaw_rate_passthrough(self):
        cmd = AttitudeCommands.single(0.0, 0.0, 1.0, 10.0)
        _, omega_d = desired_attitude(np.array([0.0]), cmd)
        np.testing.assert_array_equal(omega_d[0], [0.0, 0.0, 1.0])

    def test_pure_yaw_keeps_current_heading(self):
        cmd = AttitudeCommands.single(0.0, 0.0, 0.0, 10.0)
        q_d, omega_d = desired_attitude(np.array([0.5]), cmd)
        np.testing.assert_allclose(
            se3.quat_to_matrix(q_d[0]),
            se3.quat_to_matrix(se3.rot_zyx(0.0, 0.0, 0.5)), atol=1e-15)
        np.testing.assert_array_equal(omega_d[0], [0.0, 0.0, 0.0])

    def test_rate_map_matches_reference(self):
        # Oracle: direct evaluation of the Euler-rate matrix.
        cmd = AttitudeCommands.single(0.2, -0.1, 0.7, 10.0)
        _, omega_d = desired_attitude(np.array([0.3]), cmd)
        _, expected = oracles.desired_attitude_ref(0.3, 0.2, -0.1, 0.7)
        np.testing.assert_allclose(omega_d[0], expected, rtol=1e-15, atol=1e-15)


class TestAttitudeErrors:
    def test_perfect_tracking_is_zero(self):
        q = se3.rot_zyx(0.1, 0.2, 0.3)
        w = np.array([0.1, 0.2, 0.3])
        err = attitude_errors(q, w, q, w)
        np.testing.assert_allclose(err.rotation[0], 0.0, atol=1e-15)
        np.testing.assert_allclose(err.rate[0], 0.0, atol=1e-15)

    def test_yaw_offset_error(self):
        # Oracle: direct matrix evaluation, e_R = (0, 0, sin 0.4).
        q = se3.rot_zyx(0.0, 0.0, 0.4)
        q_d = np.array([1.0, 0.0, 0.0, 0.0])
        err = attitude_errors(q, np.zeros(3), q_d, np.zeros(3))
        np.testing.assert_allclose(
            err.rotation[0], [0.0, 0.0, math.sin(0.4)], atol=1e-15)

    def test_rate_error_sign(self):
        q = se3.rot_zyx(0.3, -0.2, 1.0)
        err = attitude_errors(q, np.zeros(3), q, np.array([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(err.rate[0], [0.0, 0.0, -1.0], atol=1e-15)

    def test_swap_negates_rotation_error_exactly(self):
        rng = np.random.default_rng(9)
        qa = se3.exp_so3(rng.uniform(-2, 2, (64, 3)))
        qb = se3.exp_so3(rng.uniform(-2, 2, (64, 3)))
        w = np.zeros((64, 3))
        fwd = attitude_errors(qa, w, qb, w)
        rev = attitude_errors(qb, w, qa, w)
        np.testing.assert_array_equal(fwd.rotation, -rev.rotation)

    def test_left_invariance(self):
        rng = np.random.default_rng(10)
        qa = se3.exp_so3(rng.uniform(-2, 2, (64, 3)))
        qb = se3.exp_so3(rng.uniform(-2, 2, (64, 3)))
        q_common = se3.exp_so3(rng.uniform(-2, 2, (64, 3)))
        w = rng.uniform(-1, 1, (64, 3))
        wd = rng.uniform(-1, 1, (64, 3))
        base = attitude_errors(qa, w, qb, wd)
        moved = attitude_errors(se3.quat_multiply(q_common, qa), w,
                                se3.quat_multiply(q_common, qb), wd)
        np.testing.assert_allclose(moved.rotation, base.rotation, atol=1e-12)

    def test_rotation_error_norm_bounded(self):
        rng = np.random.default_rng(12)
        qa = se3.exp_so3(rng.uniform(-3, 3, (500, 3)))
        qb = se3.exp_so3(rng.uniform(-3, 3, (500, 3)))
        err = attitude_errors(qa, np.zeros((500, 3)), qb, np.zeros((500, 3)))
        norms = np.linalg.norm(err.rotation, axis=-1)
        assert (norms <= 1.5).all()


class TestAttitudeControl:
    def test_perfect_tracking_zero_moment(self):
        params = RobotParams()
        states = RigidStateBatch.rest(1)
        cmd = AttitudeCommands.single(0.0, 0.0, 0.0, params.hover_thrust)
        wrench = attitude_control(states, cmd, ControlGains(), params)
        np.testing.assert_array_equal(wrench.moment[0], [0.0, 0.0, 0.0])
        assert wrench.thrust[0] == params.hover_thrust

    def test_single_axis_proportional_term(self):
        # yaw error s = sin(0.3) about z with zero rates: M_z = -k_z * s
        params = RobotParams()
        gains = ControlGains()
        states = RigidStateBatch.rest(1)
        states.q[0] = se3.rot_zyx(0.0, 0.0, 0.3)
        # desired keeps the current yaw, so build the error via a yaw-rate-free
        # command and compare against the analytic single-axis law by
        # displacing the state instead: use errors directly.
        err = attitude_errors(states.q, states.omega,
                              np.array([[1.0, 0, 0, 0]]), np.zeros((1, 3)))
        s = err.rotation[0, 2]
        assert s == pytest.approx(math.sin(0.3), abs=1e-15)

    def test_matches_reference_hand_case(self):
        # Oracle: scalar evaluation of the moment law on a hover state
        # commanded to roll 0.3.
        params = RobotParams()
        gains = ControlGains()
        states = RigidStateBatch.rest(1)
        cmd = AttitudeCommands.single(0.3, 0.0, 0.0, params.hover_thrust)
        wrench = attitude_control(states, cmd, gains, params)
        f_ref, m_ref = oracles.attitude_control_ref(
            oracles.quat_to_mat(states.q[0]), states.omega[0],
            (0.3, 0.0, 0.0, params.hover_thrust),
            gains.attitude, gains.rate, params.inertia.tolist(),
            params.thrust_max, params.moment_max)
        assert m_ref[0] > 0.0  # positive moment rolls toward the command
        np.testing.assert_allclose(wrench.moment[0], m_ref, rtol=1e-12, atol=1e-15)
        assert wrench.thrust[0] == pytest.approx(f_ref, rel=1e-15)


class TestVelocityControl:
    def test_hover_equilibrium(self):
        params = RobotParams()
        states = RigidStateBatch.rest(1)
        cmd = VelocityCommands.single([0.0, 0.0, 0.0], 0.0)
        att, degen = velocity_control(states, cmd, ControlGains(), params)
        assert att.roll[0] == 0.0 and att.pitch[0] == 0.0
        assert att.thrust[0] == params.hover_thrust
        assert not degen[0]

    def test_forward_command_pitches_nose_down(self):
        # Oracle: scalar evaluation with unit velocity gains.
        params = RobotParams()
        gains = ControlGains(velocity=[1.0, 1.0, 1.0])
        states = RigidStateBatch.rest(1)
        cmd = VelocityCommands.single([1.0, 0.0, 0.0], 0.0)
        att, _ = velocity_control(states, cmd, gains, params)
        assert att.pitch[0] == pytest.approx(math.atan2(1.0, 9.81), abs=1e-15)
        assert att.pitch[0] == pytest.approx(0.1016, abs=1e-4)
        assert att.roll[0] == 0.0
        assert att.thrust[0] == pytest.approx(params.mass * 9.81, rel=1e-15)

    def test_side_command_rolls(self):
        params = RobotParams()
        gains = ControlGains(velocity=[1.0, 1.0, 1.0])
        states = RigidStateBatch.rest(1)
        cmd = VelocityCommands.single([0.0, 1.0, 0.0], 0.0)
        att, _ = velocity_control(states, cmd, gains, params)
        assert att.roll[0] == pytest.approx(math.atan2(-1.0, 9.81), abs=1e-15)
        assert att.roll[0] < 0.0
        assert att.pitch[0] == 0.0

    def test_tilt_clamped(self):
        params = RobotParams()
        states = RigidStateBatch.rest(1)
        cmd = VelocityCommands.single([5.0, 0.0, 0.0], 0.0)
        att, _ = velocity_control(states, cmd, ControlGains(), params,
                                  ControlLimits(max_tilt=0.6))
        assert abs(att.pitch[0]) <= 0.6

    def test_speed_command_clamped(self):
        params = RobotParams()
        states = RigidStateBatch.rest(1)
        limits = ControlLimits(max_speed_cmd=5.0)
        big = velocity_control(states, VelocityCommands.single([40.0, 0, 0], 0.0),
                               ControlGains(), params, limits)[0]
        capped = velocity_control(states, VelocityCommands.single([5.0, 0, 0], 0.0),
                                  ControlGains(), params, limits)[0]
        assert big.pitch[0] == capped.pitch[0]

    def test_degenerate_acceleration_falls_back_to_hover(self):
        params = RobotParams()
        states = RigidStateBatch.rest(1)
        # command exactly cancels gravity compensation: a_tot = 0
        cmd = VelocityCommands.single([0.0, 0.0, -params.gravity / 3.0], 0.0)
        att, degen = velocity_control(states, cmd, ControlGains(), params)
        assert degen[0]
        assert att.roll[0] == 0.0 and att.pitch[0] == 0.0
        assert att.thrust[0] == params.hover_thrust


class TestControlBatch:
    def test_all_hover_batch(self):
        params = RobotParams()
        n = 16
        states = RigidStateBatch.rest(n)
        cmds = CommandBatch.all_attitude(AttitudeCommands.hover(n, params))
        wrench, flags = control_batch(states, cmds, ControlGains(), params)
        np.testing.assert_array_equal(wrench.thrust, np.full(n, params.hover_thrust))
        np.testing.assert_array_equal(wrench.moment, np.zeros((n, 3)))
        assert not flags.degenerate_acceleration.any()

    def test_mixed_batch_equals_scalar_calls(self):
        rng = np.random.default_rng(21)
        params = RobotParams()
        gains = ControlGains()
        limits = ControlLimits()
        states = random_states(rng, 2)
        att = AttitudeCommands(roll=[0.1, 0.0], pitch=[-0.2, 0.0],
                               yaw_rate=[0.3, 0.0], thrust=[12.0, 0.0])
        vel = VelocityCommands(v=[[0, 0, 0], [1.0, -0.5, 0.2]], yaw_rate=[0.0, 0.4])
        cmds = CommandBatch(mode=[MODE_ATTITUDE, MODE_VELOCITY],
                            attitude=att, velocity=vel)
        wrench, _ = control_batch(states, cmds, gains, params, limits)

        w0 = attitude_control(states.slice(slice(0, 1)), att.slice(slice(0, 1)),
                              gains, params)
        att1, _ = velocity_control(states.slice(slice(1, 2)),
                                   vel.slice(slice(1, 2)), gains, params, limits)
        w1 = attitude_control(states.slice(slice(1, 2)), att1, gains, params)
        np.testing.assert_array_equal(wrench.thrust[0], w0.thrust[0])
        np.testing.assert_array_equal(wrench.moment[0], w0.moment[0])
        np.testing.assert_array_equal(wrench.thrust[1], w1.thrust[0])
        np.testing.assert_array_equal(wrench.moment[1], w1.moment[0])

    @pytest.mark.parametrize("n", [1, 7, 4096])
    def test_batch_matches_scalar_loop_bitwise(self, n):
        rng = np.random.default_rng(33)
        params = RobotParams()
        gains = ControlGains()
        limits = ControlLimits()
        states = random_states(rng, n)
        mode = rng.integers(0, 2, n).astype(np.uint8)
        att = AttitudeCommands(roll=rng.uniform(-0.5, 0.5, n),
                               pitch=rng.uniform(-0.5, 0.5, n),
                               yaw_rate=rng.uniform(-1, 1, n),
                               thrust=rng.uniform(0, 20, n))
        vel = VelocityCommands(v=rng.uniform(-6, 6, (n, 3)),
                               yaw_rate=rng.uniform(-1, 1, n))
        cmds = CommandBatch(mode=mode, attitude=att, velocity=vel)
        wrench, flags = control_batch(states, cmds, gains, params, limits)

        for i in range(0, n, max(1, n // 128)):
            sl = slice(i, i + 1)
            wi, fi = control_batch(states.slice(sl), cmds.slice(sl), gains,
                                   params, limits)
            assert np.array_equal(wrench.thrust[i], wi.thrust[0])
            assert np.array_equal(wrench.moment[i], wi.moment[0])
            assert flags.degenerate_acceleration[i] == fi.degenerate_acceleration[0]

    def test_length_mismatch_rejected(self):
        params = RobotParams()
        states = RigidStateBatch.rest(2)
        cmds = CommandBatch.all_attitude(AttitudeCommands.hover(3, params))
        with pytest.raises(ValueError):
            control_batch(states, cmds, ControlGains(), params)


class TestControlLawOracle:
    """Dual-route check: batched controller vs the scalar transcription."""

    N = 512  # the acceptance suite runs the full 10^4; keep unit tests fast

    def test_all_four_operations(self):
        rng = np.random.default_rng(99)
        params = RobotParams()
        gains = ControlGains()
        limits = ControlLimits()
        n = self.N
        states = random_states(rng, n)
        roll = rng.uniform(-1.0, 1.0, n)
        pitch = rng.uniform(-1.0, 1.0, n)
        yaw_rate = rng.uniform(-2, 2, n)
        thrust = rng.uniform(0, 24, n)
        v_cmd = rng.uniform(-4, 4, (n, 3))

        att = AttitudeCommands(roll=roll, pitch=pitch, yaw_rate=yaw_rate,
                               thrust=thrust)
        yaw, _ = se3.yaw_of(states.q)
        q_d, omega_d = desired_attitude(yaw, att)
        err = attitude_errors(states.q, states.omega, q_d, omega_d)
        wrench = attitude_control(states, att, gains, params)
        vel = VelocityCommands(v=v_cmd, yaw_rate=yaw_rate)
        att_out, _ = velocity_control(states, vel, gains, params, limits)

        for i in range(n):
            r = oracles.quat_to_mat(states.q[i])
            psi = oracles.yaw_ref(r)
            rd_ref, wd_ref = oracles.desired_attitude_ref(
                psi, roll[i], pitch[i], yaw_rate[i])
            np.testing.assert_allclose(se3.quat_to_matrix(q_d[i]), rd_ref,
                                       rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(omega_d[i], wd_ref, rtol=1e-12, atol=1e-12)

            er_ref, ew_ref = oracles.attitude_errors_ref(
                r, states.omega[i].tolist(), rd_ref, wd_ref)
            np.testing.assert_allclose(err.rotation[i], er_ref, rtol=1e-12,
                                       atol=1e-12)
            np.testing.assert_allclose(err.rate[i], ew_ref, rtol=1e-12, atol=1e-12)

            f_ref, m_ref = oracles.attitude_control_ref(
                r, states.omega[i].tolist(),
                (roll[i], pitch[i], yaw_rate[i], thrust[i]),
                gains.attitude, gains.rate, params.inertia.tolist(),
                params.thrust_max, params.moment_max)
            np.testing.assert_allclose(wrench.thrust[i], f_ref, rtol=1e-12,
                                       atol=1e-12)
            np.testing.assert_allclose(wrench.moment[i], m_ref, rtol=1e-12,
                                       atol=1e-12)

            vr, vp, vy, vf, _ = oracles.velocity_control_ref(
                r, states.v[i].tolist(), (v_cmd[i].tolist(), yaw_rate[i]),
                gains.velocity, params.mass, params.gravity,
                limits.max_tilt, limits.max_speed_cmd)
            np.testing.assert_allclose(
                [att_out.roll[i], att_out.pitch[i], att_out.yaw_rate[i],
                 att_out.thrust[i]], [vr, vp, vy, vf], rtol=1e-12, atol=1e-12)
