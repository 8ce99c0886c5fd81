import math

import numpy as np
import pytest

from flocksim import se3
from flocksim.dynamics import (
    NonFiniteStateError,
    RigidState,
    RigidStateBatch,
    RobotParams,
    Wrench,
    WrenchBatch,
    saturate,
    saturate_batch,
    step,
    step_batch,
)


def random_batch(rng, n):
    return RigidStateBatch(
        p=rng.uniform(-5, 5, (n, 3)),
        q=se3.exp_so3(rng.uniform(-2, 2, (n, 3))),
        v=rng.uniform(-3, 3, (n, 3)),
        omega=rng.uniform(-2, 2, (n, 3)),
    )


def random_wrenches(rng, n, params):
    return WrenchBatch(
        thrust=rng.uniform(0, params.thrust_max, n),
        moment=rng.uniform(-1, 1, (n, 3)) * params.moment_max,
    )


class TestRobotParams:
    def test_defaults_valid(self):
        p = RobotParams()
        assert p.hover_thrust == pytest.approx(9.81)

    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError, match="mass"):
            RobotParams(mass=-1.0)

    def test_rejects_asymmetric_inertia(self):
        j = np.diag([0.01, 0.01, 0.02])
        j[0, 1] = 1e-3
        with pytest.raises(ValueError, match="symmetric"):
            RobotParams(inertia=j)

    def test_rejects_indefinite_inertia(self):
        with pytest.raises(ValueError, match="positive definite"):
            RobotParams(inertia=np.diag([0.01, -0.01, 0.02]))

    def test_rejects_weak_thrust(self):
        with pytest.raises(ValueError, match="thrust_max"):
            RobotParams(thrust_max=5.0)

    def test_rejects_bad_moment_max(self):
        with pytest.raises(ValueError, match="moment_max"):
            RobotParams(moment_max=[1.0, 0.0, 1.0])


class TestSaturate:
    def test_negative_thrust_clamped_to_zero(self):
        p = RobotParams()
        w = saturate(Wrench(thrust=-2.0, moment=np.zeros(3)), p)
        assert w.thrust == 0.0

    def test_hover_thrust_unchanged(self):
        p = RobotParams()
        w = saturate(Wrench(thrust=p.hover_thrust, moment=np.zeros(3)), p)
        assert w.thrust == p.hover_thrust

    def test_moment_clamp(self):
        p = RobotParams(moment_max=[1.0, 1.0, 1.0])
        w = saturate(Wrench(thrust=5.0, moment=[10.0, 0.0, 0.0]), p)
        np.testing.assert_array_equal(w.moment, [1.0, 0.0, 0.0])

    def test_batch_clamp(self):
        p = RobotParams()
        w = saturate_batch(
            WrenchBatch(thrust=[-1.0, 100.0], moment=[[5.0, -5.0, 0.1]] * 2), p)
        np.testing.assert_array_equal(w.thrust, [0.0, p.thrust_max])
        np.testing.assert_array_equal(w.moment[0], [2.0, -2.0, 0.1])


class TestStep:
    def test_hover_is_fixed_point(self):
        params = RobotParams()
        state = RigidState.rest(p=[1.0, 2.0, 3.0])
        w = Wrench(thrust=params.hover_thrust, moment=np.zeros(3))
        s = state
        for _ in range(1000):
            s = step(s, params, w, 0.01)
        np.testing.assert_allclose(s.p, state.p, atol=1e-12)
        np.testing.assert_allclose(s.v, 0.0, atol=1e-12)
        np.testing.assert_allclose(s.omega, 0.0, atol=1e-12)
        np.testing.assert_allclose(s.q, state.q, atol=1e-12)

    def test_ballistic_matches_discrete_closed_form(self):
        # Oracle: independent python-float loop of the same discrete scheme.
        params = RobotParams()
        dt = 0.01
        s = RigidState(p=np.zeros(3), q=[1, 0, 0, 0], v=[1.0, 0.0, 0.0],
                       omega=np.zeros(3))
        w = Wrench(thrust=0.0, moment=np.zeros(3))
        for _ in range(100):
            s = step(s, params, w, dt)

        px, vz, pz = 0.0, 0.0, 0.0
        for _ in range(100):
            vz = vz + dt * (0.0 * 1.0 - 9.81)
            pz = pz + dt * vz
            px = px + dt * 1.0
        np.testing.assert_array_equal(s.p, [px, 0.0, pz])
        np.testing.assert_array_equal(s.v, [1.0, 0.0, vz])

    def test_torque_free_principal_spin_constant(self):
        params = RobotParams(inertia=np.diag([1.0, 1.0, 2.0]), moment_max=[5, 5, 5])
        s = RigidState(p=np.zeros(3), q=[1, 0, 0, 0], v=np.zeros(3),
                       omega=[0.0, 0.0, 3.0])
        w = Wrench(thrust=0.0, moment=np.zeros(3))
        for _ in range(200):
            s = step(s, params, w, 0.01)
        np.testing.assert_array_equal(s.omega, [0.0, 0.0, 3.0])

    def test_angular_momentum_conserved_torque_free(self):
        params = RobotParams()
        j = params.inertia
        s = RigidState(p=np.zeros(3), q=[1, 0, 0, 0], v=np.zeros(3),
                       omega=[1.0, -0.5, 2.0])
        w = Wrench(thrust=0.0, moment=np.zeros(3))
        l0 = np.linalg.norm(se3.quat_to_matrix(s.q) @ (j @ s.omega))
        for _ in range(1000):
            s = step(s, params, w, 0.01)
            l = np.linalg.norm(se3.quat_to_matrix(s.q) @ (j @ s.omega))
            assert abs(l - l0) / l0 < 1e-3

    def test_speed_conserved_force_free_no_gravity(self):
        params = RobotParams(gravity=0.0, thrust_max=25.0)
        s = RigidState(p=np.zeros(3), q=se3.rot_zyx(0.3, 0.2, 0.1),
                       v=[2.0, -1.0, 0.5], omega=[0.5, 0.2, -0.3])
        w = Wrench(thrust=0.0, moment=np.zeros(3))
        speed = np.linalg.norm(s.v)
        for _ in range(500):
            prev = np.linalg.norm(s.v)
            s = step(s, params, w, 0.01)
            assert abs(np.linalg.norm(s.v) - prev) < 1e-12
        assert abs(np.linalg.norm(s.v) - speed) < 1e-10

    def test_dt_validation(self):
        params = RobotParams()
        s = RigidState.rest()
        w = Wrench(thrust=0.0, moment=np.zeros(3))
        for bad in (0.0, -0.01, 0.2):
            with pytest.raises(ValueError, match="dt"):
                step(s, params, w, bad)

    def test_nonfinite_raises(self):
        params = RobotParams()
        s = RigidState(p=[np.nan, 0, 0], q=[1, 0, 0, 0], v=np.zeros(3),
                       omega=np.zeros(3))
        with pytest.raises(NonFiniteStateError):
            step(s, params, Wrench(thrust=0.0, moment=np.zeros(3)), 0.01)

    def test_velocity_hard_clamp_sets_flag(self):
        params = RobotParams(v_limit=1.0)
        batch = RigidStateBatch.rest(1)
        batch.v[0] = [0.0, 0.0, 0.0]
        w = WrenchBatch(thrust=[0.0], moment=np.zeros((1, 3)))
        out, flags = batch, None
        for _ in range(50):
            out, flags = step_batch(out, params, w, 0.01)
        assert flags.clamped[0]
        assert np.linalg.norm(out.v[0]) <= 1.0 + 1e-12


class TestStepBatch:
    def test_n1_reduces_to_step(self):
        rng = np.random.default_rng(0)
        params = RobotParams()
        batch = random_batch(rng, 1)
        w = random_wrenches(rng, 1, params)
        out, flags = step_batch(batch, params, w, 0.01)
        single = step(batch.at(0), params, w.at(0), 0.01)
        np.testing.assert_array_equal(out.p[0], single.p)
        np.testing.assert_array_equal(out.q[0], single.q)
        np.testing.assert_array_equal(out.v[0], single.v)
        np.testing.assert_array_equal(out.omega[0], single.omega)

    def test_identical_inputs_identical_outputs(self):
        params = RobotParams()
        batch = RigidStateBatch.rest(2, p=[[1, 1, 1], [1, 1, 1]])
        batch.omega[:] = [0.3, -0.2, 0.1]
        w = WrenchBatch(thrust=[5.0, 5.0], moment=[[0.1, 0, 0]] * 2)
        out, _ = step_batch(batch, params, w, 0.01)
        np.testing.assert_array_equal(out.p[0], out.p[1])
        np.testing.assert_array_equal(out.q[0], out.q[1])
        np.testing.assert_array_equal(out.v[0], out.v[1])
        np.testing.assert_array_equal(out.omega[0], out.omega[1])

    @pytest.mark.parametrize("n", [1, 7, 1024])
    def test_batch_matches_scalar_loop_bitwise(self, n):
        rng = np.random.default_rng(42)
        params = RobotParams()
        batch = random_batch(rng, n)
        w = random_wrenches(rng, n, params)
        out, _ = step_batch(batch, params, w, 0.01)
        for i in range(n):
            single = step(batch.at(i), params, w.at(i), 0.01)
            assert np.array_equal(out.p[i], single.p)
            assert np.array_equal(out.q[i], single.q)
            assert np.array_equal(out.v[i], single.v)
            assert np.array_equal(out.omega[i], single.omega)

    @pytest.mark.parametrize("workers", [2, 3, 8])
    def test_partitioning_does_not_change_results(self, workers):
        rng = np.random.default_rng(1)
        params = RobotParams()
        batch = random_batch(rng, 257)
        w = random_wrenches(rng, 257, params)
        ref, ref_flags = step_batch(batch, params, w, 0.01, workers=1)
        out, flags = step_batch(batch, params, w, 0.01, workers=workers)
        assert np.array_equal(ref.p, out.p)
        assert np.array_equal(ref.q, out.q)
        assert np.array_equal(ref.v, out.v)
        assert np.array_equal(ref.omega, out.omega)
        assert np.array_equal(ref_flags.clamped, flags.clamped)

    def test_nonfinite_collected_as_mask(self):
        params = RobotParams()
        batch = RigidStateBatch.rest(3)
        batch.p[1, 0] = np.inf
        w = WrenchBatch.zeros(3)
        _, flags = step_batch(batch, params, w, 0.01)
        np.testing.assert_array_equal(flags.nonfinite, [False, True, False])

    def test_length_mismatch_rejected(self):
        params = RobotParams()
        with pytest.raises(ValueError, match="length"):
            step_batch(RigidStateBatch.rest(2), params, WrenchBatch.zeros(3), 0.01)
