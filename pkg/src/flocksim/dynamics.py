"""Batched rigid-body dynamics for multirotor robots.

Each robot is a single rigid body driven by a collective thrust along its
body +z axis and a body-frame moment vector. The world frame is z-up with
gravity (0, 0, -g). Integration is semi-implicit Euler at a fixed step:

    v+ = v + dt * ((f/m) * R e3 + g_vec)
    p+ = p + dt * v+
    L+ = exp(-dt w) (J w) + dt * M      (body angular momentum)
    w+ = J^-1 L+
    q+ = q (x) exp_so3(dt * w+)

The gyroscopic term is applied as an exact rotation of the body angular
momentum rather than the explicit increment -dt * w x J w; both agree to
first order in dt, but the rotation form conserves ||J w|| exactly in
torque-free motion instead of growing it every step.

``step_batch`` is data-parallel over robots with no cross-robot coupling;
partitioning the batch across workers does not change results bitwise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import se3

DEFAULT_GRAVITY = 9.81


class NonFiniteStateError(RuntimeError):
    """Raised by the scalar step when the integrated state is non-finite."""


@dataclass
class RobotParams:
    """Physical parameters shared by every robot in a batch.

    Attributes:
        mass: total mass, kg.
        inertia: 3x3 body-frame inertia matrix, kg m^2; symmetric positive
            definite.
        collision_radius: radius of the bounding collision sphere, m.
        thrust_max: collective thrust saturation, N; must exceed hover.
        moment_max: per-axis body moment saturation, N m.
        gravity: gravitational acceleration magnitude, m/s^2.
        v_limit: hard clamp on world-frame speed, m/s.
        omega_limit: hard clamp on body rate norm, rad/s.
    """

    mass: float = 1.0
    inertia: np.ndarray = field(
        default_factory=lambda: np.diag([0.01, 0.01, 0.02]))
    collision_radius: float = 0.2
    thrust_max: float = 25.0
    moment_max: np.ndarray = field(
        default_factory=lambda: np.array([2.0, 2.0, 1.0]))
    gravity: float = DEFAULT_GRAVITY
    v_limit: float = 50.0
    omega_limit: float = 100.0

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=np.float64)
        self.moment_max = np.asarray(self.moment_max, dtype=np.float64)
        if self.mass <= 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.inertia.shape != (3, 3):
            raise ValueError("inertia must be a 3x3 matrix")
        if np.abs(self.inertia - self.inertia.T).max() > 1e-12:
            raise ValueError("inertia matrix must be symmetric")
        if np.linalg.eigvalsh(self.inertia).min() <= 0.0:
            raise ValueError("inertia matrix must be positive definite")
        if self.thrust_max <= self.mass * self.gravity:
            raise ValueError(
                f"thrust_max {self.thrust_max} does not exceed hover thrust "
                f"{self.mass * self.gravity}")
        if (self.moment_max <= 0.0).any():
            raise ValueError("moment_max components must be positive")
        self._inertia_inv = np.linalg.inv(self.inertia)

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity


@dataclass
class RigidState:
    """State of a single robot: position, orientation, velocities.

    p is in the world frame (m), q is a scalar-first body-to-world unit
    quaternion, v is the world-frame velocity (m/s) and omega the body-frame
    angular velocity (rad/s).
    """

    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64).reshape(3)
        self.q = np.asarray(self.q, dtype=np.float64).reshape(4)
        self.v = np.asarray(self.v, dtype=np.float64).reshape(3)
        self.omega = np.asarray(self.omega, dtype=np.float64).reshape(3)

    @classmethod
    def rest(cls, p=(0.0, 0.0, 0.0)) -> "RigidState":
        return cls(p=np.array(p), q=np.array([1.0, 0.0, 0.0, 0.0]),
                   v=np.zeros(3), omega=np.zeros(3))


@dataclass
class RigidStateBatch:
    """Structure-of-arrays state for N robots."""

    p: np.ndarray      # (N, 3)
    q: np.ndarray      # (N, 4)
    v: np.ndarray      # (N, 3)
    omega: np.ndarray  # (N, 3)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.omega = np.asarray(self.omega, dtype=np.float64)

    @classmethod
    def rest(cls, n: int, p: np.ndarray | None = None) -> "RigidStateBatch":
        """Level, motionless batch, optionally at given positions."""
        if p is None:
            p = np.zeros((n, 3))
        q = np.zeros((n, 4))
        q[:, 0] = 1.0
        return cls(p=np.array(p, dtype=np.float64), q=q,
                   v=np.zeros((n, 3)), omega=np.zeros((n, 3)))

    @classmethod
    def from_states(cls, states: list[RigidState]) -> "RigidStateBatch":
        return cls(p=np.stack([s.p for s in states]),
                   q=np.stack([s.q for s in states]),
                   v=np.stack([s.v for s in states]),
                   omega=np.stack([s.omega for s in states]))

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def at(self, i: int) -> RigidState:
        return RigidState(p=self.p[i].copy(), q=self.q[i].copy(),
                          v=self.v[i].copy(), omega=self.omega[i].copy())

    def copy(self) -> "RigidStateBatch":
        return RigidStateBatch(p=self.p.copy(), q=self.q.copy(),
                               v=self.v.copy(), omega=self.omega.copy())

    def slice(self, sl: slice) -> "RigidStateBatch":
        return RigidStateBatch(p=self.p[sl], q=self.q[sl],
                               v=self.v[sl], omega=self.omega[sl])


@dataclass
class Wrench:
    """Collective thrust (N, along body +z) and body moment (N m) for one robot."""

    thrust: float
    moment: np.ndarray

    def __post_init__(self):
        self.moment = np.asarray(self.moment, dtype=np.float64).reshape(3)


@dataclass
class WrenchBatch:
    thrust: np.ndarray  # (N,)
    moment: np.ndarray  # (N, 3)

    def __post_init__(self):
        self.thrust = np.asarray(self.thrust, dtype=np.float64)
        self.moment = np.asarray(self.moment, dtype=np.float64)

    @classmethod
    def zeros(cls, n: int) -> "WrenchBatch":
        return cls(thrust=np.zeros(n), moment=np.zeros((n, 3)))

    @property
    def n(self) -> int:
        return self.thrust.shape[0]

    def at(self, i: int) -> Wrench:
        return Wrench(thrust=float(self.thrust[i]), moment=self.moment[i].copy())

    def slice(self, sl: slice) -> "WrenchBatch":
        return WrenchBatch(thrust=self.thrust[sl], moment=self.moment[sl])


@dataclass
class StepFlags:
    """Per-robot diagnostics from one integration step."""

    clamped: np.ndarray    # (N,) bool: velocity or rate hit its hard limit
    nonfinite: np.ndarray  # (N,) bool: state went non-finite, caller resets

    def slice(self, sl: slice) -> "StepFlags":
        return StepFlags(clamped=self.clamped[sl], nonfinite=self.nonfinite[sl])


def saturate_batch(wrench: WrenchBatch, params: RobotParams) -> WrenchBatch:
    """Clamp thrust to [0, thrust_max] and moments to +-moment_max."""
    f = np.clip(wrench.thrust, 0.0, params.thrust_max)
    m = np.clip(wrench.moment, -params.moment_max, params.moment_max)
    return WrenchBatch(thrust=f, moment=m)


def saturate(wrench: Wrench, params: RobotParams) -> Wrench:
    """Scalar form of saturate_batch."""
    batch = saturate_batch(
        WrenchBatch(thrust=np.array([wrench.thrust]),
                    moment=wrench.moment[None, :]), params)
    return batch.at(0)


def _clamp_norm(vec: np.ndarray, limit: float) -> tuple[np.ndarray, np.ndarray]:
    """Rescale rows of (N, 3) vec whose norm exceeds limit; returns mask."""
    x, y, z = vec[:, 0], vec[:, 1], vec[:, 2]
    norm = np.sqrt(x * x + y * y + z * z)
    over = norm > limit
    scale = np.where(over, limit / np.where(norm == 0.0, 1.0, norm), 1.0)
    return vec * scale[:, None], over


def step_batch(
    states: RigidStateBatch,
    params: RobotParams,
    wrenches: WrenchBatch,
    dt: float,
    workers: int = 1,
) -> tuple[RigidStateBatch, StepFlags]:
    """Advance every robot by one semi-implicit Euler step.

    Args:
        states: batch of N robot states.
        params: shared physical parameters.
        wrenches: batch of N saturated wrenches.
        dt: time step in (0, 0.1] seconds.
        workers: optional thread count; partitioning never changes results.
    Returns:
        (new_states, flags); flags.nonfinite marks robots whose state went
        non-finite and must be reset by the caller.
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must be in (0, 0.1], got {dt}")
    if states.n != wrenches.n:
        raise ValueError("states and wrenches must have the same length")

    if workers > 1 and states.n >= 2 * workers:
        return _run_partitioned(states, params, wrenches, dt, workers)
    return _step_kernel(states, params, wrenches, dt)


def _run_partitioned(states, params, wrenches, dt, workers):
    n = states.n
    bounds = [(n * k) // workers for k in range(workers + 1)]
    slices = [slice(bounds[k], bounds[k + 1]) for k in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(
            lambda sl: _step_kernel(states.slice(sl), params, wrenches.slice(sl), dt),
            slices))
    out = RigidStateBatch(
        p=np.concatenate([s.p for s, _ in parts]),
        q=np.concatenate([s.q for s, _ in parts]),
        v=np.concatenate([s.v for s, _ in parts]),
        omega=np.concatenate([s.omega for s, _ in parts]))
    flags = StepFlags(
        clamped=np.concatenate([f.clamped for _, f in parts]),
        nonfinite=np.concatenate([f.nonfinite for _, f in parts]))
    return out, flags


def _step_kernel(states, params, wrenches, dt):
    m = params.mass
    g = params.gravity
    j = params.inertia
    j_inv = params.inertia_inv

    qw, qx, qy, qz = (states.q[:, 0], states.q[:, 1],
                      states.q[:, 2], states.q[:, 3])
    # body +z axis in world coordinates (third column of R)
    b3x = 2.0 * (qx * qz + qw * qy)
    b3y = 2.0 * (qy * qz - qw * qx)
    b3z = 1.0 - 2.0 * (qx * qx + qy * qy)

    a = wrenches.thrust / m
    v_new = np.stack(
        [
            states.v[:, 0] + dt * (a * b3x),
            states.v[:, 1] + dt * (a * b3y),
            states.v[:, 2] + dt * (a * b3z - g),
        ],
        axis=-1,
    )
    v_new, v_over = _clamp_norm(v_new, params.v_limit)
    p_new = states.p + dt * v_new

    wx, wy, wz = states.omega[:, 0], states.omega[:, 1], states.omega[:, 2]
    # body angular momentum L = J w, entries of J as scalars
    lx = j[0, 0] * wx + j[0, 1] * wy + j[0, 2] * wz
    ly = j[1, 0] * wx + j[1, 1] * wy + j[1, 2] * wz
    lz = j[2, 0] * wx + j[2, 1] * wy + j[2, 2] * wz
    # gyroscopic update: rotate L by exp(-dt w), then add the applied moment
    l_rot = se3.quat_rotate(
        se3.exp_so3(-dt * states.omega), np.stack([lx, ly, lz], axis=-1))
    tx = l_rot[:, 0] + dt * wrenches.moment[:, 0]
    ty = l_rot[:, 1] + dt * wrenches.moment[:, 1]
    tz = l_rot[:, 2] + dt * wrenches.moment[:, 2]
    omega_new = np.stack(
        [
            j_inv[0, 0] * tx + j_inv[0, 1] * ty + j_inv[0, 2] * tz,
            j_inv[1, 0] * tx + j_inv[1, 1] * ty + j_inv[1, 2] * tz,
            j_inv[2, 0] * tx + j_inv[2, 1] * ty + j_inv[2, 2] * tz,
        ],
        axis=-1,
    )
    omega_new, w_over = _clamp_norm(omega_new, params.omega_limit)

    q_new = se3.quat_multiply(states.q, se3.exp_so3(dt * omega_new))

    nonfinite = ~(
        np.isfinite(p_new).all(axis=1)
        & np.isfinite(q_new).all(axis=1)
        & np.isfinite(v_new).all(axis=1)
        & np.isfinite(omega_new).all(axis=1)
    )
    out = RigidStateBatch(p=p_new, q=q_new, v=v_new, omega=omega_new)
    return out, StepFlags(clamped=v_over | w_over, nonfinite=nonfinite)


def step(state: RigidState, params: RobotParams, wrench: Wrench,
         dt: float) -> RigidState:
    """Single-robot step; raises NonFiniteStateError instead of flagging.

    Runs the same kernel as step_batch on a batch of one, so looping this
    over a batch reproduces step_batch bitwise.
    """
    batch = RigidStateBatch(p=state.p[None, :], q=state.q[None, :],
                            v=state.v[None, :], omega=state.omega[None, :])
    wbatch = WrenchBatch(thrust=np.array([wrench.thrust]),
                         moment=wrench.moment[None, :])
    out, flags = step_batch(batch, params, wbatch, dt)
    if flags.nonfinite[0]:
        raise NonFiniteStateError("integrated state is non-finite")
    return out.at(0)
