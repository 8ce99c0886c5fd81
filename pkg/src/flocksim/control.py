"""Batched nonlinear geometric controllers on SE(3).

Two flight modes are provided, mirroring common real-world autopilot
interfaces:

- attitude mode: commands are roll, pitch, yaw rate and collective thrust;
  the controller produces a body moment from the rotation error between the
  current attitude and R_z(yaw) R_y(pitch) R_x(roll) built at the robot's
  current yaw.
- velocity mode: commands are a vehicle-frame velocity vector and yaw rate;
  the velocity error is converted into commanded tilt angles and thrust,
  which are then tracked by the attitude controller.

The vehicle frame shares the robot's yaw but keeps its x-y plane parallel
to the ground. The attitude feed-forward term of the original SE(3)
tracking controller is not included. All functions operate on batches and
are bitwise independent of batch partitioning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import se3
from .dynamics import RigidStateBatch, RobotParams, WrenchBatch, saturate_batch

MODE_ATTITUDE = 0
MODE_VELOCITY = 1

# Commanded-acceleration norms below this use level attitude, hover thrust.
DEGENERATE_ACCEL = 1e-6


class InvalidCommandError(ValueError):
    """Raised for non-finite or out-of-range command values."""


@dataclass
class ControlGains:
    """Diagonal controller gains; every entry must be strictly positive.

    attitude scales the rotation error, rate the angular-velocity error,
    velocity the vehicle-frame velocity error.
    """

    attitude: np.ndarray = field(default_factory=lambda: np.array([8.0, 8.0, 2.0]))
    rate: np.ndarray = field(default_factory=lambda: np.array([1.2, 1.2, 0.6]))
    velocity: np.ndarray = field(default_factory=lambda: np.array([3.0, 3.0, 3.0]))

    def __post_init__(self):
        self.attitude = np.asarray(self.attitude, dtype=np.float64)
        self.rate = np.asarray(self.rate, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        for name in ("attitude", "rate", "velocity"):
            v = getattr(self, name)
            if v.shape != (3,) or (v <= 0.0).any():
                raise ValueError(f"{name} gains must be strictly positive 3-vectors")


@dataclass
class ControlLimits:
    """Command envelope keeping the tilt parameterization away from pi/2."""

    max_tilt: float = 0.6        # rad, clamp on commanded roll/pitch
    max_speed_cmd: float = 5.0   # m/s, clamp on commanded vehicle velocity
    max_yaw_rate: float = 3.0    # rad/s, declared range for normalized actions

    def __post_init__(self):
        if not 0.0 < self.max_tilt < np.pi / 2:
            raise ValueError("max_tilt must be in (0, pi/2)")
        if self.max_speed_cmd <= 0.0 or self.max_yaw_rate <= 0.0:
            raise ValueError("command limits must be positive")


@dataclass
class AttitudeCommands:
    """Batched attitude-mode commands: tilt angles, yaw rate, thrust."""

    roll: np.ndarray      # (N,) rad
    pitch: np.ndarray     # (N,) rad
    yaw_rate: np.ndarray  # (N,) rad/s
    thrust: np.ndarray    # (N,) N

    def __post_init__(self):
        self.roll = np.atleast_1d(np.asarray(self.roll, dtype=np.float64))
        self.pitch = np.atleast_1d(np.asarray(self.pitch, dtype=np.float64))
        self.yaw_rate = np.atleast_1d(np.asarray(self.yaw_rate, dtype=np.float64))
        self.thrust = np.atleast_1d(np.asarray(self.thrust, dtype=np.float64))
        fields = (self.roll, self.pitch, self.yaw_rate, self.thrust)
        if not all(np.isfinite(f).all() for f in fields):
            raise InvalidCommandError("attitude command contains non-finite values")
        if (np.abs(self.roll) >= np.pi / 2).any() or (np.abs(self.pitch) >= np.pi / 2).any():
            raise InvalidCommandError("commanded tilt angles must satisfy |angle| < pi/2")

    @classmethod
    def single(cls, roll, pitch, yaw_rate, thrust) -> "AttitudeCommands":
        return cls(roll=[roll], pitch=[pitch], yaw_rate=[yaw_rate], thrust=[thrust])

    @classmethod
    def hover(cls, n: int, params: RobotParams) -> "AttitudeCommands":
        return cls(roll=np.zeros(n), pitch=np.zeros(n), yaw_rate=np.zeros(n),
                   thrust=np.full(n, params.hover_thrust))

    @property
    def n(self) -> int:
        return self.roll.shape[0]

    def slice(self, sl: slice) -> "AttitudeCommands":
        return AttitudeCommands(roll=self.roll[sl], pitch=self.pitch[sl],
                                yaw_rate=self.yaw_rate[sl], thrust=self.thrust[sl])


@dataclass
class VelocityCommands:
    """Batched velocity-mode commands: vehicle-frame velocity and yaw rate."""

    v: np.ndarray         # (N, 3) m/s in the vehicle frame
    yaw_rate: np.ndarray  # (N,) rad/s

    def __post_init__(self):
        self.v = np.atleast_2d(np.asarray(self.v, dtype=np.float64))
        self.yaw_rate = np.atleast_1d(np.asarray(self.yaw_rate, dtype=np.float64))
        if not (np.isfinite(self.v).all() and np.isfinite(self.yaw_rate).all()):
            raise InvalidCommandError("velocity command contains non-finite values")

    @classmethod
    def single(cls, v, yaw_rate) -> "VelocityCommands":
        return cls(v=np.asarray(v, dtype=np.float64)[None, :], yaw_rate=[yaw_rate])

    @property
    def n(self) -> int:
        return self.v.shape[0]

    def slice(self, sl: slice) -> "VelocityCommands":
        return VelocityCommands(v=self.v[sl], yaw_rate=self.yaw_rate[sl])


@dataclass
class CommandBatch:
    """Per-robot tagged union of attitude- and velocity-mode commands."""

    mode: np.ndarray              # (N,) uint8, MODE_ATTITUDE or MODE_VELOCITY
    attitude: AttitudeCommands
    velocity: VelocityCommands

    def __post_init__(self):
        self.mode = np.atleast_1d(np.asarray(self.mode, dtype=np.uint8))

    @classmethod
    def all_attitude(cls, att: AttitudeCommands) -> "CommandBatch":
        n = att.n
        return cls(mode=np.zeros(n, dtype=np.uint8), attitude=att,
                   velocity=VelocityCommands(v=np.zeros((n, 3)), yaw_rate=np.zeros(n)))

    @classmethod
    def all_velocity(cls, vel: VelocityCommands) -> "CommandBatch":
        n = vel.n
        return cls(mode=np.full(n, MODE_VELOCITY, dtype=np.uint8),
                   attitude=AttitudeCommands(roll=np.zeros(n), pitch=np.zeros(n),
                                             yaw_rate=np.zeros(n), thrust=np.zeros(n)),
                   velocity=vel)

    @property
    def n(self) -> int:
        return self.mode.shape[0]

    def slice(self, sl: slice) -> "CommandBatch":
        return CommandBatch(mode=self.mode[sl], attitude=self.attitude.slice(sl),
                            velocity=self.velocity.slice(sl))


@dataclass
class ControlErrors:
    """Rotation and angular-velocity tracking errors."""

    rotation: np.ndarray  # (N, 3), e_R = 0.5 * vee(Rd^T R - R^T Rd)
    rate: np.ndarray      # (N, 3), e_w = w - R^T Rd wd


@dataclass
class ControlFlags:
    """Per-robot diagnostic flags from one controller evaluation."""

    gimbal_degenerate: np.ndarray       # (N,) bool, yaw extraction near pitch +-pi/2
    degenerate_acceleration: np.ndarray  # (N,) bool, velocity mode fell back to hover


def desired_attitude(yaw: np.ndarray, cmd: AttitudeCommands
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Desired orientation and body rate for attitude-mode commands.

    The desired rotation keeps the robot's current yaw and applies the
    commanded tilt: R_d = R_z(yaw) R_y(pitch) R_x(roll). The desired body
    rate maps the commanded yaw rate through the Euler-rate matrix:

        wd = (-sin(pitch), sin(roll) cos(pitch), cos(roll) cos(pitch)) * yaw_rate

    Args:
        yaw: (N,) current yaw angles, rad.
        cmd: batched attitude commands.
    Returns:
        (q_d, omega_d): (N, 4) desired orientation, (N, 3) desired body rate.
    """
    yaw = np.atleast_1d(np.asarray(yaw, dtype=np.float64))
    q_d = se3.rot_zyx(cmd.roll, cmd.pitch, yaw)
    sp, cp = np.sin(cmd.pitch), np.cos(cmd.pitch)
    sr, cr = np.sin(cmd.roll), np.cos(cmd.roll)
    omega_d = np.stack(
        [
            -sp * cmd.yaw_rate,
            sr * cp * cmd.yaw_rate,
            cr * cp * cmd.yaw_rate,
        ],
        axis=-1,
    )
    return q_d, omega_d


def attitude_errors(q: np.ndarray, omega: np.ndarray, q_d: np.ndarray,
                    omega_d: np.ndarray) -> ControlErrors:
    """Geometric attitude and rate errors between current and desired state.

    rotation error: e_R = 0.5 * vee(Rd^T R - R^T Rd)
    rate error:     e_w = w - (Rd^T R)^T wd
    """
    r = se3.quat_to_matrix(np.atleast_2d(q))
    r_d = se3.quat_to_matrix(np.atleast_2d(q_d))
    omega = np.atleast_2d(omega)
    omega_d = np.atleast_2d(omega_d)

    # a = Rd^T R, written out to stay elementwise
    a = np.empty(r.shape)
    for i in range(3):
        for j in range(3):
            a[:, i, j] = (r_d[:, 0, i] * r[:, 0, j]
                          + r_d[:, 1, i] * r[:, 1, j]
                          + r_d[:, 2, i] * r[:, 2, j])

    e_rot = 0.5 * np.stack(
        [
            a[:, 2, 1] - a[:, 1, 2],
            a[:, 0, 2] - a[:, 2, 0],
            a[:, 1, 0] - a[:, 0, 1],
        ],
        axis=-1,
    )
    # R^T Rd wd = a^T wd
    wd_body = np.stack(
        [
            a[:, 0, 0] * omega_d[:, 0] + a[:, 1, 0] * omega_d[:, 1] + a[:, 2, 0] * omega_d[:, 2],
            a[:, 0, 1] * omega_d[:, 0] + a[:, 1, 1] * omega_d[:, 1] + a[:, 2, 1] * omega_d[:, 2],
            a[:, 0, 2] * omega_d[:, 0] + a[:, 1, 2] * omega_d[:, 1] + a[:, 2, 2] * omega_d[:, 2],
        ],
        axis=-1,
    )
    return ControlErrors(rotation=e_rot, rate=omega - wd_body)


def attitude_control(states: RigidStateBatch, cmd: AttitudeCommands,
                     gains: ControlGains, params: RobotParams) -> WrenchBatch:
    """Attitude-mode control law producing a saturated wrench.

    M = -k_att * e_R - k_rate * e_w + w x J w, thrust passed through.
    """
    yaw, _ = se3.yaw_of(states.q)
    q_d, omega_d = desired_attitude(yaw, cmd)
    err = attitude_errors(states.q, states.omega, q_d, omega_d)

    j = params.inertia
    wx, wy, wz = states.omega[:, 0], states.omega[:, 1], states.omega[:, 2]
    jwx = j[0, 0] * wx + j[0, 1] * wy + j[0, 2] * wz
    jwy = j[1, 0] * wx + j[1, 1] * wy + j[1, 2] * wz
    jwz = j[2, 0] * wx + j[2, 1] * wy + j[2, 2] * wz
    gyro = np.stack(
        [wy * jwz - wz * jwy, wz * jwx - wx * jwz, wx * jwy - wy * jwx], axis=-1)

    moment = -gains.attitude * err.rotation - gains.rate * err.rate + gyro
    return saturate_batch(WrenchBatch(thrust=cmd.thrust, moment=moment), params)


def velocity_control(states: RigidStateBatch, cmd: VelocityCommands,
                     gains: ControlGains, params: RobotParams,
                     limits: ControlLimits | None = None
                     ) -> tuple[AttitudeCommands, np.ndarray]:
    """Velocity-mode outer loop: tilt angles and thrust from velocity error.

    The commanded acceleration a = k_vel * (v_cmd - v) is combined with
    gravity compensation g_vec = (0, 0, g) into a total acceleration demand;
    thrust is its component along the body z axis expressed in the vehicle
    frame, scaled by mass, and the tilt angles orient the body z axis along
    the demand:

        thrust = m * (a + g_vec) . b3_vehicle
        roll   = atan2(-(a+g)_y, sqrt((a+g)_x^2 + (a+g)_z^2))
        pitch  = atan2((a+g)_x, (a+g)_z)

    Tilt angles are clamped to +-max_tilt and the commanded velocity to
    max_speed_cmd. Demands with norm below DEGENERATE_ACCEL fall back to
    level attitude at hover thrust and are flagged.

    Returns:
        (attitude commands, degenerate mask).
    """
    if limits is None:
        limits = ControlLimits()
    yaw, _ = se3.yaw_of(states.q)
    cos_y, sin_y = np.cos(yaw), np.sin(yaw)

    # commanded velocity clamped to the configured envelope
    vcx, vcy, vcz = cmd.v[:, 0], cmd.v[:, 1], cmd.v[:, 2]
    vnorm = np.sqrt(vcx * vcx + vcy * vcy + vcz * vcz)
    scale = np.where(vnorm > limits.max_speed_cmd,
                     limits.max_speed_cmd / np.where(vnorm == 0.0, 1.0, vnorm), 1.0)
    vcx, vcy, vcz = vcx * scale, vcy * scale, vcz * scale

    # current velocity in the vehicle frame: R_z(yaw)^T v_world
    vx = cos_y * states.v[:, 0] + sin_y * states.v[:, 1]
    vy = -sin_y * states.v[:, 0] + cos_y * states.v[:, 1]
    vz = states.v[:, 2]

    ax = gains.velocity[0] * (vcx - vx)
    ay = gains.velocity[1] * (vcy - vy)
    az = gains.velocity[2] * (vcz - vz) + params.gravity

    # body z axis in the vehicle frame
    qw, qx, qy, qz = states.q[:, 0], states.q[:, 1], states.q[:, 2], states.q[:, 3]
    b3x = 2.0 * (qx * qz + qw * qy)
    b3y = 2.0 * (qy * qz - qw * qx)
    b3z = 1.0 - 2.0 * (qx * qx + qy * qy)
    vb3x = cos_y * b3x + sin_y * b3y
    vb3y = -sin_y * b3x + cos_y * b3y

    thrust = params.mass * (ax * vb3x + ay * vb3y + az * b3z)
    roll = np.arctan2(-ay, np.sqrt(ax * ax + az * az))
    pitch = np.arctan2(ax, az)
    roll = np.clip(roll, -limits.max_tilt, limits.max_tilt)
    pitch = np.clip(pitch, -limits.max_tilt, limits.max_tilt)

    degenerate = np.sqrt(ax * ax + ay * ay + az * az) < DEGENERATE_ACCEL
    zero = np.zeros_like(roll)
    roll = np.where(degenerate, zero, roll)
    pitch = np.where(degenerate, zero, pitch)
    thrust = np.where(degenerate, params.hover_thrust, thrust)

    att = AttitudeCommands(roll=roll, pitch=pitch, yaw_rate=cmd.yaw_rate,
                           thrust=thrust)
    return att, degenerate


def control_batch(states: RigidStateBatch, cmds: CommandBatch,
                  gains: ControlGains, params: RobotParams,
                  limits: ControlLimits | None = None
                  ) -> tuple[WrenchBatch, ControlFlags]:
    """Route a mixed-mode command batch through the controllers.

    Velocity-mode rows run the outer loop first; the resulting attitude
    commands are merged with the attitude-mode rows and tracked by the
    attitude controller. Elementwise identical to scalar controller calls.
    """
    if cmds.n != states.n:
        raise ValueError("command batch length does not match state batch")
    if limits is None:
        limits = ControlLimits()

    _, gimbal = se3.yaw_of(states.q)
    is_vel = cmds.mode == MODE_VELOCITY
    degenerate = np.zeros(states.n, dtype=bool)

    if is_vel.any():
        att_from_vel, degen = velocity_control(states, cmds.velocity, gains,
                                               params, limits)
        merged = AttitudeCommands(
            roll=np.where(is_vel, att_from_vel.roll, cmds.attitude.roll),
            pitch=np.where(is_vel, att_from_vel.pitch, cmds.attitude.pitch),
            yaw_rate=np.where(is_vel, att_from_vel.yaw_rate, cmds.attitude.yaw_rate),
            thrust=np.where(is_vel, att_from_vel.thrust, cmds.attitude.thrust),
        )
        degenerate = degen & is_vel
    else:
        merged = cmds.attitude

    wrench = attitude_control(states, merged, gains, params)
    return wrench, ControlFlags(gimbal_degenerate=gimbal,
                                degenerate_acceleration=degenerate)
