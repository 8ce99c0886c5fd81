"""Gym-style vectorized environment handle over a flocksim world.

Actions are 4 scalars per environment, clipped to [-1, 1] and denormalized
against the ranges declared in the simulator config:

- attitude mode: (roll, pitch, yaw_rate, thrust) scaled by
  (max_tilt, max_tilt, max_yaw_rate, thrust_max with thrust mapped from
  [-1, 1] to [0, thrust_max]).
- velocity mode: (vx, vy, vz, yaw_rate) scaled by
  (max_speed_cmd, ..., max_yaw_rate), velocities in the vehicle frame.

Observations use the core's documented 16-value flat layout.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

import flocksim
from flocksim.camera import CameraDisabledError, render
from flocksim.config import load_config
from flocksim.control import AttitudeCommands, CommandBatch, VelocityCommands
from flocksim.world import OBS_DIM, World

ACTION_DIM = 4

EXPECTED_CONFIG_VERSION = 1


class ShapeMismatchError(ValueError):
    """Action array shape does not match (num_envs, 4)."""


class ClosedHandleError(RuntimeError):
    """Operation on a handle after close()."""


class ConcurrentStepError(RuntimeError):
    """A second step was issued while one was already in flight."""


@dataclass(frozen=True)
class SpaceSpec:
    """Shape and bounds of a flat box space."""

    shape: tuple
    low: float
    high: float
    dtype: str = "float64"


class VecEnvHandle:
    """One world wrapped as a vectorized environment."""

    def __init__(self, world: World):
        if flocksim.CONFIG_VERSION != EXPECTED_CONFIG_VERSION:
            raise RuntimeError(
                f"flocksim config schema {flocksim.CONFIG_VERSION} does not "
                f"match bindings (expected {EXPECTED_CONFIG_VERSION})")
        self._world = world
        self._closed = False
        self._step_lock = threading.Lock()
        n = world.num_envs
        self.observation_space = SpaceSpec(shape=(n, OBS_DIM),
                                           low=-np.inf, high=np.inf)
        self.action_space = SpaceSpec(shape=(n, ACTION_DIM), low=-1.0, high=1.0)

    # ------------------------------------------------------------------

    @property
    def num_envs(self) -> int:
        return self._world.num_envs

    @property
    def control_mode(self) -> str:
        return self._world.env.control_mode

    def _check_open(self):
        if self._closed:
            raise ClosedHandleError("handle is closed")

    def _commands_from_actions(self, actions: np.ndarray) -> CommandBatch:
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.num_envs, ACTION_DIM):
            raise ShapeMismatchError(
                f"expected actions of shape {(self.num_envs, ACTION_DIM)}, "
                f"got {actions.shape}")
        a = np.clip(actions, -1.0, 1.0)
        limits = self._world.limits
        if self.control_mode == "attitude":
            thrust = (a[:, 3] + 1.0) / 2.0 * self._world.robot.thrust_max
            return CommandBatch.all_attitude(AttitudeCommands(
                roll=a[:, 0] * limits.max_tilt,
                pitch=a[:, 1] * limits.max_tilt,
                yaw_rate=a[:, 2] * limits.max_yaw_rate,
                thrust=thrust))
        return CommandBatch.all_velocity(VelocityCommands(
            v=a[:, 0:3] * limits.max_speed_cmd,
            yaw_rate=a[:, 3] * limits.max_yaw_rate))

    # ------------------------------------------------------------------

    def reset(self) -> np.ndarray:
        """Reset every environment; returns the fresh observation batch."""
        self._check_open()
        return self._world.reset_all()

    def step(self, actions) -> tuple:
        """Denormalize actions and advance the world one step.

        Returns (observations, rewards, terminated, truncated, info) with
        the native world's exact values.
        """
        self._check_open()
        if not self._step_lock.acquire(blocking=False):
            raise ConcurrentStepError("a step is already in flight")
        try:
            cmds = self._commands_from_actions(actions)
            res = self._world.step(cmds)
            return (res.observations, res.reward, res.terminated,
                    res.truncated, res.info)
        finally:
            self._step_lock.release()

    def render_depth(self):
        """Depth and segmentation batch in the core's documented layout."""
        self._check_open()
        if self._world.camera is None:
            raise CameraDisabledError("config has no enabled camera")
        return render(self._world, self._world.camera)

    def observations(self) -> np.ndarray:
        self._check_open()
        return self._world.observations()

    def close(self) -> None:
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def make(config_path, workers: int = 1) -> VecEnvHandle:
    """Build a handle from a simulator config file.

    Config and asset errors surface with their native diagnostics.
    """
    cfg = load_config(config_path)
    return VecEnvHandle(World.create(cfg, workers=workers))
