"""Simulator configuration: schema dataclasses and the YAML file loader.

The config file is YAML with sections {robot, gains, limits, env,
asset_classes, camera, reward}; every key has a shipped default and unknown
keys are rejected with their location. `version` pins the schema revision
consumed by external bindings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import CONFIG_VERSION
from .assets import AssetClassConfig
from .camera import CameraConfig
from .control import ControlGains, ControlLimits
from .dynamics import RobotParams

CONTROL_MODES = ("attitude", "velocity")


class ConfigError(ValueError):
    """Malformed, unknown, or out-of-range configuration content."""


@dataclass
class EnvConfig:
    """World layout: environment count, bounds, episode and spawn settings.

    Goal and spawn bounds are fractions of the environment box; each
    environment is an axis-aligned box with its origin at a corner.
    """

    num_envs: int = 16
    bounds: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0, 5.0]))
    episode_max_steps: int = 1000
    dt: float = 0.01
    control_mode: str = "velocity"
    seed: int = 0
    wall_enabled: bool = False
    wall_thickness: float = 0.1
    wall_segmentation_id: int = 1
    goal_min: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.1, 0.2]))
    goal_max: np.ndarray = field(default_factory=lambda: np.array([0.9, 0.9, 0.8]))
    spawn_min: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.1, 0.2]))
    spawn_max: np.ndarray = field(default_factory=lambda: np.array([0.9, 0.9, 0.8]))

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=np.float64).reshape(3)
        for name in ("goal_min", "goal_max", "spawn_min", "spawn_max"):
            setattr(self, name,
                    np.asarray(getattr(self, name), dtype=np.float64).reshape(3))
        if self.num_envs < 1:
            raise ConfigError("num_envs must be >= 1")
        if (self.bounds <= 0.0).any():
            raise ConfigError("env bounds must be positive")
        if not 0.0 < self.dt <= 0.1:
            raise ConfigError(f"dt must be in (0, 0.1], got {self.dt}")
        if self.episode_max_steps < 1:
            raise ConfigError("episode_max_steps must be >= 1")
        if self.control_mode not in CONTROL_MODES:
            raise ConfigError(f"control_mode must be one of {CONTROL_MODES}")
        for lo, hi in (("goal_min", "goal_max"), ("spawn_min", "spawn_max")):
            a, b = getattr(self, lo), getattr(self, hi)
            if (a > b).any() or (a < 0).any() or (b > 1).any():
                raise ConfigError(f"{lo}/{hi} must satisfy 0 <= min <= max <= 1")
        if self.wall_thickness <= 0.0:
            raise ConfigError("wall_thickness must be positive")
        if self.wall_segmentation_id < 1:
            raise ConfigError("wall_segmentation_id must be >= 1")


@dataclass
class RewardConfig:
    """Goal-reaching reward shape constants."""

    c_dist: float = 0.1
    c_vel: float = 0.01
    c_step: float = 0.01
    c_success: float = 10.0
    c_crash: float = 10.0
    success_radius: float = 0.2


@dataclass
class SimConfig:
    """Everything needed to build a world."""

    robot: RobotParams = field(default_factory=RobotParams)
    gains: ControlGains = field(default_factory=ControlGains)
    limits: ControlLimits = field(default_factory=ControlLimits)
    env: EnvConfig = field(default_factory=EnvConfig)
    asset_classes: list = field(default_factory=list)
    camera: CameraConfig | None = None
    reward: RewardConfig = field(default_factory=RewardConfig)


def _check_keys(section: dict, allowed, where: str):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}; "
                          f"allowed: {sorted(allowed)}")


def _build(cls, section: dict, where: str, **extra):
    try:
        return cls(**section, **extra)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_ROBOT_KEYS = ("mass", "inertia", "collision_radius", "thrust_max",
               "moment_max", "gravity", "v_limit", "omega_limit")
_GAINS_KEYS = ("attitude", "rate", "velocity")
_LIMITS_KEYS = ("max_tilt", "max_speed_cmd", "max_yaw_rate")
_ENV_KEYS = ("num_envs", "bounds", "episode_max_steps", "dt", "control_mode",
             "seed", "wall_enabled", "wall_thickness", "wall_segmentation_id",
             "goal_min", "goal_max", "spawn_min", "spawn_max")
_CLASS_KEYS = ("name", "count_per_env", "position_min", "position_max",
               "euler_min", "euler_max", "frozen", "segmentation_id",
               "collision_enabled")
_CAMERA_KEYS = ("enabled", "width", "height", "hfov", "max_range",
                "mount_position", "mount_euler", "randomize_position",
                "randomize_euler")
_REWARD_KEYS = ("c_dist", "c_vel", "c_step", "c_success", "c_crash",
                "success_radius")


def from_dict(data: dict) -> SimConfig:
    """Build a SimConfig from parsed YAML content, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(data, ("version", "robot", "gains", "limits", "env",
                       "asset_classes", "camera", "reward"), "config root")

    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version {version} not supported "
                          f"(expected {CONFIG_VERSION})")

    robot_sec = dict(data.get("robot") or {})
    _check_keys(robot_sec, _ROBOT_KEYS, "robot")
    if "inertia" in robot_sec:
        inertia = np.asarray(robot_sec["inertia"], dtype=np.float64)
        robot_sec["inertia"] = np.diag(inertia) if inertia.ndim == 1 else inertia
    robot = _build(RobotParams, robot_sec, "robot")

    gains_sec = dict(data.get("gains") or {})
    _check_keys(gains_sec, _GAINS_KEYS, "gains")
    gains = _build(ControlGains, gains_sec, "gains")

    limits_sec = dict(data.get("limits") or {})
    _check_keys(limits_sec, _LIMITS_KEYS, "limits")
    limits = _build(ControlLimits, limits_sec, "limits")

    env_sec = dict(data.get("env") or {})
    _check_keys(env_sec, _ENV_KEYS, "env")
    env = _build(EnvConfig, env_sec, "env")

    classes = []
    for i, cls_sec in enumerate(data.get("asset_classes") or []):
        cls_sec = dict(cls_sec)
        where = f"asset_classes[{i}]"
        _check_keys(cls_sec, _CLASS_KEYS, where)
        if "name" not in cls_sec:
            raise ConfigError(f"{where}: missing class name")
        classes.append(_build(AssetClassConfig, cls_sec, where))

    camera = None
    cam_sec = data.get("camera")
    if cam_sec is not None:
        cam_sec = dict(cam_sec)
        _check_keys(cam_sec, _CAMERA_KEYS, "camera")
        enabled = cam_sec.pop("enabled", True)
        if enabled:
            camera = _build(CameraConfig, cam_sec, "camera")

    reward_sec = dict(data.get("reward") or {})
    _check_keys(reward_sec, _REWARD_KEYS, "reward")
    reward = _build(RewardConfig, reward_sec, "reward")

    return SimConfig(robot=robot, gains=gains, limits=limits, env=env,
                     asset_classes=classes, camera=camera, reward=reward)


def load_config(path) -> SimConfig:
    """Load and validate a simulator config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    return from_dict(data)
