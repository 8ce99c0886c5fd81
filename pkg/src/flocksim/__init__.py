"""Batched multirotor flight simulator with SE(3) geometric controllers.

Core surfaces:

- :mod:`flocksim.se3` - rotation primitives (quaternions, hat/vee, ZYX).
- :mod:`flocksim.dynamics` - batched rigid-body integration.
- :mod:`flocksim.control` - attitude- and velocity-mode geometric control.
- :mod:`flocksim.assets` - obstacle pools, URDF subset, tree generator.
- :mod:`flocksim.world` - vectorized environments with resets and rewards.
- :mod:`flocksim.camera` - ray-cast depth/segmentation rendering.
- :mod:`flocksim.bench` - throughput benchmarks and the scripted demo.
- :mod:`flocksim.config` - YAML config schema and loader.
"""

__version__ = "0.1.0"

# Bumped whenever the config file schema or the flat observation layout
# changes; external bindings pin against this.
CONFIG_VERSION = 1

from .config import EnvConfig, RewardConfig, SimConfig, load_config  # noqa: E402
from .control import (  # noqa: E402
    AttitudeCommands,
    CommandBatch,
    ControlGains,
    ControlLimits,
    VelocityCommands,
)
from .dynamics import RigidState, RigidStateBatch, RobotParams, Wrench, WrenchBatch  # noqa: E402
from .camera import CameraConfig, DepthImageBatch, render  # noqa: E402
from .world import OBS_DIM, StepResult, World  # noqa: E402

__all__ = [
    "CONFIG_VERSION",
    "AttitudeCommands",
    "CameraConfig",
    "CommandBatch",
    "ControlGains",
    "ControlLimits",
    "DepthImageBatch",
    "EnvConfig",
    "OBS_DIM",
    "RewardConfig",
    "RigidState",
    "RigidStateBatch",
    "RobotParams",
    "SimConfig",
    "StepResult",
    "VelocityCommands",
    "World",
    "Wrench",
    "WrenchBatch",
    "load_config",
    "render",
    "__version__",
]
