"""Vectorized RL environment bindings over the flocksim simulator.

The bindings are behavior-transparent: stepping through a handle produces
bitwise the same observations, rewards and flags as driving the native
world with the equivalently denormalized commands.
"""

__version__ = "0.1.0"

from .vec_env import (
    ACTION_DIM,
    CameraDisabledError,
    ClosedHandleError,
    ConcurrentStepError,
    ShapeMismatchError,
    SpaceSpec,
    VecEnvHandle,
    make,
)

__all__ = [
    "ACTION_DIM",
    "CameraDisabledError",
    "ClosedHandleError",
    "ConcurrentStepError",
    "ShapeMismatchError",
    "SpaceSpec",
    "VecEnvHandle",
    "make",
    "__version__",
]
