"""Batched environments: robots, obstacles, collisions, rewards, resets.

Each environment is an axis-aligned box with its origin at a corner,
holding one robot, its sampled obstacles, and a goal point. Cross-env
interaction does not exist; a world steps all environments together.

Observation layout (flat, per robot, 16 values):

    [0:3]   position, env-local m
    [3:7]   orientation quaternion (w, x, y, z)
    [7:10]  world-frame velocity m/s
    [10:13] body-frame angular velocity rad/s
    [13:16] goal - position, rotated into the vehicle frame

Per-environment random streams are counter-based on (seed, env index,
reset counter); resetting one environment is bitwise invisible to all
others. Stepping one world is single-writer; internal work may be
partitioned across workers without changing any result bitwise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import assets as assets_mod
from . import se3
from .assets import AssetInstance, AssetPrototype, Primitive, env_stream
from .camera import CameraConfig, randomize_mount
from .config import RewardConfig, SimConfig
from .control import CommandBatch, control_batch
from .dynamics import RigidStateBatch, step_batch
from .scene import PrimitiveSet, compile_instances, min_distance

OBS_DIM = 16
PLACEMENT_ATTEMPTS = 100
WALL_CLASS = "wall"


class PlacementFailureError(RuntimeError):
    """No collision-free spawn found within the attempt budget."""


@dataclass
class StepResult:
    """Vectorized step outputs; info holds per-robot flag arrays."""

    observations: np.ndarray  # (E, OBS_DIM)
    reward: np.ndarray        # (E,)
    terminated: np.ndarray    # (E,) bool
    truncated: np.ndarray     # (E,) bool
    info: dict


@dataclass
class AssetState:
    """Privileged ground-truth state of one obstacle."""

    position: np.ndarray
    rotation: np.ndarray
    class_name: str
    segmentation_id: int


@dataclass
class PrivilegedInfo:
    """Ground-truth obstacle states per environment."""

    per_env: list


def make_wall_prototype(bounds: np.ndarray, thickness: float) -> AssetPrototype:
    """Six box slabs just outside the bounding planes of one environment."""
    bounds = np.asarray(bounds, dtype=np.float64)
    t = thickness
    identity = np.array([1.0, 0.0, 0.0, 0.0])
    prims = []
    for axis in range(3):
        size = bounds + 2.0 * t
        size[axis] = t
        lo = bounds / 2.0
        lo[axis] = -t / 2.0
        hi = bounds / 2.0
        hi[axis] = bounds[axis] + t / 2.0
        prims.append(Primitive(kind=assets_mod.BOX, dims=tuple(size),
                               position=lo, rotation=identity))
        prims.append(Primitive(kind=assets_mod.BOX, dims=tuple(size),
                               position=hi, rotation=identity))
    return AssetPrototype(source="<walls>", class_name=WALL_CLASS,
                          primitives=prims)


def check_collisions(p: np.ndarray, r_coll: float, pset: PrimitiveSet,
                     bounds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sphere-robot collision flags against primitives and env bounds.

    Returns (collided, out_of_bounds); out_of_bounds marks robots whose
    center is within r_coll of any bounding plane (those also collide).
    """
    p = np.asarray(p, dtype=np.float64)
    bounds = np.asarray(bounds, dtype=np.float64)
    hit = min_distance(pset, p) < r_coll
    oob = ((p < r_coll) | (p > bounds - r_coll)).any(axis=1)
    return hit | oob, oob


def reward_goal_reaching(p: np.ndarray, v: np.ndarray, goal: np.ndarray,
                         collided: np.ndarray, cfg: RewardConfig) -> np.ndarray:
    """Dense goal-reaching reward with success bonus and crash penalty."""
    d = np.linalg.norm(goal - p, axis=-1)
    speed = np.linalg.norm(v, axis=-1)
    return (-d * cfg.c_dist - speed * cfg.c_vel - cfg.c_step
            + cfg.c_success * (d < cfg.success_radius)
            - cfg.c_crash * np.asarray(collided, dtype=np.float64))


class World:
    """N parallel single-robot environments stepped in lockstep."""

    def __init__(self, cfg: SimConfig, pools: dict, workers: int = 1):
        self.cfg = cfg
        self.robot = cfg.robot
        self.gains = cfg.gains
        self.limits = cfg.limits
        self.env = cfg.env
        self.reward_cfg = cfg.reward
        self.camera = cfg.camera
        self.workers = max(1, int(workers))

        self.num_envs = cfg.env.num_envs
        self.dt = cfg.env.dt
        self.bounds = cfg.env.bounds
        self.class_by_name = {c.name: c for c in cfg.asset_classes}
        self.pools = pools

        self._wall_proto = (make_wall_prototype(self.bounds, cfg.env.wall_thickness)
                            if cfg.env.wall_enabled else None)

        self.reset_counter = np.zeros(self.num_envs, dtype=np.int64)
        self.pending_reset = np.zeros(self.num_envs, dtype=bool)
        self.steps_in_episode = np.zeros(self.num_envs, dtype=np.int64)
        self.goals = np.zeros((self.num_envs, 3))
        self.states = RigidStateBatch.rest(self.num_envs)
        self._mount_p = None
        self._mount_q = None
        if self.camera is not None:
            self._mount_p = np.zeros((self.num_envs, 3))
            self._mount_q = np.zeros((self.num_envs, 4))

        # per-env instance lists; wall instances (if any) come last and are
        # never re-randomized. Draw order per env stream: class picks, six
        # pose uniforms per instance, then robot/goal/mount placement.
        self.instances = []
        for e in range(self.num_envs):
            rng = env_stream(cfg.env.seed, e, 0)
            env_instances = assets_mod.sample_env_assets(
                pools, cfg.asset_classes, rng, e)
            env_instances = [
                assets_mod.randomize_pose(
                    inst, self.class_by_name[inst.class_name], self.bounds, rng)
                for inst in env_instances
            ]
            if self._wall_proto is not None:
                env_instances.append(AssetInstance(
                    prototype=self._wall_proto,
                    position=np.zeros(3),
                    rotation=np.array([1.0, 0.0, 0.0, 0.0]),
                    segmentation_id=cfg.env.wall_segmentation_id,
                    env_index=e,
                    class_name=WALL_CLASS))
            self.instances.append(env_instances)
            self._place_robot_and_goal(e, rng,
                                       compile_instances([env_instances]))

        self.pset = compile_instances(self.instances)

    @classmethod
    def create(cls, cfg: SimConfig, asset_root=None, pools: dict | None = None,
               workers: int = 1) -> "World":
        """Build a world from a config, loading asset pools from disk."""
        merged = {}
        if asset_root is not None:
            merged.update(assets_mod.load_asset_dir(asset_root))
        if pools:
            merged.update(pools)
        return cls(cfg, merged, workers=workers)

    # ------------------------------------------------------------------
    # placement and resets

    def _randomizable(self, e: int) -> list:
        return [i for i in self.instances[e] if i.class_name != WALL_CLASS]

    def _sample_point(self, rng, lo_frac, hi_frac) -> np.ndarray:
        u = rng.uniform(0.0, 1.0, size=3)
        return (lo_frac + u * (hi_frac - lo_frac)) * self.bounds

    def _find_free_point(self, view, rng, lo_frac, hi_frac, e: int,
                         what: str) -> np.ndarray:
        r = self.robot.collision_radius
        for _ in range(PLACEMENT_ATTEMPTS):
            p = self._sample_point(rng, lo_frac, hi_frac)
            in_bounds = ((p >= r) & (p <= self.bounds - r)).all()
            clear = min_distance(view, p[None, :])[0] >= r
            if in_bounds and clear:
                return p
        raise PlacementFailureError(
            f"no collision-free {what} pose in env {e} after "
            f"{PLACEMENT_ATTEMPTS} attempts")

    def _place_robot_and_goal(self, e: int, rng, view=None) -> None:
        if view is None:
            view = self.pset.env_view(e)
        spawn = self._find_free_point(view, rng, self.env.spawn_min,
                                      self.env.spawn_max, e, "robot")
        goal = self._find_free_point(view, rng, self.env.goal_min,
                                     self.env.goal_max, e, "goal")
        self.states.p[e] = spawn
        self.states.q[e] = [1.0, 0.0, 0.0, 0.0]
        self.states.v[e] = 0.0
        self.states.omega[e] = 0.0
        self.goals[e] = goal
        self.steps_in_episode[e] = 0
        if self.camera is not None:
            self._mount_p[e], self._mount_q[e] = randomize_mount(self.camera, rng)

    def reset_env(self, e: int) -> None:
        """Re-randomize obstacles of env e and respawn its robot and goal."""
        self.reset_counter[e] += 1
        rng = env_stream(self.env.seed, e, int(self.reset_counter[e]))
        fresh = [
            assets_mod.randomize_pose(
                inst, self.class_by_name[inst.class_name], self.bounds, rng)
            for inst in self._randomizable(e)
        ]
        walls = [i for i in self.instances[e] if i.class_name == WALL_CLASS]
        self.instances[e] = fresh + walls
        row = compile_instances([self.instances[e]], width=self.pset.width)
        self.pset.write_env(e, row)
        self._place_robot_and_goal(e, rng)
        self.pending_reset[e] = False

    def reset_all(self) -> np.ndarray:
        """Reset every environment; returns the fresh observations."""
        for e in range(self.num_envs):
            self.reset_env(e)
        return self.observations()

    # ------------------------------------------------------------------
    # stepping

    def _pipeline(self, states, commands, sl: slice):
        wrench, _ = control_batch(states.slice(sl), commands.slice(sl),
                                  self.gains, self.robot, self.limits)
        return step_batch(states.slice(sl), self.robot, wrench, self.dt)

    def _step_dynamics(self, commands: CommandBatch):
        n, w = self.num_envs, self.workers
        if w > 1 and n >= 2 * w:
            bounds = [(n * k) // w for k in range(w + 1)]
            slices = [slice(bounds[k], bounds[k + 1]) for k in range(w)]
            with ThreadPoolExecutor(max_workers=w) as pool:
                parts = list(pool.map(
                    lambda sl: self._pipeline(self.states, commands, sl), slices))
            out = RigidStateBatch(
                p=np.concatenate([s.p for s, _ in parts]),
                q=np.concatenate([s.q for s, _ in parts]),
                v=np.concatenate([s.v for s, _ in parts]),
                omega=np.concatenate([s.omega for s, _ in parts]))
            nonfinite = np.concatenate([f.nonfinite for _, f in parts])
            return out, nonfinite
        out, flags = self._pipeline(self.states, commands, slice(0, n))
        return out, flags.nonfinite

    def step(self, commands: CommandBatch) -> StepResult:
        """Advance all environments by one control + dynamics step.

        Environments that finished last step are auto-reset now: their
        command is ignored for this call and they report the initial
        observation of the new episode with zero reward.
        """
        if commands.n != self.num_envs:
            raise ValueError(f"expected {self.num_envs} commands, got {commands.n}")

        resetting = self.pending_reset.copy()
        for e in np.nonzero(resetting)[0]:
            self.reset_env(int(e))

        new_states, nonfinite = self._step_dynamics(commands)
        # void the step for freshly reset envs: they keep their spawn state
        if resetting.any():
            for arr_new, arr_old in ((new_states.p, self.states.p),
                                     (new_states.q, self.states.q),
                                     (new_states.v, self.states.v),
                                     (new_states.omega, self.states.omega)):
                arr_new[resetting] = arr_old[resetting]
            nonfinite = nonfinite & ~resetting

        self.states = new_states
        collided, oob = check_collisions(self.states.p,
                                         self.robot.collision_radius,
                                         self.pset, self.bounds)
        collided &= ~resetting
        oob &= ~resetting

        active = ~resetting
        self.steps_in_episode[active] += 1
        terminated = (collided | nonfinite) & active
        truncated = ((self.steps_in_episode >= self.env.episode_max_steps)
                     & active & ~terminated)

        reward = reward_goal_reaching(self.states.p, self.states.v, self.goals,
                                      collided, self.reward_cfg)
        reward = np.where(resetting, 0.0, reward)

        self.pending_reset = terminated | truncated
        return StepResult(
            observations=self.observations(),
            reward=reward,
            terminated=terminated,
            truncated=truncated,
            info={"collision": collided, "out_of_bounds": oob,
                  "nonfinite": nonfinite, "autoreset": resetting},
        )

    # ------------------------------------------------------------------
    # views

    def observations(self) -> np.ndarray:
        """Flat observations in the documented 16-value layout."""
        p, q, v, omega = (self.states.p, self.states.q, self.states.v,
                          self.states.omega)
        yaw, _ = se3.yaw_of(q)
        cos_y, sin_y = np.cos(yaw), np.sin(yaw)
        gx = self.goals[:, 0] - p[:, 0]
        gy = self.goals[:, 1] - p[:, 1]
        gz = self.goals[:, 2] - p[:, 2]
        goal_vehicle = np.stack(
            [cos_y * gx + sin_y * gy, -sin_y * gx + cos_y * gy, gz], axis=-1)
        return np.concatenate([p, q, v, omega, goal_vehicle], axis=1)

    def privileged_info(self) -> PrivilegedInfo:
        """Ground-truth obstacle states, straight from the live instances."""
        per_env = [
            [AssetState(position=i.position, rotation=i.rotation,
                        class_name=i.class_name,
                        segmentation_id=i.segmentation_id)
             for i in self.instances[e]]
            for e in range(self.num_envs)
        ]
        return PrivilegedInfo(per_env=per_env)

    def camera_mounts(self, cfg: CameraConfig) -> tuple[np.ndarray, np.ndarray]:
        """Per-robot camera mounts; randomized ones when cfg is the world's."""
        if cfg is self.camera and self._mount_p is not None:
            return self._mount_p, self._mount_q
        p = np.broadcast_to(cfg.mount_position, (self.num_envs, 3))
        q = np.broadcast_to(cfg.mount_rotation, (self.num_envs, 4))
        return p, q
