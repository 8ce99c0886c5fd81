"""Benchmark harness and end-to-end demo.

Reports aggregate environment-steps per second for the full
controller-plus-integrator pipeline at a fixed 10 ms step, and rendered
frames per second for the depth camera. Absolute numbers are informational
(hardware-dependent); the suite asserts scaling and determinism properties
instead. Timing never touches simulation state: benched and unbenched runs
of the same seed produce identical checksums.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import se3
from .camera import CameraConfig, render
from .config import EnvConfig, SimConfig, load_config
from .control import (
    AttitudeCommands,
    CommandBatch,
    ControlGains,
    ControlLimits,
    VelocityCommands,
    attitude_errors,
    control_batch,
    desired_attitude,
    velocity_control,
)
from .dynamics import RigidStateBatch, RobotParams, step_batch
from .assets import AssetClassConfig, parse_urdf_subset
from .world import World

DEFAULT_DT = 0.01
WARMUP_STEPS = 100


def machine_descriptor() -> str:
    return (f"{platform.system()} {platform.machine()}, "
            f"{os.cpu_count()} cores, python {platform.python_version()}, "
            f"numpy {np.__version__}")


@dataclass
class BenchReport:
    """Timing summary; steps_per_second aggregates across environments."""

    num_envs: int
    total_steps: int          # per-env iterations
    wall_seconds: float
    steps_per_second: float   # total_steps * num_envs / wall_seconds
    sim_to_real_ratio: float  # steps_per_second * dt
    dt: float
    checksum: str
    machine: str = field(default_factory=machine_descriptor)
    frames_per_second: float | None = None
    resolution: tuple | None = None
    workers: int = 1
    mode: str = ""

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if self.resolution is not None:
            d["resolution"] = list(self.resolution)
        return d

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def summary(self) -> str:
        lines = [f"envs:             {self.num_envs}"]
        if self.mode:
            lines.append(f"mode:             {self.mode}")
        if self.frames_per_second is not None:
            lines += [
                f"frames per env:   {self.total_steps}",
                f"wall time:        {self.wall_seconds:.3f} s",
                f"resolution:       {self.resolution[0]}x{self.resolution[1]}",
                f"render rate:      {self.frames_per_second:,.1f} frames/s",
            ]
        else:
            lines += [
                f"steps per env:    {self.total_steps}",
                f"wall time:        {self.wall_seconds:.3f} s",
                f"aggregate rate:   {self.steps_per_second:,.0f} env-steps/s",
                f"sim-to-real:      {self.sim_to_real_ratio:,.1f}x",
                f"dt per step:      {self.dt * 1e3:.0f} ms",
            ]
        lines += [
            f"workers:          {self.workers}",
            f"checksum:         {self.checksum}",
            f"machine:          {self.machine}",
        ]
        return "\n".join(lines)


def state_checksum(states: RigidStateBatch) -> str:
    h = hashlib.sha256()
    for arr in (states.p, states.q, states.v, states.omega):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def image_checksum(depth: np.ndarray, seg: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(depth).tobytes())
    h.update(np.ascontiguousarray(seg).tobytes())
    return h.hexdigest()


def make_bench_batch(num_envs: int, seed: int, mode: str,
                     params: RobotParams) -> tuple[RigidStateBatch, CommandBatch]:
    """Initial states and the fixed command used by the dynamics benchmark.

    Robots start near hover with small random perturbations; the command is
    a constant small attitude or velocity setpoint.
    """
    rng = np.random.default_rng(seed)
    n = num_envs
    states = RigidStateBatch(
        p=rng.uniform(-1.0, 1.0, (n, 3)),
        q=se3.exp_so3(rng.uniform(-0.1, 0.1, (n, 3))),
        v=rng.uniform(-0.2, 0.2, (n, 3)),
        omega=rng.uniform(-0.1, 0.1, (n, 3)),
    )
    if mode == "attitude":
        cmds = CommandBatch.all_attitude(AttitudeCommands(
            roll=np.full(n, 0.05), pitch=np.full(n, -0.05),
            yaw_rate=np.full(n, 0.2), thrust=np.full(n, params.hover_thrust)))
    elif mode == "velocity":
        cmds = CommandBatch.all_velocity(VelocityCommands(
            v=np.tile([0.5, 0.3, 0.1], (n, 1)), yaw_rate=np.full(n, 0.2)))
    else:
        raise ValueError(f"mode must be 'attitude' or 'velocity', got '{mode}'")
    return states, cmds


def _pipeline_step(states, cmds, gains, params, limits, dt, workers):
    wrench, _ = control_batch(states, cmds, gains, params, limits)
    out, _ = step_batch(states, params, wrench, dt, workers=workers)
    return out


def bench_dynamics(num_envs: int, steps: int, mode: str = "attitude",
                   seed: int = 0, workers: int = 1, dt: float = DEFAULT_DT,
                   warmup: int = WARMUP_STEPS) -> BenchReport:
    """Time the controller+integrator pipeline on an obstacle-free batch."""
    if num_envs < 1:
        raise ValueError("num_envs must be >= 1")
    params, gains, limits = RobotParams(), ControlGains(), ControlLimits()
    states, cmds = make_bench_batch(num_envs, seed, mode, params)

    for _ in range(warmup):
        states = _pipeline_step(states, cmds, gains, params, limits, dt, workers)

    t0 = time.perf_counter()
    for _ in range(steps):
        states = _pipeline_step(states, cmds, gains, params, limits, dt, workers)
    wall = time.perf_counter() - t0

    rate = steps * num_envs / wall if wall > 0 else float("inf")
    return BenchReport(num_envs=num_envs, total_steps=steps, wall_seconds=wall,
                       steps_per_second=rate, sim_to_real_ratio=rate * dt,
                       dt=dt, checksum=state_checksum(states), workers=workers,
                       mode=mode)


_BENCH_SPHERE = ('<robot name="s{i}"><link name="l"><collision><geometry>'
                 '<sphere radius="{r}"/></geometry></collision></link></robot>')
_BENCH_BOX = ('<robot name="b{i}"><link name="l"><collision><geometry>'
              '<box size="{x} {y} {z}"/></geometry></collision></link></robot>')
_BENCH_CYL = ('<robot name="c{i}"><link name="l"><collision><geometry>'
              '<cylinder radius="{r}" length="{h}"/></geometry></collision>'
              '</link></robot>')


def bench_scene_config(num_envs: int, seed: int) -> tuple[SimConfig, dict]:
    """A cluttered reference scene for the render benchmark."""
    pools = {
        "spheres": [parse_urdf_subset(_BENCH_SPHERE.format(i=i, r=0.3 + 0.15 * i),
                                      class_name="spheres") for i in range(3)],
        "boxes": [parse_urdf_subset(
            _BENCH_BOX.format(i=i, x=0.4 + 0.2 * i, y=0.5, z=0.8 + 0.3 * i),
            class_name="boxes") for i in range(3)],
        "pillars": [parse_urdf_subset(
            _BENCH_CYL.format(i=i, r=0.15 + 0.05 * i, h=3.0),
            class_name="pillars") for i in range(2)],
    }
    classes = [
        AssetClassConfig(name="spheres", count_per_env=5, segmentation_id=2,
                         position_min=[0.1, 0.1, 0.1], position_max=[0.9, 0.9, 0.9]),
        AssetClassConfig(name="boxes", count_per_env=5, segmentation_id=3,
                         position_min=[0.1, 0.1, 0.0], position_max=[0.9, 0.9, 0.6],
                         euler_min=[0, 0, -3.1], euler_max=[0, 0, 3.1]),
        AssetClassConfig(name="pillars", count_per_env=4, segmentation_id=4,
                         frozen=(None, None, 1.5)),
    ]
    cfg = SimConfig(
        env=EnvConfig(num_envs=num_envs, bounds=[10.0, 10.0, 5.0], seed=seed,
                      wall_enabled=True, wall_segmentation_id=1),
        asset_classes=classes,
    )
    return cfg, pools


def bench_render(num_envs: int, frames: int, cam_cfg: CameraConfig | None = None,
                 seed: int = 0, workers: int = 1) -> BenchReport:
    """Time depth rendering of a static cluttered scene into a discard sink."""
    if num_envs < 1 or frames < 1:
        raise ValueError("num_envs and frames must be >= 1")
    cam = cam_cfg if cam_cfg is not None else CameraConfig()
    cfg, pools = bench_scene_config(num_envs, seed)
    world = World.create(cfg, pools=pools, workers=workers)

    img = render(world, cam, workers=workers)  # warm-up frame, not timed
    checksum = image_checksum(img.depth, img.segmentation)

    t0 = time.perf_counter()
    for _ in range(frames):
        img = render(world, cam, workers=workers)
    wall = time.perf_counter() - t0

    fps = frames * num_envs / wall if wall > 0 else float("inf")
    return BenchReport(num_envs=num_envs, total_steps=frames, wall_seconds=wall,
                       steps_per_second=frames * num_envs / wall if wall > 0 else float("inf"),
                       sim_to_real_ratio=0.0, dt=0.0, checksum=checksum,
                       frames_per_second=fps, resolution=(cam.width, cam.height),
                       workers=workers, mode="render")


def goal_policy_commands(world: World, speed: float = 1.0) -> CommandBatch:
    """Velocity command toward the goal, slowing inside 1 m."""
    obs = world.observations()
    goal_vec = obs[:, 13:16]
    dist = np.linalg.norm(goal_vec, axis=1)
    scale = np.minimum(speed, dist) / np.where(dist == 0.0, 1.0, dist)
    return CommandBatch.all_velocity(VelocityCommands(
        v=goal_vec * scale[:, None], yaw_rate=np.zeros(world.num_envs)))


def run_demo(config_path=None, out_dir="demo_out", seed: int | None = None,
             workers: int = 1, max_steps: int | None = None) -> int:
    """Fly a scripted velocity-mode goal-reaching episode in every env.

    Writes trace.csv (t, env, position, velocity, attitude error norm, goal
    distance), summary.json, and depth dumps when a camera is configured.
    Returns 0 on success, nonzero on any module error.
    """
    try:
        cfg = load_config(config_path) if config_path is not None else SimConfig()
        if seed is not None:
            cfg.env.seed = seed
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        world = World.create(cfg, workers=workers)
        n = world.num_envs
        horizon = max_steps if max_steps is not None else cfg.env.episode_max_steps

        reached = np.zeros(n, dtype=bool)
        done = np.zeros(n, dtype=bool)
        rows = []
        for k in range(horizon):
            cmds = goal_policy_commands(world, speed=2.0)
            # diagnostic attitude error of the outer velocity loop
            att, _ = velocity_control(world.states, cmds.velocity, world.gains,
                                      world.robot, world.limits)
            yaw, _ = se3.yaw_of(world.states.q)
            q_d, omega_d = desired_attitude(yaw, att)
            err = attitude_errors(world.states.q, world.states.omega, q_d, omega_d)
            e_rot = np.linalg.norm(err.rotation, axis=1)

            res = world.step(cmds)
            dist = np.linalg.norm(world.goals - world.states.p, axis=1)
            reached |= dist < world.reward_cfg.success_radius
            done |= res.terminated | res.truncated
            t = (k + 1) * world.dt
            for e in range(n):
                rows.append([f"{t:.3f}", e,
                             *(f"{v:.6f}" for v in world.states.p[e]),
                             *(f"{v:.6f}" for v in world.states.v[e]),
                             f"{e_rot[e]:.6e}", f"{dist[e]:.6f}"])
            if (reached | done).all():
                break

        with open(out / "trace.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "env", "px", "py", "pz", "vx", "vy", "vz",
                             "e_rot_norm", "goal_dist"])
            writer.writerows(rows)

        if world.camera is not None:
            img = render(world, world.camera, workers=workers)
            img.write_binary(out / "depth_final.bin")
            img.write_png(0, out / "depth_env0.png")

        summary = {
            "num_envs": n,
            "seed": cfg.env.seed,
            "goals_reached": int(reached.sum()),
            "all_reached": bool(reached.all()),
            "steps_flown": len(rows) // n,
            "machine": machine_descriptor(),
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        return 0
    except Exception as exc:  # CLI surface: report and signal failure
        print(f"demo failed: {type(exc).__name__}: {exc}")
        return 1
