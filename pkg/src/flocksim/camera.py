"""Per-robot pinhole depth and segmentation cameras via ray casting.

Camera frame convention: +z is the optical axis, +x points right and +y
down in the image. The default mount orients that frame to look along the
robot's body +x axis. Depth is the Euclidean distance along the ray (not
the z-depth); pixels without a hit inside max_range carry exactly
max_range and segmentation id 0.

Rendering is read-only over world state and data-parallel across robots;
per-robot images are bitwise independent of the worker count.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import se3
from .assets import Primitive
from .scene import KIND_CODES, PAD, PrimitiveSet

# ZYX euler angles mapping the image frame (+z forward, +x right, +y down)
# onto the body frame's +x axis with z-up.
FORWARD_MOUNT_EULER = (-math.pi / 2, 0.0, -math.pi / 2)

MAGIC = b"FSDEPTH1"
DTYPE_F32_I32 = 1


class CameraDisabledError(RuntimeError):
    """Raised when rendering is requested but no camera is configured."""


@dataclass
class CameraConfig:
    """Pinhole camera intrinsics and body-frame mount."""

    width: int = 480
    height: int = 270
    hfov: float = 1.57          # rad; vertical FOV follows from square pixels
    max_range: float = 10.0     # m
    mount_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mount_euler: np.ndarray = field(
        default_factory=lambda: np.array(FORWARD_MOUNT_EULER))
    randomize_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    randomize_euler: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.mount_position = np.asarray(self.mount_position, dtype=np.float64)
        self.mount_euler = np.asarray(self.mount_euler, dtype=np.float64)
        self.randomize_position = np.asarray(self.randomize_position,
                                             dtype=np.float64)
        self.randomize_euler = np.asarray(self.randomize_euler, dtype=np.float64)
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1x1")
        if not 0.0 < self.hfov < math.pi:
            raise ValueError("hfov must lie in (0, pi)")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")

    @property
    def mount_rotation(self) -> np.ndarray:
        return se3.rot_zyx(self.mount_euler[0], self.mount_euler[1],
                           self.mount_euler[2])


@dataclass
class DepthImageBatch:
    """Rendered depth (m, float32) and segmentation ids, (N, H, W)."""

    depth: np.ndarray
    segmentation: np.ndarray
    max_range: float

    @property
    def n(self) -> int:
        return self.depth.shape[0]

    def write_binary(self, path) -> None:
        """Dump as: magic, u32 N/height/width/dtype, depth array, seg array.

        All fields little-endian; dtype code 1 means float32 depth followed
        by int32 segmentation, both row-major.
        """
        n, h, w = self.depth.shape
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<4I", n, h, w, DTYPE_F32_I32))
            f.write(np.ascontiguousarray(self.depth, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(self.segmentation, dtype="<i4").tobytes())

    @classmethod
    def read_binary(cls, path, max_range: float = 0.0) -> "DepthImageBatch":
        with open(path, "rb") as f:
            if f.read(8) != MAGIC:
                raise ValueError(f"{path}: not a depth dump")
            n, h, w, dtype = struct.unpack("<4I", f.read(16))
            if dtype != DTYPE_F32_I32:
                raise ValueError(f"{path}: unknown dtype code {dtype}")
            depth = np.frombuffer(f.read(n * h * w * 4), dtype="<f4").reshape(n, h, w)
            seg = np.frombuffer(f.read(n * h * w * 4), dtype="<i4").reshape(n, h, w)
        return cls(depth=depth, segmentation=seg, max_range=max_range)

    def write_png(self, index: int, path) -> None:
        """Lossless 16-bit grayscale export of one frame for debugging."""
        from PIL import Image

        scale = 65535.0 / self.max_range if self.max_range > 0 else 1.0
        img = np.clip(self.depth[index] * scale, 0, 65535).astype(np.uint16)
        Image.fromarray(img).save(path)


@lru_cache(maxsize=8)
def _pixel_rays(width: int, height: int, hfov: float) -> np.ndarray:
    """Unit ray directions in the camera frame, shape (H*W, 3), row-major."""
    scale = 2.0 * math.tan(hfov / 2.0) / width
    u = (np.arange(width) + 0.5 - width / 2.0) * scale
    v = (np.arange(height) + 0.5 - height / 2.0) * scale
    xs, ys = np.meshgrid(u, v)
    dirs = np.stack([xs.ravel(), ys.ravel(), np.ones(width * height)], axis=-1)
    norm = np.sqrt((dirs * dirs).sum(axis=1))
    out = dirs / norm[:, None]
    out.setflags(write=False)
    return out


def _ray_box(o, d, half):
    """Slab test: entry/exit parameters of rays against a centered box."""
    t_lo = np.full(o.shape[0], -np.inf)
    t_hi = np.full(o.shape[0], np.inf)
    for i in range(3):
        di, oi, hi = d[:, i], o[:, i], half[i]
        parallel = di == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-hi - oi) / di
            t2 = (hi - oi) / di
        lo = np.minimum(t1, t2)
        hi_t = np.maximum(t1, t2)
        inside = np.abs(oi) <= hi
        lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
        hi_t = np.where(parallel, np.where(inside, np.inf, -np.inf), hi_t)
        t_lo = np.maximum(t_lo, lo)
        t_hi = np.minimum(t_hi, hi_t)
    return t_lo, t_hi


def _ray_interval_to_t(t_lo, t_hi):
    """Smallest positive parameter of an entry/exit interval, inf if none."""
    valid = t_hi >= t_lo
    t = np.where(t_lo > 0.0, t_lo, t_hi)
    return np.where(valid & (t > 0.0), t, np.inf)


def _cast_one_primitive(o, d, kind, dims, center, rot):
    """Ray parameters against one primitive; inf marks misses.

    o, d: (M, 3) ray origins and unit directions in the env frame.
    """
    # local frame: columns of rot are the primitive axes
    rel = o - center
    ol = np.stack([rel @ rot[:, 0], rel @ rot[:, 1], rel @ rot[:, 2]], axis=-1)
    dl = np.stack([d @ rot[:, 0], d @ rot[:, 1], d @ rot[:, 2]], axis=-1)

    if kind == KIND_CODES["box"]:
        t_lo, t_hi = _ray_box(ol, dl, np.asarray(dims) / 2.0)
        return _ray_interval_to_t(t_lo, t_hi)

    if kind == KIND_CODES["sphere"]:
        radius = dims[0]
        b = (ol * dl).sum(axis=1)
        c = (ol * ol).sum(axis=1) - radius * radius
        disc = b * b - c
        hit = disc >= 0.0
        root = np.sqrt(np.maximum(disc, 0.0))
        t1 = -b - root
        t2 = -b + root
        t = np.where(t1 > 0.0, t1, t2)
        return np.where(hit & (t > 0.0), t, np.inf)

    # finite cylinder along local z: lateral quadratic + cap slab
    radius, length = dims[0], dims[1]
    a = dl[:, 0] ** 2 + dl[:, 1] ** 2
    b = ol[:, 0] * dl[:, 0] + ol[:, 1] * dl[:, 1]
    c = ol[:, 0] ** 2 + ol[:, 1] ** 2 - radius * radius
    parallel = a == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        q_lo = (-b - root) / a
        q_hi = (-b + root) / a
    inside_r = c <= 0.0
    q_lo = np.where(parallel, np.where(inside_r, -np.inf, np.inf), q_lo)
    q_hi = np.where(parallel, np.where(inside_r, np.inf, -np.inf), q_hi)
    no_lateral = (~parallel) & (disc < 0.0)
    q_lo = np.where(no_lateral, np.inf, q_lo)
    q_hi = np.where(no_lateral, -np.inf, q_hi)

    half = length / 2.0
    dz, oz = dl[:, 2], ol[:, 2]
    z_parallel = dz == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        z1 = (-half - oz) / dz
        z2 = (half - oz) / dz
    z_lo = np.minimum(z1, z2)
    z_hi = np.maximum(z1, z2)
    z_in = np.abs(oz) <= half
    z_lo = np.where(z_parallel, np.where(z_in, -np.inf, np.inf), z_lo)
    z_hi = np.where(z_parallel, np.where(z_in, np.inf, -np.inf), z_hi)

    t_lo = np.maximum(q_lo, z_lo)
    t_hi = np.minimum(q_hi, z_hi)
    return _ray_interval_to_t(t_lo, t_hi)


def cast_rays(origin: np.ndarray, dirs: np.ndarray, pset: PrimitiveSet,
              env_index: int, max_range: float) -> tuple[np.ndarray, np.ndarray]:
    """Nearest collision-enabled hit per ray within one environment.

    Args:
        origin: (3,) common ray origin, env frame.
        dirs: (M, 3) unit directions.
        pset: compiled primitives.
        env_index: which environment's primitives to use.
        max_range: hits beyond this count as misses.
    Returns:
        (depth, seg): (M,) float64 distances (max_range where no hit) and
        (M,) int32 segmentation ids (0 where no hit).
    """
    m = dirs.shape[0]
    best_t = np.full(m, np.inf)
    best_seg = np.zeros(m, dtype=np.int32)

    for k in range(pset.width):
        kind = int(pset.kind[env_index, k])
        if kind == PAD or not pset.collision[env_index, k]:
            continue
        # conservative AABB prefilter in the env frame
        lo_rel = pset.aabb_min[env_index, k] - origin
        hi_rel = pset.aabb_max[env_index, k] - origin
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = lo_rel / dirs
            t2 = hi_rel / dirs
        # rays parallel to a slab stay candidates (conservative prefilter)
        zero = dirs == 0.0
        t1 = np.where(zero, -np.inf, t1)
        t2 = np.where(zero, np.inf, t2)
        slab_lo = np.minimum(t1, t2).max(axis=1)
        slab_hi = np.maximum(t1, t2).min(axis=1)
        candidates = (slab_hi >= np.maximum(slab_lo, 0.0)) & (slab_lo <= max_range)
        idx = np.nonzero(candidates)[0]
        if idx.size == 0:
            continue
        t = _cast_one_primitive(origin[None, :], dirs[idx], kind,
                                pset.dims[env_index, k],
                                pset.position[env_index, k],
                                pset.rot[env_index, k])
        closer = t < best_t[idx]
        sub = idx[closer]
        best_t[sub] = t[closer]
        best_seg[sub] = pset.seg_id[env_index, k]

    miss = best_t > max_range
    depth = np.where(miss, max_range, best_t)
    seg = np.where(miss, 0, best_seg).astype(np.int32)
    return depth, seg


def ray_primitive(origin, direction, prim: Primitive, seg_id: int = 0,
                  max_range: float = np.inf):
    """Smallest positive hit parameter of one ray against one primitive.

    Tangential grazes count as hits. Returns (t, seg_id) or None.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(direction))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError("ray direction must be a unit vector")
    t = _cast_one_primitive(
        origin[None, :], direction[None, :], KIND_CODES[prim.kind], prim.dims,
        prim.position, se3.quat_to_matrix(prim.rotation))[0]
    if not np.isfinite(t) or t > max_range:
        return None
    return float(t), seg_id


def randomize_mount(cfg: CameraConfig, rng: np.random.Generator
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Sample a mount pose uniformly within the configured +- bounds."""
    dp = rng.uniform(-1.0, 1.0, size=3) * cfg.randomize_position
    de = rng.uniform(-1.0, 1.0, size=3) * cfg.randomize_euler
    euler = cfg.mount_euler + de
    return cfg.mount_position + dp, se3.rot_zyx(euler[0], euler[1], euler[2])


def render(world, cam_cfg: CameraConfig | None = None,
           workers: int = 1) -> DepthImageBatch:
    """Render every robot's depth and segmentation image.

    The camera pose composes the robot pose with its (possibly randomized)
    mount. Must not run concurrently with stepping the same world.
    """
    cfg = cam_cfg if cam_cfg is not None else world.camera
    if cfg is None:
        raise CameraDisabledError("world has no camera configured")

    n = world.states.n
    dirs_cam = _pixel_rays(cfg.width, cfg.height, cfg.hfov)
    mounts_p, mounts_q = world.camera_mounts(cfg)

    depth = np.empty((n, cfg.height, cfg.width), dtype=np.float32)
    seg = np.empty((n, cfg.height, cfg.width), dtype=np.int32)

    def render_one(i):
        q = world.states.q[i]
        origin = world.states.p[i] + se3.quat_rotate(q, mounts_p[i])
        q_cam = se3.quat_multiply(q, mounts_q[i])
        dirs_world = se3.quat_rotate(q_cam[None, :], dirs_cam)
        d, s = cast_rays(origin, dirs_world, world.pset, i, cfg.max_range)
        depth[i] = d.reshape(cfg.height, cfg.width).astype(np.float32)
        seg[i] = s.reshape(cfg.height, cfg.width)

    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(render_one, range(n)))
    else:
        for i in range(n):
            render_one(i)

    return DepthImageBatch(depth=depth, segmentation=seg, max_range=cfg.max_range)
