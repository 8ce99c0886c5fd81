"""Flattened primitive arrays for collision checks and ray casts.

Asset instances are compiled into per-environment arrays padded to the
widest environment (pad entries carry kind code -1 and never hit). All
geometry math is analytic and elementwise: point distances here, ray
intersections in the camera module.

Kind codes: 0 box, 1 cylinder (local z axis, centered), 2 sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .assets import BOX, CYLINDER, SPHERE

KIND_CODES = {BOX: 0, CYLINDER: 1, SPHERE: 2}
PAD = -1


@dataclass
class PrimitiveSet:
    """Per-environment primitive soup, padded to a common width K."""

    kind: np.ndarray       # (E, K) int8, PAD marks unused slots
    dims: np.ndarray       # (E, K, 3) shape parameters
    position: np.ndarray   # (E, K, 3) env-local centers
    rot: np.ndarray        # (E, K, 3, 3) local-to-env rotation
    seg_id: np.ndarray     # (E, K) int32
    collision: np.ndarray  # (E, K) bool
    aabb_min: np.ndarray   # (E, K, 3)
    aabb_max: np.ndarray   # (E, K, 3)

    @property
    def num_envs(self) -> int:
        return self.kind.shape[0]

    @property
    def width(self) -> int:
        return self.kind.shape[1]

    def env_view(self, e: int) -> "PrimitiveSet":
        sl = slice(e, e + 1)
        return PrimitiveSet(kind=self.kind[sl], dims=self.dims[sl],
                            position=self.position[sl], rot=self.rot[sl],
                            seg_id=self.seg_id[sl], collision=self.collision[sl],
                            aabb_min=self.aabb_min[sl], aabb_max=self.aabb_max[sl])

    def write_env(self, e: int, other: "PrimitiveSet") -> None:
        """Overwrite environment e's rows from a 1-env set of equal width."""
        if other.width != self.width or other.num_envs != 1:
            raise ValueError("environment row shape mismatch")
        for name in ("kind", "dims", "position", "rot", "seg_id", "collision",
                     "aabb_min", "aabb_max"):
            getattr(self, name)[e] = getattr(other, name)[0]


def _primitive_aabb(kind, dims, position, rot):
    """Conservative world AABB of one primitive."""
    if kind == 0:
        half = np.abs(rot) @ (np.asarray(dims) / 2.0)
    elif kind == 1:
        radius, length = dims[0], dims[1]
        axis = rot[:, 2]
        half = np.abs(axis) * (length / 2.0) + radius * np.sqrt(
            np.maximum(0.0, 1.0 - axis * axis))
    else:
        half = np.full(3, dims[0])
    return position - half, position + half


def compile_instances(instances_per_env: list, width: int | None = None
                      ) -> PrimitiveSet:
    """Flatten per-env asset instances into padded primitive arrays.

    Args:
        instances_per_env: one list of AssetInstance per environment.
        width: pad target; defaults to the widest environment.
    """
    counts = []
    flat = []
    for env_instances in instances_per_env:
        prims = []
        for inst in env_instances:
            for prim in inst.prototype.primitives:
                position = inst.position + se3.quat_rotate(inst.rotation,
                                                           prim.position)
                rotation = se3.quat_multiply(inst.rotation, prim.rotation)
                prims.append((KIND_CODES[prim.kind], prim.dims, position,
                              se3.quat_to_matrix(rotation),
                              inst.segmentation_id, inst.collision_enabled))
        counts.append(len(prims))
        flat.append(prims)

    k = max(counts, default=0) if width is None else width
    if max(counts, default=0) > k:
        raise ValueError("width smaller than an environment's primitive count")
    e = len(instances_per_env)

    out = PrimitiveSet(
        kind=np.full((e, k), PAD, dtype=np.int8),
        dims=np.zeros((e, k, 3)),
        position=np.zeros((e, k, 3)),
        rot=np.broadcast_to(np.eye(3), (e, k, 3, 3)).copy(),
        seg_id=np.zeros((e, k), dtype=np.int32),
        collision=np.zeros((e, k), dtype=bool),
        aabb_min=np.zeros((e, k, 3)),
        aabb_max=np.zeros((e, k, 3)),
    )
    for ei, prims in enumerate(flat):
        for ki, (code, dims, position, rot, seg, coll) in enumerate(prims):
            out.kind[ei, ki] = code
            out.dims[ei, ki] = dims
            out.position[ei, ki] = position
            out.rot[ei, ki] = rot
            out.seg_id[ei, ki] = seg
            out.collision[ei, ki] = coll
            lo, hi = _primitive_aabb(code, dims, position, rot)
            out.aabb_min[ei, ki] = lo
            out.aabb_max[ei, ki] = hi
    return out


def signed_distances(pset: PrimitiveSet, points: np.ndarray) -> np.ndarray:
    """Signed distance from each env's point to each of its primitives.

    Args:
        pset: compiled primitives, E environments wide K.
        points: (E, 3) one query point per environment.
    Returns:
        (E, K) signed distances; +inf on pad entries. Negative inside.
    """
    points = np.asarray(points, dtype=np.float64)
    if pset.width == 0:
        return np.full((pset.num_envs, 0), np.inf)

    dx = points[:, None, 0] - pset.position[:, :, 0]
    dy = points[:, None, 1] - pset.position[:, :, 1]
    dz = points[:, None, 2] - pset.position[:, :, 2]
    r = pset.rot
    # local coordinates: R^T (p - c)
    lx = r[:, :, 0, 0] * dx + r[:, :, 1, 0] * dy + r[:, :, 2, 0] * dz
    ly = r[:, :, 0, 1] * dx + r[:, :, 1, 1] * dy + r[:, :, 2, 1] * dz
    lz = r[:, :, 0, 2] * dx + r[:, :, 1, 2] * dy + r[:, :, 2, 2] * dz

    d0, d1, d2 = pset.dims[:, :, 0], pset.dims[:, :, 1], pset.dims[:, :, 2]

    # box: q_i = |l_i| - half_i
    qx = np.abs(lx) - d0 / 2.0
    qy = np.abs(ly) - d1 / 2.0
    qz = np.abs(lz) - d2 / 2.0
    outside = np.sqrt(np.maximum(qx, 0.0) ** 2 + np.maximum(qy, 0.0) ** 2
                      + np.maximum(qz, 0.0) ** 2)
    inside = np.minimum(np.maximum(qx, np.maximum(qy, qz)), 0.0)
    box_dist = outside + inside

    # finite z-cylinder: radial and axial excess
    rho = np.sqrt(lx * lx + ly * ly) - d0
    ax = np.abs(lz) - d1 / 2.0
    cyl_dist = (np.sqrt(np.maximum(rho, 0.0) ** 2 + np.maximum(ax, 0.0) ** 2)
                + np.minimum(np.maximum(rho, ax), 0.0))

    sph_dist = np.sqrt(lx * lx + ly * ly + lz * lz) - d0

    dist = np.where(pset.kind == 0, box_dist,
                    np.where(pset.kind == 1, cyl_dist, sph_dist))
    return np.where(pset.kind == PAD, np.inf, dist)


def min_distance(pset: PrimitiveSet, points: np.ndarray,
                 collision_only: bool = True) -> np.ndarray:
    """Smallest signed distance per environment; +inf with no primitives."""
    d = signed_distances(pset, points)
    if collision_only:
        d = np.where(pset.collision, d, np.inf)
    if d.shape[1] == 0:
        return np.full(pset.num_envs, np.inf)
    return d.min(axis=1)
