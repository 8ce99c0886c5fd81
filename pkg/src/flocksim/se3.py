"""Rotation-group primitives shared by the dynamics and control modules.

Conventions used throughout the package:

- Quaternions are scalar-first ``[w, x, y, z]`` unit quaternions, stored in
  arrays of shape ``(..., 4)``, and encode body-to-world rotations.
- Euler angles follow the intrinsic ZYX (yaw-pitch-roll) convention:
  ``R = R_z(yaw) @ R_y(pitch) @ R_x(roll)``.
- All functions broadcast over leading batch dimensions and are written
  componentwise so results are bitwise independent of batch size and of how
  a batch is partitioned across workers.
"""

from __future__ import annotations

import numpy as np

# Below this rotation angle exp_so3 switches to its series expansion.
_EXP_TAYLOR_ANGLE = 1e-8

# |S + S^T| entries above this reject vee() input as non-skew.
SKEW_TOL = 1e-9

# Pitch within this of +-pi/2 flags ZYX extraction as degenerate.
GIMBAL_TOL = 1e-6


class NotSkewSymmetricError(ValueError):
    """Raised when vee() receives a matrix that is not skew-symmetric."""


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector: hat(w) @ u == cross(w, u).

    Args:
        w: (..., 3) vector.
    Returns:
        (..., 3, 3) skew-symmetric matrix.
    """
    w = np.asarray(w, dtype=np.float64)
    x, y, z = w[..., 0], w[..., 1], w[..., 2]
    zero = np.zeros_like(x)
    rows = [
        [zero, -z, y],
        [z, zero, -x],
        [-y, x, zero],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def vee(s: np.ndarray) -> np.ndarray:
    """Inverse of hat(): extract the 3-vector from a skew-symmetric matrix.

    Args:
        s: (..., 3, 3) with ||S + S^T||_max <= SKEW_TOL.
    Returns:
        (..., 3) vector such that hat(vee(s)) == s.
    Raises:
        NotSkewSymmetricError: if the symmetry residual exceeds SKEW_TOL.
    """
    s = np.asarray(s, dtype=np.float64)
    residual = np.abs(s + np.swapaxes(s, -1, -2)).max()
    if residual > SKEW_TOL:
        raise NotSkewSymmetricError(
            f"matrix is not skew-symmetric: max |S + S^T| = {residual:.3e}"
        )
    return np.stack([s[..., 2, 1], s[..., 0, 2], s[..., 1, 0]], axis=-1)


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Rescale quaternions to unit norm."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    n = np.sqrt(w * w + x * x + y * y + z * z)
    return q / n[..., None]


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 (x) q2, renormalized.

    Composition order matches rotation matrices: the product rotates first
    by q2, then by q1.
    """
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    w1, x1, y1, z1 = q1[..., 0], q1[..., 1], q1[..., 2], q1[..., 3]
    w2, x2, y2, z2 = q2[..., 0], q2[..., 1], q2[..., 2], q2[..., 3]
    out = np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )
    return quat_normalize(out)


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    """Inverse rotation of a unit quaternion."""
    q = np.asarray(q, dtype=np.float64)
    return np.stack([q[..., 0], -q[..., 1], -q[..., 2], -q[..., 3]], axis=-1)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors by unit quaternions: R(q) @ v.

    Args:
        q: (..., 4) unit quaternion.
        v: (..., 3) vector.
    Returns:
        (..., 3) rotated vector, v + 2w(u x v) + 2 u x (u x v) with u = q_vec.
    """
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    # t = 2 * (q_vec x v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.stack(
        [
            vx + w * tx + (y * tz - z * ty),
            vy + w * ty + (z * tx - x * tz),
            vz + w * tz + (x * ty - y * tx),
        ],
        axis=-1,
    )


def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors by the inverse of q: R(q)^T @ v."""
    return quat_rotate(quat_conjugate(q), v)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Materialize the 3x3 rotation matrix of a unit quaternion.

    Args:
        q: (..., 4) unit quaternion.
    Returns:
        (..., 3, 3) matrix satisfying R^T R = I, det R = +1.
    """
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rows = [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion from a rotation matrix (Shepperd's method).

    Args:
        r: (..., 3, 3) rotation matrix.
    Returns:
        (..., 4) unit quaternion with non-negative scalar part.
    """
    r = np.asarray(r, dtype=np.float64)
    m00, m01, m02 = r[..., 0, 0], r[..., 0, 1], r[..., 0, 2]
    m10, m11, m12 = r[..., 1, 0], r[..., 1, 1], r[..., 1, 2]
    m20, m21, m22 = r[..., 2, 0], r[..., 2, 1], r[..., 2, 2]
    trace = m00 + m11 + m22

    # Four candidate branches; pick the numerically largest pivot per item.
    qw = np.sqrt(np.maximum(0.0, 1.0 + trace)) / 2.0
    qx = np.sqrt(np.maximum(0.0, 1.0 + m00 - m11 - m22)) / 2.0
    qy = np.sqrt(np.maximum(0.0, 1.0 - m00 + m11 - m22)) / 2.0
    qz = np.sqrt(np.maximum(0.0, 1.0 - m00 - m11 + m22)) / 2.0

    case = np.argmax(np.stack([qw, qx, qy, qz], axis=-1), axis=-1)

    def _safe(den):
        return np.where(den == 0.0, 1.0, den)

    q0 = np.stack(
        [qw, (m21 - m12) / _safe(4 * qw), (m02 - m20) / _safe(4 * qw),
         (m10 - m01) / _safe(4 * qw)], axis=-1)
    q1 = np.stack(
        [(m21 - m12) / _safe(4 * qx), qx, (m01 + m10) / _safe(4 * qx),
         (m02 + m20) / _safe(4 * qx)], axis=-1)
    q2 = np.stack(
        [(m02 - m20) / _safe(4 * qy), (m01 + m10) / _safe(4 * qy), qy,
         (m12 + m21) / _safe(4 * qy)], axis=-1)
    q3 = np.stack(
        [(m10 - m01) / _safe(4 * qz), (m02 + m20) / _safe(4 * qz),
         (m12 + m21) / _safe(4 * qz), qz], axis=-1)

    stacked = np.stack([q0, q1, q2, q3], axis=-2)
    out = np.take_along_axis(stacked, case[..., None, None], axis=-2)[..., 0, :]
    sign = np.where(out[..., 0:1] < 0.0, -1.0, 1.0)
    return quat_normalize(out * sign)


def rot_zyx(roll: np.ndarray, pitch: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    """Rotation R_z(yaw) R_y(pitch) R_x(roll) as a unit quaternion.

    Args:
        roll, pitch, yaw: angles in radians, broadcastable shapes.
    Returns:
        (..., 4) unit quaternion.
    """
    roll = np.asarray(roll, dtype=np.float64)
    pitch = np.asarray(pitch, dtype=np.float64)
    yaw = np.asarray(yaw, dtype=np.float64)
    hr, hp, hy = roll / 2.0, pitch / 2.0, yaw / 2.0
    qx = np.stack([np.cos(hr), np.sin(hr), np.zeros_like(hr), np.zeros_like(hr)], axis=-1)
    qy = np.stack([np.cos(hp), np.zeros_like(hp), np.sin(hp), np.zeros_like(hp)], axis=-1)
    qz = np.stack([np.cos(hy), np.zeros_like(hy), np.zeros_like(hy), np.sin(hy)], axis=-1)
    return quat_multiply(qz, quat_multiply(qy, qx))


def rot_z(yaw: np.ndarray) -> np.ndarray:
    """Pure yaw rotation as a unit quaternion."""
    yaw = np.asarray(yaw, dtype=np.float64)
    h = yaw / 2.0
    zero = np.zeros_like(h)
    return np.stack([np.cos(h), zero, zero, np.sin(h)], axis=-1)


def yaw_of(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ZYX yaw angle of a rotation: psi = atan2(R10, R00).

    Args:
        q: (..., 4) unit quaternion.
    Returns:
        (psi, degenerate): yaw in radians and a flag marking items whose
        pitch is within GIMBAL_TOL of +-pi/2, where the returned yaw is only
        a best-effort value.
    """
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r10 = 2.0 * (x * y + w * z)
    r00 = 1.0 - 2.0 * (y * y + z * z)
    r20 = 2.0 * (x * z - w * y)  # equals -sin(pitch)
    psi = np.arctan2(r10, r00)
    degenerate = np.abs(r20) >= np.cos(GIMBAL_TOL)
    return psi, degenerate


def exp_so3(w: np.ndarray) -> np.ndarray:
    """Exponential map so(3) -> SO(3) as a unit quaternion.

    exp_so3(0) is the identity and exp_so3(theta * e3) equals a yaw rotation
    by theta. Angles below _EXP_TAYLOR_ANGLE use the second-order series of
    sin(theta/2)/theta to avoid 0/0.

    Args:
        w: (..., 3) rotation vector, radians.
    Returns:
        (..., 4) unit quaternion.
    """
    w = np.asarray(w, dtype=np.float64)
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    theta = np.sqrt(wx * wx + wy * wy + wz * wz)
    small = theta < _EXP_TAYLOR_ANGLE
    safe_theta = np.where(small, 1.0, theta)
    # sin(theta/2)/theta: exact where safe, series 1/2 - theta^2/48 otherwise
    k = np.where(small, 0.5 - theta * theta / 48.0, np.sin(safe_theta / 2.0) / safe_theta)
    out = np.stack([np.cos(theta / 2.0), k * wx, k * wy, k * wz], axis=-1)
    return quat_normalize(out)
