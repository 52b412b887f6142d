"""
Quaternion and rotation-matrix algebra.

Quaternions are numpy arrays laid out scalar-first ``(w, x, y, z)`` and follow
the Hamilton convention. A quaternion ``q`` describes the rotation taking
vectors from a body (sensor) frame into the reference frame, so
``quat_to_rotmat(q) @ v_body == v_ref``.

Euler angles use the intrinsic Z-Y-X (yaw-pitch-roll) sequence,
``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``, and are reported in degrees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

# |pitch| at or beyond this is treated as gimbal lock
GIMBAL_PITCH_DEG = 89.0


class EulerAngles(NamedTuple):
    """Z-Y-X Euler angles in degrees."""

    roll: float
    pitch: float
    yaw: float
    gimbal_lock: bool = False


@dataclass(frozen=True)
class ImuSample:
    """One timestamped 6-axis reading from one sensor."""

    timestamp_s: float
    sensor_id: int
    accel: np.ndarray  # m/s^2, sensor frame
    gyro: np.ndarray  # rad/s, sensor frame

    def __post_init__(self):
        if not 0 <= self.sensor_id <= 11:
            raise ValueError(f"sensor_id must be in 0..11, got {self.sensor_id}")
        accel = np.asarray(self.accel, dtype=float).reshape(3)
        gyro = np.asarray(self.gyro, dtype=float).reshape(3)
        if not (np.all(np.isfinite(accel)) and np.all(np.isfinite(gyro))):
            raise ValueError("IMU sample contains non-finite values")
        object.__setattr__(self, "accel", accel)
        object.__setattr__(self, "gyro", gyro)


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ValueError(f"quaternion must have 4 components, got shape {q.shape}")
    return q


def quat_multiply(a, b) -> np.ndarray:
    """
    Hamilton product ``a ⊗ b``.

    Broadcasts over leading dimensions, so stacks of quaternions of shape
    (N, 4) can be multiplied element-wise.
    """
    a = _as_quat(a)
    b = _as_quat(b)
    if a.ndim == 1 and b.ndim == 1:
        aw, ax, ay, az = a.tolist()
        bw, bx, by, bz = b.tolist()
        return np.array(
            [
                aw * bw - ax * bx - ay * by - az * bz,
                aw * bx + ax * bw + ay * bz - az * by,
                aw * by - ax * bz + ay * bw + az * bx,
                aw * bz + ax * by - ay * bx + az * bw,
            ]
        )
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q) -> np.ndarray:
    """Negate the vector part. For unit quaternions this is the inverse."""
    q = _as_quat(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_normalize(q) -> np.ndarray:
    q = _as_quat(q)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / norm


def quat_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle_rad
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_from_rotvec(rotvec) -> np.ndarray:
    """
    Exponential map from a rotation vector (axis times angle, radians).

    Works on a single vector or a stack of shape (N, 3).
    """
    rotvec = np.asarray(rotvec, dtype=float)
    if rotvec.ndim == 1:
        angle = math.sqrt(float(rotvec @ rotvec))
        scale = math.sin(0.5 * angle) / angle if angle > 1e-8 else 0.5 - angle**2 / 48.0
        return np.concatenate([[math.cos(0.5 * angle)], scale * rotvec])
    angle = np.linalg.norm(rotvec, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sin(x/2)/x with a series fallback near zero
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(angle > 1e-8, np.sin(half) / angle, 0.5 - angle**2 / 48.0)
    return np.concatenate([np.cos(half), scale * rotvec], axis=-1)


def quat_to_rotmat(q) -> np.ndarray:
    """
    Direction cosine matrix of a quaternion.

    The quaternion need not be exactly unit; the mapping divides by the
    squared norm, which leaves ``q`` and ``-q`` giving bit-identical results.
    Accepts shape (4,) or (N, 4).

    Raises
    ------
    ValueError
        If the input contains non-finite values or has zero norm.
    """
    q = _as_quat(q)
    if not np.all(np.isfinite(q)):
        raise ValueError("quaternion contains non-finite values")
    single = q.ndim == 1
    w, x, y, z = q.tolist() if single else np.moveaxis(q, -1, 0)
    n2 = w * w + x * x + y * y + z * z
    if np.any(n2 == 0.0):
        raise ValueError("zero quaternion has no rotation")
    s = 2.0 / n2
    xx, yy, zz = s * x * x, s * y * y, s * z * z
    xy, xz, yz = s * x * y, s * x * z, s * y * z
    wx, wy, wz = s * w * x, s * w * y, s * w * z
    if single:
        return np.array(
            [
                [1.0 - (yy + zz), xy - wz, xz + wy],
                [xy + wz, 1.0 - (xx + zz), yz - wx],
                [xz - wy, yz + wx, 1.0 - (xx + yy)],
            ]
        )
    R = np.stack(
        [
            np.stack([1.0 - (yy + zz), xy - wz, xz + wy], axis=-1),
            np.stack([xy + wz, 1.0 - (xx + zz), yz - wx], axis=-1),
            np.stack([xz - wy, yz + wx, 1.0 - (xx + yy)], axis=-1),
        ],
        axis=-2,
    )
    return R


def rotmat_to_quat(R) -> np.ndarray:
    """Inverse of :func:`quat_to_rotmat` for a single matrix, returned with w >= 0."""
    R = np.asarray(R, dtype=float)
    trace = np.trace(R)
    if trace > 0.0:
        s = 2.0 * np.sqrt(trace + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def rotate_vector(q, v) -> np.ndarray:
    """Rotate ``v`` by ``q`` via the sandwich product ``q ⊗ (0, v) ⊗ q*``."""
    v = np.asarray(v, dtype=float)
    pure = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return quat_multiply(quat_multiply(q, pure), quat_conjugate(q))[..., 1:]


def euler_to_rotmat(roll_deg: float, pitch_deg: float, yaw_deg: float) -> np.ndarray:
    """Build ``Rz(yaw) @ Ry(pitch) @ Rx(roll)`` from angles in degrees."""
    r, p, y = np.radians([roll_deg, pitch_deg, yaw_deg])
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def euler_to_quat(roll_deg: float, pitch_deg: float, yaw_deg: float) -> np.ndarray:
    r, p, y = np.radians([roll_deg, pitch_deg, yaw_deg]) / 2.0
    qx = np.array([np.cos(r), np.sin(r), 0.0, 0.0])
    qy = np.array([np.cos(p), 0.0, np.sin(p), 0.0])
    qz = np.array([np.cos(y), 0.0, 0.0, np.sin(y)])
    return quat_multiply(qz, quat_multiply(qy, qx))


def _wrap_deg(angle: np.ndarray) -> np.ndarray:
    # atan2 may return exactly -180; the convention keeps (-180, 180]
    return np.where(angle <= -180.0, angle + 360.0, angle)


def rotmat_to_euler_array(R) -> tuple[np.ndarray, np.ndarray]:
    """
    Vectorized Z-Y-X decomposition.

    Parameters
    ----------
    R : array-like, shape (..., 3, 3)
        Rotation matrices.

    Returns
    -------
    angles : ndarray, shape (..., 3)
        ``(roll, pitch, yaw)`` in degrees.
    gimbal : ndarray of bool, shape (...)
        True where ``|pitch| >= 89°``. There roll is set to 0 and the whole
        residual rotation about the vertical is attributed to yaw.
    """
    R = np.asarray(R, dtype=float)
    pitch = np.degrees(np.arcsin(np.clip(-R[..., 2, 0], -1.0, 1.0)))
    gimbal = np.abs(pitch) >= GIMBAL_PITCH_DEG
    roll = np.degrees(np.arctan2(R[..., 2, 1], R[..., 2, 2]))
    yaw = np.degrees(np.arctan2(R[..., 1, 0], R[..., 0, 0]))
    yaw_locked = np.degrees(np.arctan2(-R[..., 0, 1], R[..., 1, 1]))
    roll = np.where(gimbal, 0.0, roll)
    yaw = np.where(gimbal, yaw_locked, yaw)
    angles = np.stack([_wrap_deg(roll), pitch, _wrap_deg(yaw)], axis=-1)
    return angles, gimbal


def rotmat_to_euler(R) -> EulerAngles:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {R.shape}")
    angles, gimbal = rotmat_to_euler_array(R)
    return EulerAngles(float(angles[0]), float(angles[1]), float(angles[2]), bool(gimbal))


def quat_to_euler(q) -> EulerAngles:
    return rotmat_to_euler(quat_to_rotmat(q))


def relative_rotation(q_proximal, q_distal) -> np.ndarray:
    """
    Rotation of the distal frame expressed in the proximal frame.

    Computes ``rotmat(conj(q_proximal) ⊗ q_distal)``. A rotation applied to
    both inputs from the left (a shared change of global frame, such as
    common heading drift) cancels out. Works on single quaternions or on
    stacks of shape (N, 4).
    """
    return quat_to_rotmat(quat_multiply(quat_conjugate(q_proximal), q_distal))


def skew(v) -> np.ndarray:
    """Cross-product matrix, ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
