"""
Joint angles from per-sensor orientation streams.

Each leg carries six sensors, two on either side of each joint. A joint
angle is the rotation of the distal sensor relative to the proximal one,
after each sensor has been aligned to its body segment by a static
(neutral standing) calibration. The flexion-extension angle of every
joint is the pitch component (rotation about the mediolateral y axis).

Heading is unobservable without a magnetometer, so the static calibration
can only remove mounting tilt. A sensor rotated about its segment's
vertical long axis is zeroed correctly on the standing window, but its
flexion then leaks partly into the roll component during movement.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .ekf import tilt_quaternion
from .rotations import (
    IDENTITY,
    quat_conjugate,
    quat_multiply,
    relative_rotation,
    rotmat_to_euler_array,
)

ROLES = ("pelvis", "thigh_upper", "thigh_lower", "shank_upper", "shank_lower", "foot")
SIDES = ("left", "right")
JOINT_PAIRS = {
    "hip": ("pelvis", "thigh_upper"),
    "knee": ("thigh_lower", "shank_upper"),
    "ankle": ("shank_lower", "foot"),
}
# body segment carrying each sensor role
ROLE_SEGMENT = {
    "pelvis": "pelvis",
    "thigh_upper": "thigh",
    "thigh_lower": "thigh",
    "shank_upper": "shank",
    "shank_lower": "shank",
    "foot": "foot",
}

QUASI_STATIC_VARIANCE = 0.5  # (m/s²)², summed over axes


class CalibrationError(ValueError):
    pass


class StreamMisalignmentError(ValueError):
    pass


@dataclass(frozen=True)
class SensorLayout:
    """Sensor id of each role on each leg."""

    left: Mapping[str, int] = field(default_factory=lambda: dict(zip(ROLES, range(0, 6))))
    right: Mapping[str, int] = field(default_factory=lambda: dict(zip(ROLES, range(6, 12))))

    def __post_init__(self):
        for side in SIDES:
            roles = getattr(self, side)
            missing = set(ROLES) - set(roles)
            if missing:
                raise ValueError(f"{side} leg layout is missing roles {sorted(missing)}")
            ids = [roles[r] for r in ROLES]
            if len(set(ids)) != len(ids):
                raise ValueError(f"{side} leg layout reuses sensor ids: {ids}")
        both = [self.left[r] for r in ROLES] + [self.right[r] for r in ROLES]
        if len(set(both)) != len(both):
            raise ValueError("left and right legs share sensor ids")
        if not all(0 <= i <= 11 for i in both):
            raise ValueError("sensor ids must be in 0..11")

    def sensor_id(self, side: str, role: str) -> int:
        return getattr(self, side)[role]

    def sensor_ids(self) -> list[int]:
        return [self.sensor_id(side, role) for side in SIDES for role in ROLES]

    def role_of(self, sensor_id: int) -> tuple[str, str]:
        for side in SIDES:
            for role in ROLES:
                if getattr(self, side)[role] == sensor_id:
                    return side, role
        raise KeyError(f"sensor {sensor_id} is not in the layout")

    def joint_sensors(self, side: str, joint: str) -> tuple[int, int]:
        proximal, distal = JOINT_PAIRS[joint]
        return self.sensor_id(side, proximal), self.sensor_id(side, distal)

    def to_dict(self) -> dict[str, int]:
        return {f"layout.{side}.{role}": self.sensor_id(side, role) for side in SIDES for role in ROLES}

    @classmethod
    def from_dict(cls, items: Mapping[str, str]) -> "SensorLayout":
        sides = {}
        for side in SIDES:
            sides[side] = {role: int(items[f"layout.{side}.{role}"]) for role in ROLES}
        return cls(**sides)


@dataclass
class MountingCalibration:
    """Per-sensor alignment quaternion, sensor frame to body-segment frame."""

    alignments: dict[int, np.ndarray]

    def __post_init__(self):
        for sid, q in self.alignments.items():
            q = np.asarray(q, dtype=float)
            if abs(np.linalg.norm(q) - 1.0) > 1e-9:
                raise ValueError(f"alignment for sensor {sid} is not a unit quaternion")
            self.alignments[sid] = q

    def align(self, sensor_id: int, quats: np.ndarray) -> np.ndarray:
        return quat_multiply(quats, self.alignments.get(sensor_id, IDENTITY))

    @classmethod
    def identity(cls, sensor_ids) -> "MountingCalibration":
        return cls({sid: IDENTITY.copy() for sid in sensor_ids})


@dataclass
class JointAngleSeries:
    joint: str
    side: str
    timestamps: np.ndarray
    angles: np.ndarray  # (N, 3) roll, pitch, yaw in degrees
    gimbal: np.ndarray

    def __post_init__(self):
        if len(self.timestamps) != len(self.angles):
            raise ValueError("timestamps and angles differ in length")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    @property
    def primary_angle(self) -> np.ndarray:
        """Flexion-extension angle in degrees (pitch of the relative rotation)."""
        return self.angles[:, 1]

    def __len__(self):
        return len(self.timestamps)


def _accel_of(samples) -> np.ndarray:
    if hasattr(samples, "accel"):
        accel = np.asarray(samples.accel, dtype=float)
        t = np.asarray(samples.timestamps, dtype=float)
    else:
        samples = list(samples)
        accel = np.array([s.accel for s in samples], dtype=float).reshape(-1, 3)
        t = np.array([s.timestamp_s for s in samples], dtype=float)
    return t, accel


def static_calibrate(standing_samples: Mapping[int, object], layout: SensorLayout) -> MountingCalibration:
    """
    Neutral-pose calibration from quiet standing.

    Every body segment is assumed to be at the reference (upright) attitude
    during the window. The tilt of each sensor is read from its mean
    accelerometer direction and inverted, so all joint angles evaluate to
    zero on the window.

    Parameters
    ----------
    standing_samples : mapping of sensor id to a stream of ImuSample (or
        an object with ``timestamps`` and ``accel`` arrays), at least one
        second long each.
    layout : SensorLayout

    Raises
    ------
    CalibrationError
        If a sensor is missing, its window is shorter than one second, or its
        summed per-axis accelerometer variance exceeds 0.5 (m/s²)².
    """
    alignments = {}
    for sid in layout.sensor_ids():
        if sid not in standing_samples:
            raise CalibrationError(f"no standing data for sensor {sid}")
        t, accel = _accel_of(standing_samples[sid])
        if len(t) < 2:
            raise CalibrationError(f"sensor {sid}: standing window too short")
        period = float(np.median(np.diff(t)))
        if t[-1] - t[0] + period < 1.0 - 1e-9:
            raise CalibrationError(
                f"sensor {sid}: standing window covers {t[-1] - t[0] + period:.3f} s, need at least 1 s"
            )
        variance = float(accel.var(axis=0).sum())
        if variance > QUASI_STATIC_VARIANCE:
            raise CalibrationError(
                f"sensor {sid}: accelerometer variance {variance:.3f} (m/s²)² exceeds the "
                f"quasi-static threshold {QUASI_STATIC_VARIANCE}"
            )
        alignments[sid] = quat_conjugate(tilt_quaternion(accel.mean(axis=0)))
    return MountingCalibration(alignments)


def joint_angles(
    q_streams: Mapping[int, object],
    layout: SensorLayout,
    calib: MountingCalibration | None = None,
    joints=("hip", "knee", "ankle"),
) -> list[JointAngleSeries]:
    """
    Euler angles of every joint on both legs.

    Parameters
    ----------
    q_streams : mapping of sensor id to an object with ``timestamps`` and
        ``quats`` arrays (such as :class:`shoegait.ekf.EkfTrack`).
    layout : SensorLayout
    calib : MountingCalibration, optional
        Identity alignment when omitted.

    Returns
    -------
    list of JointAngleSeries, ordered by side then by ``joints``.

    Raises
    ------
    StreamMisalignmentError
        If the two streams of a joint are not on the same tick grid.
    """
    if calib is None:
        calib = MountingCalibration.identity(layout.sensor_ids())
    out = []
    for side in SIDES:
        for joint in joints:
            prox_id, dist_id = layout.joint_sensors(side, joint)
            prox = q_streams[prox_id]
            dist = q_streams[dist_id]
            t_p = np.asarray(prox.timestamps, dtype=float)
            t_d = np.asarray(dist.timestamps, dtype=float)
            if t_p.shape != t_d.shape or not np.allclose(t_p, t_d, rtol=0.0, atol=1e-9):
                raise StreamMisalignmentError(
                    f"{side} {joint}: sensors {prox_id} and {dist_id} are on different tick grids"
                )
            qp = calib.align(prox_id, np.asarray(prox.quats, dtype=float))
            qd = calib.align(dist_id, np.asarray(dist.quats, dtype=float))
            angles, gimbal = rotmat_to_euler_array(relative_rotation(qp, qd))
            out.append(JointAngleSeries(joint, side, t_p.copy(), angles, gimbal))
    return out
