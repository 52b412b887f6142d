"""
Synthetic sagittal-plane gait with exact ground truth.

Each leg is a chain pelvis -> thigh -> shank -> foot hinged about the
mediolateral y axis, with the hip joint fixed in space (treadmill-like).
Joint angles follow harmonic waves that start from rest,

    θ(τ) = A/2 (cos φ − cos(ωτ + φ)) + B/2 (cos ψ − cos(2ωτ + ψ)),

with ``ω = 2π / stride_period`` and ``τ`` the time since walking started,
so each single-harmonic joint sweeps a range of exactly ``A`` per stride.
A positive angle rotates the distal segment about +y relative to the
proximal one: knee flexion, hip extension and ankle plantarflexion are
positive.

The simulated IMUs read the segment's analytic angular velocity and the
specific force (gravity plus linear acceleration obtained by a fine central
second difference of the sensor position), both in the sensor frame after
the mounting offset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import ROLE_SEGMENT, ROLES, SIDES, SensorLayout
from .rotations import IDENTITY, euler_to_quat, quat_multiply, quat_to_rotmat
from .session import (
    SensorStream,
    SessionMeta,
    ShoeConfig,
    modules_from_streams,
    write_kv,
    write_session_files,
)

GRAVITY = 9.81
JOINTS = ("hip", "knee", "ankle")
SEGMENTS = ("pelvis", "thigh", "shank", "foot")
# joints whose angles add up to each segment's absolute pitch
SEGMENT_JOINTS = {"pelvis": (), "thigh": ("hip",), "shank": ("hip", "knee"), "foot": ("hip", "knee", "ankle")}


@dataclass(frozen=True)
class GaitProfile:
    """
    Harmonic gait description.

    Amplitudes are peak-to-peak joint ranges in degrees. ``standing_s`` of
    quiet standing precede the ``n_strides`` walking strides, giving the
    filter and the static calibration a neutral window.

    Each joint follows
    ``A/2 (cos phi - cos(w t + phi)) + B/2 (cos psi - cos(2 w t + psi))``
    from walking onset, so it starts at zero angle. It must also start at
    zero rate, ``A/2 sin phi + B sin psi = 0``; the default hip wave
    (A = 30, B = 15, phi = pi/2, psi = -pi/2) satisfies this.
    """

    stride_period_s: float = 1.25
    n_strides: int = 20
    hip_amplitude_deg: float = 30.0
    hip_phase_rad: float = math.pi / 2
    knee_amplitude_deg: float = 60.0
    knee_phase_rad: float = 0.0
    ankle_amplitude_deg: float = 25.0
    ankle_phase_rad: float = math.pi
    hip_harmonic2_deg: float = 15.0
    hip_harmonic2_phase_rad: float = -math.pi / 2
    knee_harmonic2_deg: float = 0.0
    knee_harmonic2_phase_rad: float = 0.0
    ankle_harmonic2_deg: float = 0.0
    ankle_harmonic2_phase_rad: float = 0.0
    thigh_m: float = 0.45
    shank_m: float = 0.43
    foot_m: float = 0.25
    standing_s: float = 2.0
    quasi_static: bool = False

    def __post_init__(self):
        if not self.stride_period_s > 0:
            raise ValueError("stride_period_s must be positive")
        if self.n_strides < 1:
            raise ValueError("n_strides must be at least 1")
        for joint in JOINTS:
            if getattr(self, f"{joint}_amplitude_deg") < 0:
                raise ValueError(f"{joint}_amplitude_deg must be >= 0")
            if getattr(self, f"{joint}_harmonic2_deg") < 0:
                raise ValueError(f"{joint}_harmonic2_deg must be >= 0")
        for name in ("thigh_m", "shank_m", "foot_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.standing_s < 0:
            raise ValueError("standing_s must be >= 0")
        for joint in JOINTS:
            # a wave that leaves rest with nonzero rate makes the finite-difference
            # acceleration spike at walking onset
            a = math.radians(getattr(self, f"{joint}_amplitude_deg"))
            b = math.radians(getattr(self, f"{joint}_harmonic2_deg"))
            rate0 = 0.5 * a * math.sin(getattr(self, f"{joint}_phase_rad")) + b * math.sin(
                getattr(self, f"{joint}_harmonic2_phase_rad")
            )
            if abs(rate0) > 1e-9:
                raise ValueError(
                    f"{joint} wave must start at rest: amplitude/2*sin(phase) + "
                    f"harmonic2*sin(harmonic2_phase) = {math.degrees(rate0):.4g} deg, expected 0"
                )

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.stride_period_s

    @property
    def walking_s(self) -> float:
        return self.n_strides * self.stride_period_s


@dataclass(frozen=True)
class NoiseProfile:
    accel_noise_std: float = 0.05  # m/s²
    gyro_noise_std: float = 0.005  # rad/s
    gyro_bias: tuple[float, float, float] = (0.004, -0.003, 0.002)  # rad/s
    mounting: dict = field(default_factory=dict)  # sensor id -> quaternion
    seed: int = 0

    def __post_init__(self):
        if self.accel_noise_std < 0 or self.gyro_noise_std < 0:
            raise ValueError("noise standard deviations must be >= 0")

    @classmethod
    def noiseless(cls, **kwargs) -> "NoiseProfile":
        return cls(accel_noise_std=0.0, gyro_noise_std=0.0, gyro_bias=(0.0, 0.0, 0.0), **kwargs)


def random_mounting(sensor_ids, seed: int = 0, max_tilt_deg: float = 20.0) -> dict[int, np.ndarray]:
    """
    Random sensor-on-segment tilts (roll and pitch up to ``max_tilt_deg``).

    Offsets are pure tilts: a rotation about the segment's vertical long
    axis cannot be recovered from a standing calibration without a
    magnetometer.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for sid in sensor_ids:
        roll, pitch = rng.uniform(-max_tilt_deg, max_tilt_deg, size=2)
        out[int(sid)] = euler_to_quat(roll, pitch, 0.0)
    return out


# sensor position on its segment, segment frame, metres: (forward, lateral, fraction of length down)
_SENSOR_SITES = {
    "pelvis": (0.0, 0.0, 0.0),
    "thigh_upper": (0.07, 0.0, 0.3),
    "thigh_lower": (0.06, 0.0, 0.8),
    "shank_upper": (0.05, 0.0, 0.2),
    "shank_lower": (0.04, 0.0, 0.8),
}


def _joint_terms(profile: GaitProfile, joint: str, tau: np.ndarray):
    a = math.radians(getattr(profile, f"{joint}_amplitude_deg"))
    phi = getattr(profile, f"{joint}_phase_rad")
    b = math.radians(getattr(profile, f"{joint}_harmonic2_deg"))
    psi = getattr(profile, f"{joint}_harmonic2_phase_rad")
    w = profile.omega
    walking = tau >= 0.0
    tau = np.where(walking, tau, 0.0)
    angle = 0.5 * a * (math.cos(phi) - np.cos(w * tau + phi)) + 0.5 * b * (math.cos(psi) - np.cos(2 * w * tau + psi))
    rate = 0.5 * a * w * np.sin(w * tau + phi) + b * w * np.sin(2 * w * tau + psi)
    return np.where(walking, angle, 0.0), np.where(walking, rate, 0.0)


def joint_angle_model(profile: GaitProfile, t: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Analytic joint angle (rad) and angular rate (rad/s) at times ``t``."""
    tau = np.asarray(t, dtype=float) - profile.standing_s
    return {joint: _joint_terms(profile, joint, tau) for joint in JOINTS}


def _segment_pitch(profile: GaitProfile, t: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    joints = joint_angle_model(profile, t)
    out = {}
    for seg in SEGMENTS:
        angle = np.zeros_like(np.asarray(t, dtype=float))
        rate = np.zeros_like(angle)
        for j in SEGMENT_JOINTS[seg]:
            angle = angle + joints[j][0]
            rate = rate + joints[j][1]
        out[seg] = (angle, rate)
    return out


def _rot_y(angle: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    R = np.zeros(np.shape(angle) + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 2] = s
    R[..., 1, 1] = 1.0
    R[..., 2, 0] = -s
    R[..., 2, 2] = c
    return R


def _pitch_quat(angle: np.ndarray) -> np.ndarray:
    half = 0.5 * np.asarray(angle)
    q = np.zeros(np.shape(half) + (4,))
    q[..., 0] = np.cos(half)
    q[..., 2] = np.sin(half)
    return q


def sensor_positions(profile: GaitProfile, t) -> dict[str, np.ndarray]:
    """Global position (hip joint at the origin, z up) of every sensor role, shape (N, 3)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    pitch = _segment_pitch(profile, t)
    down = np.array([0.0, 0.0, -1.0])
    R = {seg: _rot_y(pitch[seg][0]) for seg in SEGMENTS}
    hip = np.zeros((len(t), 3))
    knee = hip + R["thigh"] @ (profile.thigh_m * down)
    ankle = knee + R["shank"] @ (profile.shank_m * down)
    origin = {"pelvis": hip, "thigh": hip, "shank": knee}
    length = {"pelvis": 0.0, "thigh": profile.thigh_m, "shank": profile.shank_m}
    out = {}
    for role, (fwd, lat, frac) in _SENSOR_SITES.items():
        seg = ROLE_SEGMENT[role]
        local = np.array([fwd, lat, -frac * length[seg]])
        out[role] = origin[seg] + R[seg] @ local
    out["foot"] = ankle + R["foot"] @ np.array([0.4 * profile.foot_m, 0.0, 0.03])
    return out


@dataclass
class Trajectory:
    """Ground-truth gait on a uniform sample grid."""

    profile: GaitProfile
    fs: float
    timestamps: np.ndarray
    joint_angles_deg: dict[str, np.ndarray]
    joint_rates: dict[str, np.ndarray]  # rad/s
    segment_quats: dict[str, np.ndarray]  # (N, 4), segment to global
    segment_rates: dict[str, np.ndarray]  # pitch rate about y, rad/s

    def __len__(self):
        return len(self.timestamps)


def gen_trajectory(profile: GaitProfile, fs: float = 32.0) -> Trajectory:
    """
    Sample the joint-angle model and chain segment orientations.

    The pelvis stays at identity. The grid has ``round(standing_s * fs)``
    standing samples followed by ``round(n_strides * stride_period_s * fs)``
    walking samples.
    """
    if not fs > 0:
        raise ValueError("fs must be positive")
    n = int(round(profile.standing_s * fs)) + int(round(profile.walking_s * fs))
    t = np.arange(n) / fs
    joints = joint_angle_model(profile, t)
    pitch = _segment_pitch(profile, t)
    return Trajectory(
        profile=profile,
        fs=fs,
        timestamps=t,
        joint_angles_deg={j: np.degrees(joints[j][0]) for j in JOINTS},
        joint_rates={j: joints[j][1] for j in JOINTS},
        segment_quats={seg: _pitch_quat(pitch[seg][0]) for seg in SEGMENTS},
        segment_rates={seg: pitch[seg][1] for seg in SEGMENTS},
    )


def event_times(profile: GaitProfile) -> np.ndarray:
    """
    Analytic stride marks: the onset of every stride.

    Every joint wave restarts its period at these instants, so any
    periodic feature of the sensor signals (such as the acceleration peak
    used for step detection) falls at a fixed offset after each mark.
    """
    return profile.standing_s + np.arange(profile.n_strides) * profile.stride_period_s


@dataclass
class SyntheticSession:
    trajectory: Trajectory
    streams: dict[int, SensorStream]
    events: np.ndarray
    layout: SensorLayout
    mounting: dict[int, np.ndarray]
    true_sensor_quats: dict[int, np.ndarray]


def synth_imu(
    trajectory: Trajectory,
    noise: NoiseProfile = NoiseProfile(),
    layout: SensorLayout = SensorLayout(),
    fd_step_s: float = 1e-3,
) -> SyntheticSession:
    """
    Ideal plus corrupted IMU readings for every sensor of both legs.

    Both legs follow the same trajectory. Noise is drawn from one generator
    seeded by ``noise.seed``, sensor by sensor in ascending id order.
    """
    profile = trajectory.profile
    t = trajectory.timestamps
    rng = np.random.default_rng(noise.seed)
    g_global = np.array([0.0, 0.0, GRAVITY])
    bias = np.asarray(noise.gyro_bias, dtype=float)

    if profile.quasi_static:
        lin_acc = {role: np.zeros((len(t), 3)) for role in ROLES}
    else:
        h = fd_step_s
        p_minus = sensor_positions(profile, t - h)
        p_mid = sensor_positions(profile, t)
        p_plus = sensor_positions(profile, t + h)
        lin_acc = {role: (p_plus[role] - 2 * p_mid[role] + p_minus[role]) / h**2 for role in ROLES}

    streams = {}
    true_quats = {}
    mounting = {}
    for sid in sorted(layout.sensor_ids()):
        side, role = layout.role_of(sid)
        seg = ROLE_SEGMENT[role]
        m = np.asarray(noise.mounting.get(sid, IDENTITY), dtype=float)
        m = m / np.linalg.norm(m)
        mounting[sid] = m
        q_sensor = quat_multiply(trajectory.segment_quats[seg], m)
        R_sensor = quat_to_rotmat(q_sensor)
        R_mount = quat_to_rotmat(m)
        omega_seg = np.zeros((len(t), 3))
        omega_seg[:, 1] = trajectory.segment_rates[seg]
        gyro = omega_seg @ R_mount  # R_mountᵀ ω per row
        accel = np.einsum("nji,nj->ni", R_sensor, lin_acc[role] + g_global)
        gyro = gyro + bias + rng.normal(0.0, noise.gyro_noise_std, size=gyro.shape)
        accel = accel + rng.normal(0.0, noise.accel_noise_std, size=accel.shape)
        streams[sid] = SensorStream(sid, t.copy(), accel, gyro)
        true_quats[sid] = q_sensor
    return SyntheticSession(trajectory, streams, event_times(profile), layout, mounting, true_quats)


def simulate(
    profile: GaitProfile = GaitProfile(),
    noise: NoiseProfile = NoiseProfile(),
    fs: float = 32.0,
    layout: SensorLayout = SensorLayout(),
) -> SyntheticSession:
    return synth_imu(gen_trajectory(profile, fs), noise, layout)


def write_session(
    sim: SyntheticSession,
    meta: SessionMeta,
    out_dir,
) -> Path:
    """
    Write a session directory plus a ground-truth sidecar.

    The sidecar is ``truth.kv`` (profile, stride count, event times) and
    ``truth_angles.csv`` (time and true joint angles in degrees).
    """
    out_dir = Path(out_dir)
    try:
        modules = modules_from_streams(sim.streams, sim.layout, sim.trajectory.fs)
        write_session_files(out_dir, meta, modules)
        p = sim.trajectory.profile
        truth = {f"profile.{name}": getattr(p, name) for name in p.__dataclass_fields__}
        truth["n_strides"] = p.n_strides
        truth["stride_period_s"] = p.stride_period_s
        truth["event_times_s"] = " ".join(repr(float(e)) for e in sim.events)
        for sid, q in sorted(sim.mounting.items()):
            truth[f"mounting.{sid}"] = " ".join(repr(float(c)) for c in q)
        write_kv(out_dir / "truth.kv", truth, comment="synthetic ground truth")
        traj = sim.trajectory
        lines = ["t,hip_deg,knee_deg,ankle_deg"]
        for k, tk in enumerate(traj.timestamps):
            lines.append(
                ",".join(repr(float(v)) for v in (tk, *(traj.joint_angles_deg[j][k] for j in JOINTS)))
            )
        (out_dir / "truth_angles.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write session to {out_dir}: {exc}") from exc
    return out_dir


def default_meta(candidate_id: str = "sim", shoe: ShoeConfig | None = None, fs: float = 32.0) -> SessionMeta:
    return SessionMeta(
        candidate_id=candidate_id,
        shoe=shoe or ShoeConfig("H1", 0.5, 0.75),
        sample_rate_hz=fs,
        notes="synthetic session",
    )
