"""End-to-end processing of one session: filter, joint angles, cycles, metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ekf import EkfConfig, EkfTrack, ekf_run
from .kinematics import JointAngleSeries, MountingCalibration, joint_angles, static_calibrate
from .metrics import (
    GaitCycle,
    PeakParams,
    SessionMetrics,
    accel_magnitudes,
    detect_steps,
    segment_cycles,
    session_metrics,
)
from .rotations import quat_to_rotmat
from .session import Session, SessionMeta, SensorStream, load_session, synchronize

# sensor whose acceleration marks strides: near the ankle, largest range of motion
STEP_SENSOR = ("left", "shank_lower")


@dataclass
class SessionResult:
    meta: SessionMeta
    metrics: SessionMetrics
    angles: list[JointAngleSeries] = field(default_factory=list)
    peaks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cycles: list[GaitCycle] = field(default_factory=list)
    tracks: dict[int, EkfTrack] = field(default_factory=dict)
    calibration: MountingCalibration | None = None

    def series(self, side: str, joint: str) -> JointAngleSeries:
        for s in self.angles:
            if s.side == side and s.joint == joint:
                return s
        raise KeyError(f"no {side} {joint} series")


def linear_accel_magnitude(track: EkfTrack, accel: np.ndarray, gravity: float) -> np.ndarray:
    """Magnitude of the specific force rotated to the global frame minus gravity."""
    R = quat_to_rotmat(track.quats)
    world = np.einsum("nij,nj->ni", R, accel)
    world[:, 2] -= gravity
    return np.linalg.norm(world, axis=1)


def analyze_streams(
    streams: dict[int, SensorStream],
    meta: SessionMeta,
    ekf_config: EkfConfig = EkfConfig(),
    peak_params: PeakParams = PeakParams(),
    calibration: MountingCalibration | None = None,
    calibration_s: float = 1.0,
) -> SessionResult:
    """
    Run the full pipeline on synchronized streams.

    Without a stored calibration, the first ``calibration_s`` seconds are
    taken as quiet standing for the neutral-pose calibration.
    """
    layout = meta.layout
    fs = meta.sample_rate_hz
    tracks = {sid: ekf_run(streams[sid], ekf_config, sample_rate_hz=fs) for sid in layout.sensor_ids()}
    if calibration is None:
        t0 = min(float(streams[sid].timestamps[0]) for sid in layout.sensor_ids())
        standing = {sid: streams[sid].window(t0, t0 + calibration_s) for sid in layout.sensor_ids()}
        calibration = static_calibrate(standing, layout)
    angles = joint_angles(tracks, layout, calibration)

    step_id = layout.sensor_id(*STEP_SENSOR)
    track = tracks[step_id]
    accel = streams[step_id].accel[track.init_window :]
    magnitude = accel_magnitudes(accel)
    linear = linear_accel_magnitude(track, accel, ekf_config.gravity_magnitude)
    peaks = detect_steps(magnitude, fs, peak_params)
    cycles = segment_cycles(peaks, angles)
    metrics = session_metrics(cycles, magnitude, linear)
    return SessionResult(meta, metrics, angles, peaks, cycles, tracks, calibration)


def analyze_session(
    session: Session | str,
    ekf_config: EkfConfig = EkfConfig(),
    peak_params: PeakParams = PeakParams(),
    calibration_s: float = 1.0,
) -> SessionResult:
    """
    Analyze a session directory (or a loaded :class:`Session`).

    Metadata-only sessions, which carry precomputed metrics and no module
    files, pass their stored values through untouched.
    """
    if not isinstance(session, Session):
        session = load_session(session)
    if session.metadata_only:
        reported = session.meta.reported
        missing = [k for k in ("step_cycle_time_s", "mean_accel_magnitude_mps2", "accel_variance_mps2sq") if k not in reported]
        if missing:
            raise ValueError(f"{session.path}: no module files and no stored metrics {missing}")
        metrics = SessionMetrics(
            mean_step_cycle_time_s=reported["step_cycle_time_s"],
            mean_accel_magnitude_mps2=reported["mean_accel_magnitude_mps2"],
            accel_variance_mps2sq=reported["accel_variance_mps2sq"],
        )
        return SessionResult(session.meta, metrics)
    streams = synchronize(session.modules, session.meta)
    return analyze_streams(
        streams,
        session.meta,
        ekf_config,
        peak_params,
        calibration=session.calibration,
        calibration_s=calibration_s,
    )
