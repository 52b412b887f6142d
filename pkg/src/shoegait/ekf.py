"""
Error-state extended Kalman filter for 6-axis IMU attitude.

The nominal state is a unit attitude quaternion (sensor to global, global z
up) and a gyro bias. The filter covariance lives on a 6-dimensional error
state: a small rotation ``δθ`` applied on the right of the nominal
quaternion, ``q_true = q ⊗ exp(δθ)``, and an additive bias error.

The accelerometer is used as a gravity reference. At rest it measures the
specific force ``R(q)ᵀ (0, 0, g)``. Samples whose magnitude departs from
``g`` by more than ``accel_gate * g`` are treated as dynamic and skipped.
There is no magnetometer, so heading is unobservable and drifts freely.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .rotations import (
    ImuSample,
    euler_to_quat,
    quat_from_rotvec,
    quat_multiply,
    quat_to_rotmat,
    skew,
)


class EkfInitError(ValueError):
    """The initialization window is not quasi-static."""


class TimestampGapError(ValueError):
    """Consecutive samples are further apart than the allowed gap."""

    def __init__(self, index: int, dt: float):
        super().__init__(f"timestamp gap of {dt:.4f} s before sample {index}")
        self.index = index
        self.dt = dt


@dataclass(frozen=True)
class EkfConfig:
    """
    Filter tuning.

    Parameters
    ----------
    gyro_noise_density : float
        Gyro white noise, rad/s/√Hz.
    accel_noise : float
        Accelerometer measurement noise standard deviation, m/s².
    bias_random_walk : float
        Gyro bias random walk, rad/s²/√Hz.
    gravity_magnitude : float
        Local gravity, m/s².
    accel_gate : float
        Updates are skipped when ``| |a| - g | > accel_gate * g``.
    initial_attitude_std : float
        Prior attitude error standard deviation, rad.
    initial_bias_std : float
        Prior gyro bias standard deviation, rad/s.
    """

    gyro_noise_density: float = 0.005
    accel_noise: float = 2.0
    bias_random_walk: float = 1e-4
    gravity_magnitude: float = 9.81
    accel_gate: float = 0.9
    initial_attitude_std: float = 0.05
    initial_bias_std: float = 0.01

    def __post_init__(self):
        for name in (
            "gyro_noise_density",
            "accel_noise",
            "bias_random_walk",
            "gravity_magnitude",
            "initial_attitude_std",
            "initial_bias_std",
        ):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if not (np.isfinite(self.accel_gate) and self.accel_gate >= 0):
            raise ValueError(f"accel_gate must be >= 0, got {self.accel_gate}")


@dataclass(frozen=True)
class EkfState:
    q: np.ndarray  # (w, x, y, z)
    bias: np.ndarray  # rad/s
    P: np.ndarray  # 6x6 error-state covariance

    def copy_with(self, **changes) -> "EkfState":
        return replace(self, **changes)


@dataclass
class EkfTrack:
    """Filter output for one sensor stream, one row per processed sample."""

    timestamps: np.ndarray
    quats: np.ndarray
    biases: np.ndarray
    gated: np.ndarray
    cov_diag: np.ndarray
    sensor_id: int | None = None
    init_window: int = 8
    final_state: EkfState | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.timestamps)

    def __iter__(self):
        return iter(zip(self.timestamps, self.quats))


def tilt_quaternion(mean_accel) -> np.ndarray:
    """Zero-heading attitude whose gravity prediction matches ``mean_accel``."""
    ax, ay, az = np.asarray(mean_accel, dtype=float)
    roll = np.degrees(np.arctan2(ay, az))
    pitch = np.degrees(np.arctan2(-ax, np.hypot(ay, az)))
    return euler_to_quat(roll, pitch, 0.0)


def ekf_init(config: EkfConfig, first_accels: Sequence) -> EkfState:
    """
    Level the filter from a short quasi-static window.

    Roll and pitch come from the mean accelerometer direction, heading is
    set to zero and the bias to zero.

    Raises
    ------
    EkfInitError
        If fewer than 8 samples are given or the mean magnitude is more than
        30 % away from gravity.
    """
    accels = np.asarray(first_accels, dtype=float).reshape(-1, 3)
    if len(accels) < 8:
        raise EkfInitError(f"need at least 8 samples to initialize, got {len(accels)}")
    if not np.all(np.isfinite(accels)):
        raise EkfInitError("initialization window contains non-finite values")
    mean = accels.mean(axis=0)
    g = config.gravity_magnitude
    magnitude = np.linalg.norm(mean)
    if abs(magnitude - g) > 0.3 * g:
        raise EkfInitError(
            f"mean acceleration {magnitude:.3f} m/s² deviates more than 30% from gravity; "
            "sensor is not quasi-static at start"
        )
    P = np.diag([config.initial_attitude_std**2] * 3 + [config.initial_bias_std**2] * 3)
    return EkfState(q=tilt_quaternion(mean), bias=np.zeros(3), P=P)


def ekf_predict(state: EkfState, gyro, dt: float, config: EkfConfig = EkfConfig()) -> EkfState:
    """
    Propagate attitude with the bias-corrected gyro over ``dt`` seconds.

    The quaternion takes one first-order step ``q ⊗ (1, ω dt / 2)`` and is
    renormalized. The covariance is propagated with the linearized error
    dynamics plus gyro white noise and bias random walk.
    """
    gyro = np.asarray(gyro, dtype=float)
    if not np.all(np.isfinite(gyro)):
        raise ValueError("gyro contains non-finite values")
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must be in (0, 0.1] s, got {dt}")

    omega = gyro - state.bias
    dq = np.concatenate([[1.0], 0.5 * dt * omega])
    q = quat_multiply(state.q, dq)
    q = q / np.linalg.norm(q)

    F = np.eye(6)
    F[:3, :3] = quat_to_rotmat(quat_from_rotvec(omega * dt)).T
    F[:3, 3:] = -dt * np.eye(3)
    Q = np.diag(
        [config.gyro_noise_density**2 * dt] * 3 + [config.bias_random_walk**2 * dt] * 3
    )
    P = F @ state.P @ F.T + Q
    P = 0.5 * (P + P.T)
    return EkfState(q=q, bias=state.bias, P=P)


def gravity_model(q, gravity_magnitude: float = 9.81) -> np.ndarray:
    """Predicted accelerometer reading at rest, ``R(q)ᵀ (0, 0, g)``."""
    return quat_to_rotmat(q).T @ np.array([0.0, 0.0, gravity_magnitude])


def measurement_jacobian(q, gravity_magnitude: float = 9.81) -> np.ndarray:
    """
    3x6 Jacobian of :func:`gravity_model` with respect to the error state.

    Perturbing ``q ⊗ exp(δθ)`` rotates the prediction by ``-δθ``, so the
    attitude block is ``skew(h(q))``; the bias block is zero.
    """
    H = np.zeros((3, 6))
    H[:, :3] = skew(gravity_model(q, gravity_magnitude))
    return H


def ekf_update(state: EkfState, accel, config: EkfConfig = EkfConfig()) -> tuple[EkfState, bool]:
    """
    Correct attitude and bias with one accelerometer sample.

    Returns
    -------
    state : EkfState
        Updated state, or the input state unchanged when gated.
    gated : bool
        True when the sample failed the gravity-magnitude gate.
    """
    accel = np.asarray(accel, dtype=float)
    if not np.all(np.isfinite(accel)):
        raise ValueError("accel contains non-finite values")
    g = config.gravity_magnitude
    if abs(np.linalg.norm(accel) - g) > config.accel_gate * g:
        return state, True

    h = gravity_model(state.q, g)
    H = measurement_jacobian(state.q, g)
    R = config.accel_noise**2 * np.eye(3)
    S = H @ state.P @ H.T + R
    K = np.linalg.solve(S, H @ state.P).T
    dx = K @ (accel - h)

    # Joseph form keeps P symmetric positive semidefinite
    A = np.eye(6) - K @ H
    P = A @ state.P @ A.T + K @ R @ K.T

    dtheta = dx[:3]
    q = quat_multiply(state.q, quat_from_rotvec(dtheta))
    q = q / np.linalg.norm(q)
    G = np.eye(6)
    G[:3, :3] -= skew(0.5 * dtheta)
    P = G @ P @ G.T
    P = 0.5 * (P + P.T)
    return EkfState(q=q, bias=state.bias + dx[3:], P=P), False


def _stream_arrays(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray, int | None]:
    if hasattr(samples, "timestamps") and hasattr(samples, "accel"):
        return (
            np.asarray(samples.timestamps, dtype=float),
            np.asarray(samples.accel, dtype=float),
            np.asarray(samples.gyro, dtype=float),
            getattr(samples, "sensor_id", None),
        )
    samples = list(samples)
    if not samples:
        raise EkfInitError("empty sample stream")
    ids = {s.sensor_id for s in samples}
    if len(ids) > 1:
        raise ValueError(f"stream mixes sensors {sorted(ids)}")
    return (
        np.array([s.timestamp_s for s in samples]),
        np.array([s.accel for s in samples]),
        np.array([s.gyro for s in samples]),
        samples[0].sensor_id,
    )


def ekf_run(
    samples: Iterable[ImuSample],
    config: EkfConfig = EkfConfig(),
    sample_rate_hz: float = 32.0,
    init_window: int = 8,
    observer: Callable[[EkfState, str, int], None] | None = None,
) -> EkfTrack:
    """
    Filter one sensor stream.

    The first ``init_window`` samples level the filter. Every later sample
    gets a predict step (using the mean of the previous and current gyro
    readings) and an accelerometer update.

    Parameters
    ----------
    samples : sequence of ImuSample, or an object with ``timestamps``,
        ``accel`` and ``gyro`` arrays (e.g. :class:`shoegait.session.SensorStream`).
    observer : callable, optional
        Called as ``observer(state, stage, index)`` after the initial
        levelling (stage ``"init"``) and after every ``"predict"`` and
        ``"update"``.

    Raises
    ------
    TimestampGapError
        If two consecutive samples are more than three nominal periods apart.
    EkfInitError
        If the initialization window is not quasi-static.
    """
    t, accel, gyro, sensor_id = _stream_arrays(samples)
    n = len(t)
    if n < init_window:
        raise EkfInitError(f"stream has {n} samples, fewer than the {init_window}-sample init window")
    dts = np.diff(t)
    if np.any(dts <= 0):
        bad = int(np.argmax(dts <= 0)) + 1
        raise ValueError(f"timestamps not strictly increasing at sample {bad}")
    max_gap = 3.0 / sample_rate_hz
    over = np.flatnonzero(dts > max_gap * (1 + 1e-9))
    if len(over):
        raise TimestampGapError(int(over[0]) + 1, float(dts[over[0]]))

    state = ekf_init(config, accel[:init_window])
    if observer is not None:
        observer(state, "init", init_window - 1)
    m = n - init_window
    quats = np.empty((m, 4))
    biases = np.empty((m, 3))
    gated = np.zeros(m, dtype=bool)
    cov_diag = np.empty((m, 6))
    for k in range(init_window, n):
        state = ekf_predict(state, 0.5 * (gyro[k - 1] + gyro[k]), dts[k - 1], config)
        if observer is not None:
            observer(state, "predict", k)
        state, was_gated = ekf_update(state, accel[k], config)
        if observer is not None:
            observer(state, "update", k)
        i = k - init_window
        quats[i] = state.q
        biases[i] = state.bias
        gated[i] = was_gated
        cov_diag[i] = np.diag(state.P)
    return EkfTrack(
        timestamps=t[init_window:].copy(),
        quats=quats,
        biases=biases,
        gated=gated,
        cov_diag=cov_diag,
        sensor_id=sensor_id,
        init_window=init_window,
        final_state=state,
    )


def integrate_gyro(q0, gyro, timestamps) -> np.ndarray:
    """
    Open-loop strapdown integration of a gyro stream, no correction.

    Used to demonstrate drift. Integrates the mean of consecutive readings
    with the exact exponential step. Returns one quaternion per sample.
    """
    gyro = np.asarray(gyro, dtype=float)
    dts = np.diff(np.asarray(timestamps, dtype=float))
    out = np.empty((len(gyro), 4))
    q = np.asarray(q0, dtype=float)
    out[0] = q
    for k, dt in enumerate(dts, start=1):
        q = quat_multiply(q, quat_from_rotvec(0.5 * (gyro[k - 1] + gyro[k]) * dt))
        q = q / np.linalg.norm(q)
        out[k] = q
    return out
