"""
Gait-cycle segmentation and per-session gait metrics.

A gait cycle runs from one peak of the ankle-near sensor's acceleration
magnitude to the next. Each cycle yields a duration and, per joint, the
range (max - min) of the flexion angle. Ranges pooled over cycles are
summarized with Tukey box-plot statistics.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import peak_prominences


class InsufficientPeaksError(ValueError):
    pass


class SpanOutOfBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class PeakParams:
    min_separation_s: float = 0.7
    min_prominence: float = 1.0  # m/s²
    smoothing_window: int = 5  # samples, moving average

    def __post_init__(self):
        if not self.min_separation_s > 0:
            raise ValueError("min_separation_s must be positive")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ValueError("smoothing_window must be a positive odd number")
        if self.min_prominence < 0:
            raise ValueError("min_prominence must be >= 0")


@dataclass
class GaitCycle:
    start_index: int
    end_index: int
    duration_s: float
    ranges: dict[str, float] = field(default_factory=dict)  # "<side>_<joint>" -> degrees

    def __post_init__(self):
        if self.end_index <= self.start_index:
            raise ValueError("end_index must exceed start_index")
        if not self.duration_s > 0:
            raise ValueError("duration must be positive")


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]
    n: int

    def to_dict(self) -> dict:
        return {
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high,
            "outliers": list(self.outliers),
            "n": self.n,
        }


@dataclass
class SessionMetrics:
    mean_step_cycle_time_s: float
    mean_accel_magnitude_mps2: float
    accel_variance_mps2sq: float
    step_cycle_times_s: list[float] = field(default_factory=list)
    joint_ranges: dict[str, list[float]] = field(default_factory=dict)
    joint_box_stats: dict[str, BoxStats] = field(default_factory=dict)
    # gravity-removed acceleration magnitude, when an attitude estimate exists
    mean_linear_accel_mps2: float | None = None
    linear_accel_variance_mps2sq: float | None = None

    @property
    def n_cycles(self) -> int:
        return len(self.step_cycle_times_s)


def accel_magnitude(sample) -> float:
    """Euclidean norm of an accelerometer reading (an ImuSample or a 3-vector)."""
    accel = getattr(sample, "accel", sample)
    x, y, z = np.asarray(accel, dtype=float)
    return float(np.sqrt(x * x + y * y + z * z))


def accel_magnitudes(accel) -> np.ndarray:
    """Row-wise Euclidean norm of an (N, 3) accelerometer array."""
    return np.linalg.norm(np.asarray(accel, dtype=float), axis=1)


def _local_maxima(x: np.ndarray) -> np.ndarray:
    """Strict local maxima, plateaus reported at their first index; edges excluded."""
    n = len(x)
    peaks = []
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            j = i
            while j < n - 1 and x[j + 1] == x[i]:
                j += 1
            if j < n - 1 and x[j + 1] < x[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return np.array(peaks, dtype=np.int64)


def detect_steps(signal, fs: float, params: PeakParams = PeakParams()) -> np.ndarray:
    """
    Stride peaks of a periodic signal.

    The signal is smoothed with a centred moving average, then local maxima
    with at least ``min_prominence`` are kept, highest first, discarding any
    peak closer than ``min_separation_s`` to one already kept.

    Returns
    -------
    ndarray of int
        Ascending sample indices; may be empty.
    """
    x = np.asarray(signal, dtype=float)
    need = 2 * fs * params.min_separation_s
    if len(x) < need:
        raise ValueError(f"signal has {len(x)} samples, need at least {need:g}")
    smooth = uniform_filter1d(x, params.smoothing_window, mode="nearest")
    peaks = _local_maxima(smooth)
    if len(peaks) == 0:
        return peaks
    prominence = peak_prominences(smooth, peaks)[0]
    peaks = peaks[prominence >= params.min_prominence]

    distance = params.min_separation_s * fs
    # highest first; equal heights resolved toward the earlier index
    order = sorted(range(len(peaks)), key=lambda k: (-smooth[peaks[k]], peaks[k]))
    kept: list[int] = []
    for k in order:
        p = peaks[k]
        if all(abs(p - q) >= distance for q in kept):
            kept.append(int(p))
    return np.array(sorted(kept), dtype=np.int64)


def step_cycle_times(peaks, fs: float) -> tuple[np.ndarray, float]:
    """Peak-to-peak durations in seconds and their mean."""
    peaks = np.asarray(peaks)
    if len(peaks) < 2:
        raise InsufficientPeaksError(f"need at least 2 peaks, got {len(peaks)}")
    times = np.diff(peaks) / fs
    return times, float(times.mean())


def segment_cycles(peaks, angle_series: Sequence) -> list[GaitCycle]:
    """
    One cycle per pair of consecutive peaks.

    ``peaks`` index the common sample grid of ``angle_series``. Each cycle
    spans ``[peak_k, peak_k+1]`` inclusive and records, for every series,
    the range of its primary angle over that span.
    """
    peaks = np.asarray(peaks, dtype=np.int64)
    if len(peaks) < 2:
        raise InsufficientPeaksError(f"need at least 2 peaks, got {len(peaks)}")
    if np.any(np.diff(peaks) <= 0):
        raise ValueError("peaks must be strictly ascending")
    if not angle_series:
        raise ValueError("no angle series given")
    t = np.asarray(angle_series[0].timestamps)
    n = min(len(s) for s in angle_series)
    if peaks[0] < 0 or peaks[-1] >= n:
        raise SpanOutOfBoundsError(f"peak span {peaks[0]}..{peaks[-1]} outside series of length {n}")
    cycles = []
    for a, b in zip(peaks[:-1], peaks[1:]):
        ranges = {}
        for s in angle_series:
            segment = s.primary_angle[a : b + 1]
            ranges[f"{s.side}_{s.joint}"] = float(segment.max() - segment.min())
        cycles.append(GaitCycle(int(a), int(b), float(t[b] - t[a]), ranges))
    return cycles


def box_stats(values) -> BoxStats:
    """
    Tukey box-plot summary.

    Quartiles use linear interpolation between order statistics. Whiskers
    reach the most extreme data within 1.5 IQR of the quartiles; anything
    further out is an outlier.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("box_stats needs at least one value")
    q1, median, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = tuple(float(v) for v in x[(x < lo_fence) | (x > hi_fence)])
    return BoxStats(
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=outliers,
        n=int(x.size),
    )


def session_metrics(
    cycles: Sequence[GaitCycle],
    accel_trace,
    linear_trace=None,
) -> SessionMetrics:
    """
    Summarize one session over its walking span (first to last peak).

    Parameters
    ----------
    cycles : list of GaitCycle
    accel_trace : array
        Per-sample acceleration magnitude (gravity included), m/s².
    linear_trace : array, optional
        Per-sample gravity-removed acceleration magnitude, m/s².
    """
    if len(cycles) < 1:
        raise InsufficientPeaksError("no complete gait cycle")
    start, stop = cycles[0].start_index, cycles[-1].end_index
    span = np.asarray(accel_trace, dtype=float)[start : stop + 1]
    durations = [c.duration_s for c in cycles]
    ranges: dict[str, list[float]] = {}
    for c in cycles:
        for key, value in c.ranges.items():
            ranges.setdefault(key, []).append(value)
    metrics = SessionMetrics(
        mean_step_cycle_time_s=float(np.mean(durations)),
        mean_accel_magnitude_mps2=float(span.mean()),
        accel_variance_mps2sq=float(span.var()),
        step_cycle_times_s=durations,
        joint_ranges=ranges,
        joint_box_stats={key: box_stats(v) for key, v in ranges.items()},
    )
    if linear_trace is not None:
        lin = np.asarray(linear_trace, dtype=float)[start : stop + 1]
        metrics.mean_linear_accel_mps2 = float(lin.mean())
        metrics.linear_accel_variance_mps2sq = float(lin.var())
    return metrics


def normalize_cycle(values, n_points: int = 101) -> np.ndarray:
    """Resample one cycle onto ``n_points`` evenly spaced points (0-100 % of the cycle)."""
    values = np.asarray(values, dtype=float)
    src = np.linspace(0.0, 1.0, len(values))
    return np.interp(np.linspace(0.0, 1.0, n_points), src, values)


def normalized_cycles(series, cycles: Sequence[GaitCycle], n_points: int = 101) -> np.ndarray:
    """Every cycle of ``series.primary_angle`` resampled to percent of cycle, shape (n_cycles, n_points)."""
    angle = series.primary_angle
    return np.array([normalize_cycle(angle[c.start_index : c.end_index + 1], n_points) for c in cycles])


def summarize_ranges(ranges: Mapping[str, Sequence[float]]) -> dict[str, BoxStats]:
    return {key: box_stats(values) for key, values in ranges.items()}
