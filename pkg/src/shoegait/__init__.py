"""
Gait analysis from body-worn IMUs, aimed at comparing shoe configurations.

The pipeline runs a quaternion EKF per sensor, turns sensor pairs into
joint angles, splits walking into gait cycles at acceleration peaks and
reports step-cycle time, acceleration statistics and per-cycle joint
ranges. A harmonic gait simulator provides ground truth.
"""
from .ekf import (
    EkfConfig,
    EkfInitError,
    EkfState,
    EkfTrack,
    TimestampGapError,
    ekf_init,
    ekf_predict,
    ekf_run,
    ekf_update,
    integrate_gyro,
    measurement_jacobian,
)
from .kinematics import (
    CalibrationError,
    JointAngleSeries,
    MountingCalibration,
    SensorLayout,
    StreamMisalignmentError,
    joint_angles,
    static_calibrate,
)
from .metrics import (
    BoxStats,
    GaitCycle,
    InsufficientPeaksError,
    PeakParams,
    SessionMetrics,
    SpanOutOfBoundsError,
    accel_magnitude,
    box_stats,
    detect_steps,
    segment_cycles,
    session_metrics,
    step_cycle_times,
)
from .pipeline import SessionResult, analyze_session, analyze_streams
from .report import ReportBundle, build_bundle, plot_bundle, write_bundle
from .rotations import (
    EulerAngles,
    ImuSample,
    quat_multiply,
    quat_to_euler,
    quat_to_rotmat,
    relative_rotation,
    rotmat_to_euler,
)
from .session import (
    STUDY_SHOES,
    DuplicateRecordError,
    MalformedLineError,
    MissingTriggerError,
    NoCommonRangeError,
    NonMonotoneTickError,
    SessionFormatError,
    SessionMeta,
    ShoeConfig,
    UnitRangeError,
    derive_walking_height,
    load_session,
    parse_module_file,
    shoe_clusters,
    synchronize,
)
from .synth import GaitProfile, NoiseProfile, gen_trajectory, simulate, synth_imu

__version__ = "0.1.0"
