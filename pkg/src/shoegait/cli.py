"""
Command-line front end.

::

    shoegait simulate --out DIR [profile and noise flags]
    shoegait analyze SESSION [SESSION ...] --out DIR [--formats ...] [--jobs N]
    shoegait plot BUNDLE_DIR --out DIR
    shoegait calibrate SESSION [--out DIR]

Every subcommand accepts ``--config FILE`` (flat ``key = value`` file),
repeatable ``--set key=value`` overrides and ``--print-config``, which
prints the effective configuration in the same format and exits.
Precedence: built-in defaults, then the config file, then ``--set``, then
dedicated flags.

Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

from .ekf import EkfConfig, EkfInitError, TimestampGapError
from .kinematics import CalibrationError, SensorLayout
from .metrics import InsufficientPeaksError, PeakParams, SpanOutOfBoundsError
from .pipeline import analyze_session
from .report import FORMATS, build_bundle, plot_bundle, write_bundle
from .session import (
    STUDY_SHOES,
    NoCommonRangeError,
    SessionFormatError,
    ShoeConfig,
    load_session,
    read_kv,
    synchronize,
    write_calibration,
)
from .synth import GaitProfile, NoiseProfile, default_meta, random_mounting, simulate, write_session

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

DATA_ERRORS = (
    SessionFormatError,
    NoCommonRangeError,
    EkfInitError,
    TimestampGapError,
    CalibrationError,
    InsufficientPeaksError,
    SpanOutOfBoundsError,
    ValueError,
    OSError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# configuration


def default_config() -> dict[str, object]:
    cfg: dict[str, object] = {}
    for prefix, obj in (("ekf", EkfConfig()), ("peaks", PeakParams()), ("sim", GaitProfile())):
        for f in fields(obj):
            cfg[f"{prefix}.{f.name}"] = getattr(obj, f.name)
    noise = NoiseProfile()
    cfg.update(
        {
            "sim.sample_rate_hz": 32.0,
            "noise.accel_noise_std": noise.accel_noise_std,
            "noise.gyro_noise_std": noise.gyro_noise_std,
            "noise.gyro_bias": noise.gyro_bias,
            "noise.seed": noise.seed,
            "noise.mount_tilt_deg": 0.0,
            "session.candidate_id": "sim",
            "session.shoe": "H1",
            "analyze.calibration_s": 1.0,
            "analyze.jobs": 1,
            "output.formats": ",".join(FORMATS),
        }
    )
    return dict(sorted(cfg.items()))


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(format_value(v) for v in value)
    return str(value)


def coerce(key: str, text: str, default):
    try:
        if isinstance(default, bool):
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            values = tuple(float(v) for v in text.replace(",", " ").split())
            if len(values) != len(default):
                raise ValueError(text)
            return values
        return text.strip()
    except ValueError:
        raise UsageError(f"config key {key}: invalid value {text!r}") from None


def load_config(path=None, overrides=()) -> dict[str, object]:
    cfg = default_config()
    items = {}
    if path is not None:
        try:
            items.update(read_kv(path))
        except (OSError, SessionFormatError) as exc:
            raise UsageError(f"--config: {exc}") from None
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        items[key.strip()] = value
    for key, text in items.items():
        if key not in cfg:
            raise UsageError(f"unknown config key {key!r}")
        cfg[key] = coerce(key, text, cfg[key])
    return cfg


def print_config(cfg: dict[str, object], stream=None) -> None:
    stream = stream or sys.stdout
    for key, value in cfg.items():
        stream.write(f"{key} = {format_value(value)}\n")


def _section(cfg, prefix: str) -> dict[str, object]:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in cfg.items() if k.startswith(prefix + ".")}


def _build(kind, prefix: str, values: dict):
    # bad parameter values are the caller's mistake, not bad data
    try:
        return kind(**values)
    except ValueError as exc:
        raise UsageError(f"{prefix}: {exc}") from None


def ekf_config(cfg) -> EkfConfig:
    return _build(EkfConfig, "ekf", _section(cfg, "ekf"))


def peak_params(cfg) -> PeakParams:
    return _build(PeakParams, "peaks", _section(cfg, "peaks"))


def gait_profile(cfg) -> GaitProfile:
    sim = _section(cfg, "sim")
    sim.pop("sample_rate_hz")
    return _build(GaitProfile, "sim", sim)


# ---------------------------------------------------------------------------
# subcommands

# simulate flag dest -> config key
SIM_FLAGS = {
    "strides": "sim.n_strides",
    "period": "sim.stride_period_s",
    "hip_amp": "sim.hip_amplitude_deg",
    "knee_amp": "sim.knee_amplitude_deg",
    "ankle_amp": "sim.ankle_amplitude_deg",
    "standing": "sim.standing_s",
    "fs": "sim.sample_rate_hz",
    "accel_noise": "noise.accel_noise_std",
    "gyro_noise": "noise.gyro_noise_std",
    "seed": "noise.seed",
    "mount_tilt": "noise.mount_tilt_deg",
    "candidate": "session.candidate_id",
    "shoe": "session.shoe",
}


def _apply_flags(cfg, args, mapping):
    for dest, key in mapping.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg[key] = value


def _nonneg(flag: str):
    def parse(text: str):
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} expects a number, got {text!r}") from None
        if not value >= 0:
            raise argparse.ArgumentTypeError(f"{flag} must be >= 0, got {text}")
        return value

    return parse


def _positive(flag: str):
    def parse(text: str):
        value = _nonneg(flag)(text)
        if value == 0:
            raise argparse.ArgumentTypeError(f"{flag} must be > 0, got {text}")
        return value

    return parse


def _positive_int(flag: str):
    def parse(text: str):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} expects an integer, got {text!r}") from None
        if value < 1:
            raise argparse.ArgumentTypeError(f"{flag} must be >= 1, got {text}")
        return value

    return parse


def _shoe(label: str, platform: float | None, heel: float | None) -> ShoeConfig:
    if platform is not None or heel is not None:
        if platform is None or heel is None:
            raise UsageError("--platform and --heel must be given together")
        return ShoeConfig(label, platform, heel)
    if label not in STUDY_SHOES:
        raise UsageError(f"--shoe {label!r} is not one of {sorted(STUDY_SHOES)}; give --platform and --heel")
    return STUDY_SHOES[label]


def cmd_simulate(args, cfg) -> int:
    _apply_flags(cfg, args, SIM_FLAGS)
    if args.hip_amp is not None:
        # keep the default hip shape, which leaves rest smoothly
        cfg["sim.hip_harmonic2_deg"] = args.hip_amp / 2
    if args.quasi_static:
        cfg["sim.quasi_static"] = True
    profile = gait_profile(cfg)
    fs = float(cfg["sim.sample_rate_hz"])
    layout = SensorLayout()
    tilt = float(cfg["noise.mount_tilt_deg"])
    seed = int(cfg["noise.seed"])
    mounting = random_mounting(layout.sensor_ids(), seed=seed, max_tilt_deg=tilt) if tilt > 0 else {}
    noise = _build(
        NoiseProfile,
        "noise",
        dict(
            accel_noise_std=float(cfg["noise.accel_noise_std"]),
            gyro_noise_std=float(cfg["noise.gyro_noise_std"]),
            gyro_bias=tuple(cfg["noise.gyro_bias"]),
            mounting=mounting,
            seed=seed,
        ),
    )
    if not fs > 0:
        raise UsageError(f"sim.sample_rate_hz must be positive, got {fs:g}")
    shoe = _shoe(str(cfg["session.shoe"]), args.platform, args.heel)
    meta = default_meta(str(cfg["session.candidate_id"]), shoe, fs)
    out = write_session(simulate(profile, noise, fs, layout), meta, args.out)
    print(f"wrote session {out} ({profile.n_strides} strides of {profile.stride_period_s:g} s)")
    return EXIT_OK


def _analyze_one(path: str, ekf: EkfConfig, peaks: PeakParams, calibration_s: float):
    try:
        return path, analyze_session(path, ekf, peaks, calibration_s), None
    except DATA_ERRORS as exc:
        return path, None, f"{type(exc).__name__}: {exc}"


def cmd_analyze(args, cfg) -> int:
    if args.formats is not None:
        cfg["output.formats"] = args.formats
    if args.jobs is not None:
        cfg["analyze.jobs"] = args.jobs
    if not args.sessions:
        raise UsageError("analyze: at least one session directory is required")
    formats = [f.strip() for f in str(cfg["output.formats"]).split(",") if f.strip()]
    bad = [f for f in formats if f not in FORMATS]
    if not formats or bad:
        raise UsageError(f"--formats: expected a comma list from {', '.join(FORMATS)}")
    ekf, peaks = ekf_config(cfg), peak_params(cfg)
    calibration_s = float(cfg["analyze.calibration_s"])
    if not calibration_s > 0:
        raise UsageError(f"analyze.calibration_s must be positive, got {calibration_s:g}")
    jobs = int(cfg["analyze.jobs"])
    work = [(str(p), ekf, peaks, calibration_s) for p in args.sessions]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_analyze_one, *zip(*work)))
    else:
        outcomes = [_analyze_one(*w) for w in work]
    results = []
    for path, result, error in outcomes:
        if error is None:
            results.append(result)
        else:
            print(f"skipping {path}: {error}", file=sys.stderr)
    if not results:
        print("analyze: every session failed", file=sys.stderr)
        return EXIT_DATA
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        written = write_bundle(build_bundle(results), args.out, formats)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"analyzed {len(results)} of {len(work)} sessions, wrote {len(written)} files to {args.out}")
    return EXIT_OK


def cmd_plot(args, cfg) -> int:
    bundle = Path(args.bundle)
    if not (bundle / "boxstats.json").is_file():
        print(f"plot: {bundle} has no boxstats.json", file=sys.stderr)
        return EXIT_DATA
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        written = plot_bundle(bundle, args.out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"wrote {len(written)} plots to {args.out}")
    return EXIT_OK


def cmd_calibrate(args, cfg) -> int:
    from .kinematics import static_calibrate

    session = load_session(args.session)
    if session.metadata_only:
        print(f"calibrate: {args.session} has no module files", file=sys.stderr)
        return EXIT_DATA
    seconds = args.standing if args.standing is not None else float(cfg["analyze.calibration_s"])
    streams = synchronize(session.modules, session.meta)
    layout = session.meta.layout
    t0 = min(float(streams[sid].timestamps[0]) for sid in layout.sensor_ids())
    standing = {sid: streams[sid].window(t0, t0 + seconds) for sid in layout.sensor_ids()}
    calib = static_calibrate(standing, layout)
    out = Path(args.out) if args.out else Path(args.session)
    out.mkdir(parents=True, exist_ok=True)
    name = session.meta.calibration_file or "calibration.kv"
    path = out / Path(name).name
    write_calibration(path, calib)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="flat key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")

    parser = _Parser(prog="shoegait", description="IMU gait analysis for shoe comparisons")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic session")
    p.add_argument("--out", help="session directory to create (required)")
    p.add_argument("--strides", type=_positive_int("--strides"))
    p.add_argument("--period", type=_positive("--period"), help="stride period, s")
    p.add_argument("--hip-amp", type=_nonneg("--hip-amp"), help="hip first-harmonic range, deg; second harmonic set to half")
    p.add_argument("--knee-amp", type=_nonneg("--knee-amp"), help="knee range, deg")
    p.add_argument("--ankle-amp", type=_nonneg("--ankle-amp"), help="ankle range, deg")
    p.add_argument("--standing", type=_nonneg("--standing"), help="quiet standing before walking, s")
    p.add_argument("--fs", type=_positive("--fs"), help="sample rate, Hz")
    p.add_argument("--accel-noise", type=_nonneg("--accel-noise"), help="m/s^2")
    p.add_argument("--gyro-noise", type=_nonneg("--gyro-noise"), help="rad/s")
    p.add_argument("--seed", type=int)
    p.add_argument("--mount-tilt", type=_nonneg("--mount-tilt"), help="max random mounting tilt, deg")
    p.add_argument("--quasi-static", action="store_true", help="drop linear acceleration")
    p.add_argument("--candidate")
    p.add_argument("--shoe", help="shoe label, H1..H7 unless --platform/--heel given")
    p.add_argument("--platform", type=_nonneg("--platform"), help="platform height, in")
    p.add_argument("--heel", type=_nonneg("--heel"), help="heel height, in")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="analyze sessions and write a report bundle")
    p.add_argument("sessions", nargs="*", help="session directories")
    p.add_argument("--out", help="output directory (required)")
    p.add_argument("--formats", help=f"comma list from {','.join(FORMATS)}")
    p.add_argument("--jobs", type=_positive_int("--jobs"), help="worker processes")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", parents=[common], help="render SVG plots from a report bundle")
    p.add_argument("bundle", help="directory holding boxstats.json (and cycles.csv)")
    p.add_argument("--out", help="output directory (required)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("calibrate", parents=[common], help="compute the mounting calibration of a session")
    p.add_argument("session")
    p.add_argument("--out", help="directory for calibration.kv (default: the session directory)")
    p.add_argument("--standing", type=_nonneg("--standing"), help="standing window, s")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config, args.set)
        if args.print_config:
            print_config(cfg)
            return EXIT_OK
        if args.command != "calibrate" and not args.out:
            raise UsageError(f"{args.command}: --out is required")
        return args.func(args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
