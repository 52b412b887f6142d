"""
On-disk session format.

A session is a directory::

    session/
        meta.kv           flat key-value metadata (candidate, shoe, layout, rate)
        module_0.csv      one sample file per leg module
        module_1.csv
        calibration.kv    optional per-sensor alignment quaternions

Module files are UTF-8 text with the header line
``module_id,tick,sensor_id,ax,ay,az,gx,gy,gz`` (optionally followed by
``,event``) and one newline-terminated record per (tick, sensor). Units
are m/s² and rad/s. Ticks count trigger periods from the shared start
trigger, so every sensor of a module must report at tick 0.

Key-value files hold one ``key = value`` pair per line; blank lines and
lines starting with ``#`` are ignored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .kinematics import MountingCalibration, SensorLayout
from .rotations import ImuSample

MODULE_HEADER = ("module_id", "tick", "sensor_id", "ax", "ay", "az", "gx", "gy", "gz")
EVENT_COLUMN = "event"

# MPU-6050 full-scale ceilings
MAX_ACCEL = 160.0  # m/s², about 16 g
MAX_GYRO = 35.0  # rad/s, about 2000 deg/s

MAX_INTERPOLATED_GAP = 2  # ticks

METRIC_KEYS = ("step_cycle_time_s", "mean_accel_magnitude_mps2", "accel_variance_mps2sq")


class SessionFormatError(ValueError):
    """A located violation of the session format."""

    kind = "format"

    def __init__(self, message: str, path=None, line: int | None = None, column: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        self.column = column
        where = []
        if self.path is not None:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class MalformedLineError(SessionFormatError):
    kind = "malformed-line"


class DuplicateRecordError(SessionFormatError):
    kind = "duplicate-record"


class NonMonotoneTickError(SessionFormatError):
    kind = "non-monotone-tick"


class UnitRangeError(SessionFormatError):
    kind = "unit-range"


class MissingTriggerError(SessionFormatError):
    kind = "missing-trigger"


class NoCommonRangeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# shoes


@dataclass(frozen=True)
class ShoeConfig:
    """Shoe geometry in inches: platform (forefoot) x and heel y."""

    label: str
    platform_height_in: float
    heel_height_in: float

    def __post_init__(self):
        x, y = self.platform_height_in, self.heel_height_in
        if not (math.isfinite(x) and math.isfinite(y)) or not y >= x >= 0:
            raise ValueError(f"shoe {self.label}: need heel >= platform >= 0, got x={x}, y={y}")

    @property
    def walking_height_in(self) -> float:
        return derive_walking_height(self)


def derive_walking_height(shoe: ShoeConfig) -> float:
    """Heel-to-toe drop ``y - x`` in inches."""
    return shoe.heel_height_in - shoe.platform_height_in


STUDY_SHOES = {
    s.label: s
    for s in (
        ShoeConfig("H1", 0.5, 0.75),
        ShoeConfig("H2", 0.25, 2.0),
        ShoeConfig("H3", 0.5, 3.0),
        ShoeConfig("H4", 1.5, 5.5),
        ShoeConfig("H5", 2.0, 6.0),
        ShoeConfig("H6", 2.0, 6.5),
        ShoeConfig("H7", 3.0, 5.25),
    )
}


def shoe_clusters(
    shoes: Iterable[ShoeConfig],
    platform_tol_in: float = 0.25,
    heel_tol_in: float = 1.0,
    walking_tol_in: float = 0.25,
) -> dict[str, tuple[str, ...]]:
    """
    Group shoes into the three comparison sets.

    ``walking_height``
        Shoes within ``platform_tol_in`` of the lowest platform; among them
        only the heel (and hence the walking height) varies.
    ``platform_height``
        Shoes within ``heel_tol_in`` of the highest heel; among them mainly
        the platform varies.
    ``overall_height``
        The pair whose walking heights agree within ``walking_tol_in`` and
        whose platforms differ the most, i.e. same drop at different overall
        elevation.
    """
    shoes = sorted(shoes, key=lambda s: s.label)
    min_platform = min(s.platform_height_in for s in shoes)
    max_heel = max(s.heel_height_in for s in shoes)
    low = tuple(s.label for s in shoes if s.platform_height_in <= min_platform + platform_tol_in)
    high = tuple(s.label for s in shoes if s.heel_height_in >= max_heel - heel_tol_in)
    best = None
    for i, a in enumerate(shoes):
        for b in shoes[i + 1 :]:
            if abs(a.walking_height_in - b.walking_height_in) > walking_tol_in:
                continue
            spread = abs(a.platform_height_in - b.platform_height_in)
            if best is None or spread > best[0]:
                best = (spread, (a.label, b.label))
    return {
        "walking_height": low,
        "platform_height": high,
        "overall_height": best[1] if best else (),
    }


# ---------------------------------------------------------------------------
# key-value files


def read_kv(path) -> dict[str, str]:
    path = Path(path)
    items = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedLineError("expected 'key = value'", path, lineno, 1)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise MalformedLineError("empty key", path, lineno, 1)
        if key in items:
            raise DuplicateRecordError(f"duplicate key {key!r}", path, lineno, 1)
        items[key] = value
    return items


def write_kv(path, items: Mapping[str, object], comment: str | None = None) -> None:
    lines = []
    if comment:
        lines.append(f"# {comment}")
    for key, value in items.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# metadata


@dataclass
class SessionMeta:
    candidate_id: str
    shoe: ShoeConfig
    sample_rate_hz: float = 32.0
    layout: SensorLayout = field(default_factory=SensorLayout)
    calibration_file: str | None = None
    notes: str = ""
    # precomputed metrics for metadata-only sessions, keyed by METRIC_KEYS
    reported: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    def to_dict(self) -> dict[str, object]:
        items: dict[str, object] = {
            "candidate_id": self.candidate_id,
            "shoe.label": self.shoe.label,
            "shoe.platform_height_in": float(self.shoe.platform_height_in),
            "shoe.heel_height_in": float(self.shoe.heel_height_in),
            "sample_rate_hz": float(self.sample_rate_hz),
        }
        items.update(self.layout.to_dict())
        if self.calibration_file:
            items["calibration_file"] = self.calibration_file
        if self.notes:
            items["notes"] = self.notes.replace("\n", " ")
        for key in METRIC_KEYS:
            if key in self.reported:
                # stored as text so fixture digits survive untouched
                items[f"metrics.{key}"] = str(self.reported[key])
        return items

    @classmethod
    def from_dict(cls, items: Mapping[str, str], path=None) -> "SessionMeta":
        try:
            shoe = ShoeConfig(
                items["shoe.label"],
                float(items["shoe.platform_height_in"]),
                float(items["shoe.heel_height_in"]),
            )
            layout = SensorLayout.from_dict(items) if "layout.left.pelvis" in items else SensorLayout()
            reported = {k: float(items[f"metrics.{k}"]) for k in METRIC_KEYS if f"metrics.{k}" in items}
            return cls(
                candidate_id=items["candidate_id"],
                shoe=shoe,
                sample_rate_hz=float(items.get("sample_rate_hz", 32.0)),
                layout=layout,
                calibration_file=items.get("calibration_file") or None,
                notes=items.get("notes", ""),
                reported=reported,
            )
        except KeyError as exc:
            raise SessionFormatError(f"missing metadata key {exc.args[0]!r}", path) from None
        except ValueError as exc:
            raise SessionFormatError(str(exc), path) from None


def read_meta(path) -> SessionMeta:
    return SessionMeta.from_dict(read_kv(path), path)


def write_meta(path, meta: SessionMeta) -> None:
    write_kv(path, meta.to_dict(), comment="shoegait session metadata")


def read_calibration(path) -> MountingCalibration:
    items = read_kv(path)
    alignments = {}
    for key, value in items.items():
        if not key.startswith("sensor."):
            continue
        q = np.array([float(v) for v in value.split()])
        if q.shape != (4,):
            raise SessionFormatError(f"{key}: expected 4 quaternion components", path)
        alignments[int(key.split(".", 1)[1])] = q / np.linalg.norm(q)
    return MountingCalibration(alignments)


def write_calibration(path, calib: MountingCalibration) -> None:
    items = {
        f"sensor.{sid}": " ".join(repr(float(c)) for c in q) for sid, q in sorted(calib.alignments.items())
    }
    write_kv(path, items, comment="sensor-to-segment alignment quaternions (w x y z)")


# ---------------------------------------------------------------------------
# module files


@dataclass
class ModuleFile:
    """All records of one leg module, in file order."""

    module_id: int
    ticks: np.ndarray
    sensor_ids: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    events: np.ndarray | None = None

    def __len__(self):
        return len(self.ticks)

    def records(self):
        for k in range(len(self.ticks)):
            yield (int(self.ticks[k]), int(self.sensor_ids[k]), *self.accel[k], *self.gyro[k])

    def sensors(self) -> list[int]:
        return sorted(set(int(s) for s in self.sensor_ids))


def _parse_int(text: str, path, lineno: int, col: int, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise MalformedLineError(f"{name} {text!r} is not an integer", path, lineno, col) from None


def _parse_float(text: str, path, lineno: int, col: int, name: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedLineError(f"{name} {text!r} is not a number", path, lineno, col) from None
    if not math.isfinite(value):
        raise MalformedLineError(f"{name} is not finite", path, lineno, col)
    return value


def parse_module_file(path) -> ModuleFile:
    """
    Read and validate one module file.

    Raises
    ------
    MalformedLineError, DuplicateRecordError, NonMonotoneTickError,
    UnitRangeError, MissingTriggerError
        All subclasses of :class:`SessionFormatError`, carrying ``path``,
        ``line`` (1-based) and ``column`` (1-based field index).
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    else:
        raise MalformedLineError("file must end with a newline", path, len(lines), None)
    if not lines:
        raise MalformedLineError("missing header", path, 1, 1)

    header = tuple(lines[0].split(","))
    has_event = header == MODULE_HEADER + (EVENT_COLUMN,)
    if header != MODULE_HEADER and not has_event:
        raise MalformedLineError(f"bad header {lines[0]!r}", path, 1, 1)
    n_fields = len(header)

    module_id = None
    ticks, sids, values, events = [], [], [], []
    seen = set()
    last_tick = -1
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != n_fields:
            raise MalformedLineError(
                f"expected {n_fields} fields, got {len(fields)}", path, lineno, min(len(fields), n_fields)
            )
        mid = _parse_int(fields[0], path, lineno, 1, "module_id")
        if module_id is None:
            module_id = mid
        elif mid != module_id:
            raise MalformedLineError(f"module_id {mid} differs from {module_id}", path, lineno, 1)
        tick = _parse_int(fields[1], path, lineno, 2, "tick")
        if tick < 0:
            raise MalformedLineError("tick must be non-negative", path, lineno, 2)
        sid = _parse_int(fields[2], path, lineno, 3, "sensor_id")
        if not 0 <= sid <= 11:
            raise MalformedLineError(f"sensor_id {sid} outside 0..11", path, lineno, 3)
        row = [_parse_float(fields[c], path, lineno, c + 1, MODULE_HEADER[c]) for c in range(3, 9)]
        for c in range(3):
            if abs(row[c]) > MAX_ACCEL:
                raise UnitRangeError(
                    f"{MODULE_HEADER[c + 3]}={row[c]} exceeds ±{MAX_ACCEL} m/s²", path, lineno, c + 4
                )
            if abs(row[c + 3]) > MAX_GYRO:
                raise UnitRangeError(
                    f"{MODULE_HEADER[c + 6]}={row[c + 3]} exceeds ±{MAX_GYRO} rad/s", path, lineno, c + 7
                )
        if tick < last_tick:
            raise NonMonotoneTickError(f"tick {tick} after tick {last_tick}", path, lineno, 2)
        if (tick, sid) in seen:
            raise DuplicateRecordError(f"second record for tick {tick}, sensor {sid}", path, lineno, 2)
        seen.add((tick, sid))
        last_tick = tick
        if has_event:
            ev = fields[9].strip()
            events.append(_parse_int(ev, path, lineno, 10, "event") if ev else 0)
        ticks.append(tick)
        sids.append(sid)
        values.append(row)

    if not ticks:
        raise MalformedLineError("no records", path, 1, None)
    at_trigger = {s for t, s in seen if t == 0}
    missing = sorted(set(sids) - at_trigger)
    if missing:
        first = sids.index(missing[0])
        raise MissingTriggerError(
            f"sensor {missing[0]} has no record at trigger tick 0", path, first + 2, 3
        )
    values = np.array(values, dtype=float)
    return ModuleFile(
        module_id=module_id,
        ticks=np.array(ticks, dtype=np.int64),
        sensor_ids=np.array(sids, dtype=np.int64),
        accel=values[:, :3],
        gyro=values[:, 3:],
        events=np.array(events, dtype=np.int64) if has_event else None,
    )


def write_module_file(path, module: ModuleFile) -> None:
    """Write ``module`` so that :func:`parse_module_file` reproduces it exactly."""
    header = MODULE_HEADER + ((EVENT_COLUMN,) if module.events is not None else ())
    out = [",".join(header)]
    for k in range(len(module.ticks)):
        fields = [str(module.module_id), str(int(module.ticks[k])), str(int(module.sensor_ids[k]))]
        fields += [repr(float(v)) for v in module.accel[k]]
        fields += [repr(float(v)) for v in module.gyro[k]]
        if module.events is not None:
            fields.append(str(int(module.events[k])))
        out.append(",".join(fields))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# streams


@dataclass
class SensorStream:
    """Time-ordered samples of one sensor as parallel arrays."""

    sensor_id: int
    timestamps: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    interpolated: np.ndarray | None = None

    def __post_init__(self):
        if self.interpolated is None:
            self.interpolated = np.zeros(len(self.timestamps), dtype=bool)

    def __len__(self):
        return len(self.timestamps)

    def samples(self) -> list[ImuSample]:
        return [
            ImuSample(float(t), self.sensor_id, a, g)
            for t, a, g in zip(self.timestamps, self.accel, self.gyro)
        ]

    def window(self, t_start: float, t_stop: float) -> "SensorStream":
        """Samples with ``t_start <= t < t_stop``."""
        keep = (self.timestamps >= t_start - 1e-9) & (self.timestamps < t_stop - 1e-9)
        return SensorStream(
            self.sensor_id,
            self.timestamps[keep],
            self.accel[keep],
            self.gyro[keep],
            self.interpolated[keep],
        )


def synchronize(modules: Iterable[ModuleFile], meta: SessionMeta) -> dict[int, SensorStream]:
    """
    Merge module files onto one time base.

    Ticks become ``tick / sample_rate_hz`` seconds. All streams are cut to
    the tick range every sensor covers. Runs of up to two missing ticks are
    filled by linear interpolation and flagged in ``interpolated``; longer
    gaps stay as gaps.

    Raises
    ------
    NoCommonRangeError
        If the sensors share no tick.
    """
    per_sensor: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for module in modules:
        for sid in module.sensors():
            rows = module.sensor_ids == sid
            if sid in per_sensor:
                raise ValueError(f"sensor {sid} appears in more than one module")
            per_sensor[sid] = (module.ticks[rows], module.accel[rows], module.gyro[rows])
    if not per_sensor:
        raise NoCommonRangeError("no sensor data")
    start = max(int(ticks.min()) for ticks, _, _ in per_sensor.values())
    stop = min(int(ticks.max()) for ticks, _, _ in per_sensor.values())
    if start > stop:
        raise NoCommonRangeError(f"sensors share no tick range (latest start {start}, earliest end {stop})")

    streams = {}
    for sid in sorted(per_sensor):
        ticks, accel, gyro = per_sensor[sid]
        keep = (ticks >= start) & (ticks <= stop)
        ticks, accel, gyro = ticks[keep], accel[keep], gyro[keep]
        order = np.argsort(ticks, kind="stable")
        ticks, accel, gyro = ticks[order], accel[order], gyro[order]

        fill_ticks = []
        for a, b in zip(ticks[:-1], ticks[1:]):
            if 1 < b - a <= MAX_INTERPOLATED_GAP + 1:
                fill_ticks.extend(range(a + 1, b))
        if fill_ticks:
            fill = np.array(fill_ticks)
            new_ticks = np.concatenate([ticks, fill])
            new_accel = np.vstack([accel, np.column_stack([np.interp(fill, ticks, accel[:, i]) for i in range(3)])])
            new_gyro = np.vstack([gyro, np.column_stack([np.interp(fill, ticks, gyro[:, i]) for i in range(3)])])
            flags = np.concatenate([np.zeros(len(ticks), bool), np.ones(len(fill), bool)])
            order = np.argsort(new_ticks, kind="stable")
            ticks, accel, gyro, flags = new_ticks[order], new_accel[order], new_gyro[order], flags[order]
        else:
            flags = np.zeros(len(ticks), bool)
        streams[sid] = SensorStream(sid, ticks / meta.sample_rate_hz, accel, gyro, flags)
    return streams


def modules_from_streams(
    streams: Mapping[int, SensorStream], layout: SensorLayout, sample_rate_hz: float
) -> list[ModuleFile]:
    """Pack per-sensor streams back into one module per leg (left = 0, right = 1)."""
    modules = []
    for module_id, side in enumerate(("left", "right")):
        sids = [layout.sensor_id(side, role) for role in getattr(layout, side)]
        sids = [s for s in sids if s in streams]
        if not sids:
            continue
        ticks, ids, acc, gyr = [], [], [], []
        for sid in sids:
            s = streams[sid]
            ticks.append(np.rint(s.timestamps * sample_rate_hz).astype(np.int64))
            ids.append(np.full(len(s), sid, dtype=np.int64))
            acc.append(s.accel)
            gyr.append(s.gyro)
        ticks = np.concatenate(ticks)
        ids = np.concatenate(ids)
        order = np.lexsort((ids, ticks))
        modules.append(
            ModuleFile(
                module_id=module_id,
                ticks=ticks[order],
                sensor_ids=ids[order],
                accel=np.concatenate(acc)[order],
                gyro=np.concatenate(gyr)[order],
            )
        )
    return modules


@dataclass
class Session:
    path: Path
    meta: SessionMeta
    modules: list[ModuleFile]
    calibration: MountingCalibration | None = None

    @property
    def metadata_only(self) -> bool:
        return not self.modules


def load_session(path) -> Session:
    """Read ``meta.kv``, every ``module_<n>.csv`` and the optional calibration."""
    path = Path(path)
    meta_path = path / "meta.kv"
    if not meta_path.is_file():
        raise SessionFormatError("session has no meta.kv", path)
    meta = read_meta(meta_path)
    module_paths = sorted(path.glob("module_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    modules = [parse_module_file(p) for p in module_paths]
    calibration = None
    cal_path = path / (meta.calibration_file or "calibration.kv")
    if cal_path.is_file():
        calibration = read_calibration(cal_path)
    return Session(path, meta, modules, calibration)


def write_session_files(
    out_dir, meta: SessionMeta, modules: Iterable[ModuleFile], calibration: MountingCalibration | None = None
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if calibration is not None:
        meta.calibration_file = meta.calibration_file or "calibration.kv"
        write_calibration(out_dir / meta.calibration_file, calibration)
    write_meta(out_dir / "meta.kv", meta)
    for module in modules:
        write_module_file(out_dir / f"module_{module.module_id}.csv", module)
    return out_dir
