"""Hourly smart-meter series: CSV import/export, validation and a synthetic generator.

A :class:`LoadSeries` stores its columns as numpy arrays. Timestamps are
``datetime64[h]`` and must be strictly increasing in steps of exactly one hour.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from loadcast._io import atomic_write_text

CSV_HEADER = ("timestamp", "load_kw", "temp_c", "humidity_pct", "is_holiday")
MIN_SERIES_LENGTH = 169
ONE_HOUR = np.timedelta64(1, "h")


class SeriesError(ValueError):
    """Raised when a CSV file or series violates the meter-data contract."""

    def __init__(self, message: str, line: int | None = None, row: int | None = None):
        self.line = line
        self.row = row
        if row is not None:
            message = f"row {row} (line {line}): {message}"
        elif line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeterReading(NamedTuple):
    timestamp: datetime
    load: float
    temperature: float
    humidity: float
    is_holiday: bool


@dataclass(frozen=True)
class LoadSeries:
    """An ordered hourly stream of load plus weather and calendar inputs."""

    timestamps: np.ndarray
    load: np.ndarray
    temperature: np.ndarray
    humidity: np.ndarray
    is_holiday: np.ndarray
    origin: str = "csv"

    def __post_init__(self):
        n = len(self.timestamps)
        for name in ("load", "temperature", "humidity", "is_holiday"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name!r} has {len(getattr(self, name))} values, expected {n}")
        if self.origin not in ("csv", "synthetic"):
            raise ValueError(f"unknown origin {self.origin!r}")
        for arr in (self.timestamps, self.load, self.temperature, self.humidity, self.is_holiday):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i: int) -> MeterReading:
        return MeterReading(
            self.timestamps[i].astype(datetime),
            float(self.load[i]),
            float(self.temperature[i]),
            float(self.humidity[i]),
            bool(self.is_holiday[i]),
        )

    def __iter__(self) -> Iterator[MeterReading]:
        return (self[i] for i in range(len(self)))

    @property
    def readings(self) -> list[MeterReading]:
        return list(self)

    @classmethod
    def from_readings(cls, readings: Iterable[MeterReading], origin: str = "csv") -> "LoadSeries":
        rows = list(readings)
        return cls(
            timestamps=np.array([np.datetime64(r.timestamp, "h") for r in rows], dtype="datetime64[h]"),
            load=np.array([r.load for r in rows], dtype=float),
            temperature=np.array([r.temperature for r in rows], dtype=float),
            humidity=np.array([r.humidity for r in rows], dtype=float),
            is_holiday=np.array([r.is_holiday for r in rows], dtype=bool),
            origin=origin,
        )


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    field: str
    index: int
    timestamp: str
    message: str

    def __str__(self) -> str:
        return f"{self.timestamp} [{self.field}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def day_of_week(timestamps: np.ndarray) -> np.ndarray:
    """Day index with Sunday = 0 for ``datetime64`` values."""
    days = np.asarray(timestamps).astype("datetime64[D]").astype(np.int64)
    return ((days + 4) % 7).astype(int)  # 1970-01-01 was a Thursday


def _ts_str(ts: np.datetime64) -> str:
    return str(np.datetime64(ts, "s"))


def validate_series(s: LoadSeries) -> ValidationReport:
    """List every contract violation in ``s`` without modifying it.

    Checks hourly spacing, strictly positive load, finite weather values and
    humidity within [0, 100].
    """
    out: list[Violation] = []
    ts = s.timestamps
    if len(ts) > 1:
        steps = np.diff(ts)
        for i in np.flatnonzero(steps != ONE_HOUR):
            i = int(i)
            step = steps[i]
            if step <= np.timedelta64(0, "h"):
                msg = f"timestamp not increasing (previous {_ts_str(ts[i])})"
            else:
                msg = f"gap of {int(step / ONE_HOUR)} h; missing {_ts_str(ts[i] + ONE_HOUR)}"
            out.append(Violation("timestamp", i + 1, _ts_str(ts[i + 1]), msg))
    for i in np.flatnonzero(~(s.load > 0)):
        out.append(Violation("load_kw", int(i), _ts_str(ts[i]), f"load must be > 0, got {s.load[i]}"))
    for i in np.flatnonzero(~np.isfinite(s.temperature)):
        out.append(Violation("temp_c", int(i), _ts_str(ts[i]), "temperature is not finite"))
    hum = s.humidity
    for i in np.flatnonzero(~np.isfinite(hum) | (hum < 0) | (hum > 100)):
        out.append(Violation("humidity_pct", int(i), _ts_str(ts[i]), f"humidity outside [0, 100]: {hum[i]}"))
    out.sort(key=lambda v: (v.index, v.field))
    return ValidationReport(tuple(out))


# --------------------------------------------------------------------------
# CSV


def load_holidays(path: str | Path) -> set[date]:
    """Read a holiday list: one ISO date per line, ``#`` comments allowed."""
    days = set()
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            days.add(date.fromisoformat(line))
    return days


def _parse_row(fields: list[str], line: int, row: int) -> MeterReading:
    def fail(msg):
        return SeriesError(msg, line, row)

    if len(fields) != len(CSV_HEADER):
        raise fail(f"expected {len(CSV_HEADER)} fields, got {len(fields)}")
    ts_s, load_s, temp_s, hum_s, hol_s = (f.strip() for f in fields)
    try:
        ts = datetime.fromisoformat(ts_s)
    except ValueError:
        raise fail(f"bad timestamp {ts_s!r}") from None
    if ts.minute or ts.second or ts.microsecond or ts.tzinfo is not None:
        raise fail(f"timestamp {ts_s!r} is not a naive whole hour")
    try:
        load, temp, hum = float(load_s), float(temp_s), float(hum_s)
    except ValueError as e:
        raise fail(f"bad number ({e})") from None
    if hol_s not in ("0", "1"):
        raise fail(f"is_holiday must be 0 or 1, got {hol_s!r}")
    if not load > 0:
        raise fail(f"load_kw must be > 0, got {load_s}")
    if not (math.isfinite(temp) and math.isfinite(hum)):
        raise fail("weather value is not finite")
    if not 0 <= hum <= 100:
        raise fail(f"humidity_pct outside [0, 100]: {hum_s}")
    return MeterReading(ts, load, temp, hum, hol_s == "1")


def _interpolate(a: MeterReading, b: MeterReading) -> MeterReading:
    return MeterReading(
        a.timestamp + (b.timestamp - a.timestamp) / 2,
        (a.load + b.load) / 2,
        (a.temperature + b.temperature) / 2,
        (a.humidity + b.humidity) / 2,
        a.is_holiday and b.is_holiday,
    )


def load_csv(
    path: str | Path,
    *,
    holidays: Iterable[date] | None = None,
    fill_single_gaps: bool = False,
) -> LoadSeries:
    """Parse and validate a meter CSV.

    Rows are read in file order. Malformed rows, non-positive loads, duplicate
    timestamps and gaps raise :class:`SeriesError` carrying the file line
    number. With ``fill_single_gaps`` a single missing hour is linearly
    interpolated instead of rejected; longer gaps are still errors.

    If ``holidays`` is given, it replaces the file's ``is_holiday`` column.
    """
    path = Path(path)
    readings: list[MeterReading] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise SeriesError(f"header must be {','.join(CSV_HEADER)}", 1)
        row = 0
        for fields in reader:
            line = reader.line_num
            if not fields or all(not f.strip() for f in fields):
                continue
            row += 1
            r = _parse_row(fields, line, row)
            if readings:
                prev = readings[-1]
                step = r.timestamp - prev.timestamp
                hours = step.total_seconds() / 3600
                if hours <= 0:
                    kind = "duplicate" if hours == 0 else "out-of-order"
                    raise SeriesError(f"{kind} timestamp {r.timestamp.isoformat()}", line, row)
                if hours != 1:
                    missing = (np.datetime64(prev.timestamp, "h") + ONE_HOUR).astype(datetime)
                    if hours == 2 and fill_single_gaps:
                        readings.append(_interpolate(prev, r))
                    else:
                        raise SeriesError(
                            f"gap of {hours:g} h before {r.timestamp.isoformat()}; "
                            f"missing {missing.isoformat()}",
                            line,
                            row,
                        )
            readings.append(r)
    if holidays is not None:
        hol = set(holidays)
        readings = [r._replace(is_holiday=r.timestamp.date() in hol) for r in readings]
    return LoadSeries.from_readings(readings, origin="csv")


def _fmt(x: float) -> str:
    return repr(float(x))


def series_to_csv(s: LoadSeries) -> str:
    lines = [",".join(CSV_HEADER)]
    for ts, load, temp, hum, hol in zip(s.timestamps, s.load, s.temperature, s.humidity, s.is_holiday):
        lines.append(f"{ts.astype(datetime).isoformat()},{_fmt(load)},{_fmt(temp)},{_fmt(hum)},{int(hol)}")
    return "\n".join(lines) + "\n"


def write_csv(s: LoadSeries, path: str | Path) -> None:
    """Write ``s`` in the canonical CSV layout (atomic replace)."""
    atomic_write_text(path, series_to_csv(s))


# --------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticProfileConfig:
    """Knobs for :func:`generate_synthetic`.

    Loads are in kW. ``weekend_flatten_factor`` scales the diurnal humps on
    weekends and holidays; 1.0 makes both day types share one profile.
    """

    n_hours: int = 8760
    base_load: float = 0.6
    weekday_evening_peak: float = 1.4
    weekend_flatten_factor: float = 0.45
    noise_std: float = 0.05
    noise_persistence: float = 0.6
    day_scale_std: float = 0.12
    day_scale_persistence: float = 0.5
    temperature_mean: float = 27.0
    temperature_amplitude: float = 1.0
    temperature_diurnal: float = 3.0
    weather_std: float = 1.2
    cooling_setpoint: float = 27.5
    cooling_gain: float = 0.25
    start: str = "2015-01-01T00:00"
    seed: int = 42
    holidays: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.n_hours < 1:
            raise ValueError("n_hours must be >= 1")
        if not self.base_load > 0:
            raise ValueError("base_load must be > 0")
        if not 0 < self.weekend_flatten_factor <= 1:
            raise ValueError("weekend_flatten_factor must be in (0, 1]")
        if self.noise_std < 0 or self.day_scale_std < 0:
            raise ValueError("noise levels must be >= 0")
        if not (0 <= self.noise_persistence < 1 and 0 <= self.day_scale_persistence < 1):
            raise ValueError("persistence coefficients must be in [0, 1)")


# Month/day pairs marked as holidays when the config does not list any.
DEFAULT_HOLIDAYS = ((1, 1), (3, 30), (4, 3), (5, 30), (6, 19), (8, 1), (8, 31), (10, 14), (12, 25), (12, 26))

MORNING_HOUR, EVENING_HOUR = 7.0, 19.0
CLAMP_FRACTION = 0.05


def diurnal_shape(hour: np.ndarray, evening_peak: float) -> np.ndarray:
    """Weekday double hump above base load: small 07:00 bump, main 19:00 peak."""
    hour = np.asarray(hour, dtype=float)

    def bump(center, width):
        d = (hour - center + 12) % 24 - 12
        return np.exp(-0.5 * (d / width) ** 2)

    return evening_peak * (0.45 * bump(MORNING_HOUR, 1.3) + bump(EVENING_HOUR, 2.2))


def occupancy(hour: np.ndarray, off_day: np.ndarray) -> np.ndarray:
    """Fraction of the household at home: evenings and nights on workdays,
    most of the day on weekends and holidays.
    """
    hour = np.asarray(hour, dtype=float)
    away = 1.0 / (1.0 + np.exp(-(hour - 7.5) * 2.0)) * 1.0 / (1.0 + np.exp((hour - 17.0) * 2.0))
    return np.where(off_day, 0.85, 1.0 - 0.9 * away)


def _holiday_dates(cfg: SyntheticProfileConfig, first: datetime, last: datetime) -> set[date]:
    if cfg.holidays:
        return {date.fromisoformat(d) for d in cfg.holidays}
    return {date(y, m, d) for y in range(first.year, last.year + 1) for m, d in DEFAULT_HOLIDAYS}


def generate_synthetic(cfg: SyntheticProfileConfig = SyntheticProfileConfig()) -> LoadSeries:
    """Generate a household-like hourly series.

    Load = base + day-type diurnal humps scaled by a day-level activity
    factor, plus AR(1) noise and an air-conditioning term proportional to
    occupancy times degrees above ``cooling_setpoint``, clamped below at
    ``0.05 * base_load``. Weekends and holidays use humps shrunk by
    ``weekend_flatten_factor``. Values are rounded to 0.1 W so the canonical
    CSV form is short. Deterministic in ``cfg.seed``.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_hours
    start = np.datetime64(cfg.start, "h")
    ts = start + np.arange(n) * ONE_HOUR
    first, last = ts[0].astype(datetime), ts[-1].astype(datetime)
    hol_days = _holiday_dates(cfg, first, last)

    days = ts.astype("datetime64[D]")
    day_index = (days - days[0]).astype(int)
    n_days = int(day_index[-1]) + 1
    hour = (ts - days).astype(int).astype(float)
    dow = day_of_week(days)
    day_dates = days.astype(datetime)
    holiday = np.array([d in hol_days for d in day_dates], dtype=bool)
    off_day = (dow == 0) | (dow == 6) | holiday

    # day-level multiplicative activity factor, persistent from day to day
    day_noise = rng.standard_normal(n_days)
    day_factor = np.empty(n_days)
    level = 0.0
    for d in range(n_days):
        rho = cfg.day_scale_persistence
        level = rho * level + math.sqrt(1 - rho * rho) * day_noise[d]
        day_factor[d] = math.exp(cfg.day_scale_std * level)

    # seasonal sinusoid + afternoon-peaking diurnal swing + persistent weather anomaly
    t_year = np.arange(n) / 8766.0
    weather = np.empty(n)
    w_eps = rng.standard_normal(n)
    w = 0.0
    for i in range(n):
        w = 0.97 * w + math.sqrt(1 - 0.97**2) * w_eps[i]
        weather[i] = w
    temperature = (
        cfg.temperature_mean
        + cfg.temperature_amplitude * np.sin(2 * np.pi * (t_year - 0.3))
        + cfg.temperature_diurnal * np.sin(2 * np.pi * (hour - 8) / 24)
        + cfg.weather_std * weather
        + 0.3 * rng.standard_normal(n)
    )
    humidity = np.clip(78 - 2.5 * (temperature - cfg.temperature_mean) + 4 * rng.standard_normal(n), 0, 100)

    shape = diurnal_shape(hour, cfg.weekday_evening_peak)
    shape = np.where(off_day, cfg.weekend_flatten_factor * shape, shape)

    eps = rng.standard_normal(n)
    noise = np.empty(n)
    phi = cfg.noise_persistence
    prev = 0.0
    scale = cfg.noise_std * math.sqrt(1 - phi * phi)
    for i in range(n):
        prev = phi * prev + scale * eps[i]
        noise[i] = prev

    cooling = cfg.cooling_gain * occupancy(hour, off_day) * np.maximum(temperature - cfg.cooling_setpoint, 0.0)
    load = cfg.base_load + day_factor[day_index] * shape + cooling + noise
    floor = CLAMP_FRACTION * cfg.base_load
    load = np.maximum(load, floor)
    load = np.maximum(np.round(load, 4), floor)

    return LoadSeries(
        timestamps=ts,
        load=load,
        temperature=np.round(temperature, 2),
        humidity=np.round(humidity, 1),
        is_holiday=holiday,
        origin="synthetic",
    )


