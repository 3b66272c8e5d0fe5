"""Hourly weather series: CSV ingestion, synthetic generation, heat-wave detection.

A heat wave is a run of at least ``min_consecutive`` local calendar days whose
daily maximum air temperature reaches the threshold (default 38.33 degC, the
98th-percentile constant for the study region). Day boundaries come from a
fixed UTC offset supplied by the caller.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .solar import solar_position

#: Operational heat-wave threshold for the default site (98th percentile of
#: 1991-2020 daily maxima).
DEFAULT_THRESHOLD_C = 38.33

DEFAULT_UTC_OFFSET = -6  # local time for daily aggregation at the default site

CSV_HEADER = ["timestamp", "ta", "rh", "wind_speed", "wind_dir", "ghi", "dni", "dhi"]

#: Column order of MeteoSeries.values(); the seven model variables.
VARIABLES = ("ta", "rh", "wind_speed", "wind_dir", "ghi", "dni", "dhi")


class MeteoError(ValueError):
    pass


@dataclass(frozen=True)
class MeteoRecord:
    timestamp: datetime     # UTC, tz-aware
    ta: float               # air temperature, degC
    rh: float               # relative humidity, %
    wind_speed: float       # m/s
    wind_dir: float         # degrees [0, 360)
    ghi: float              # W/m2
    dni: float              # W/m2
    dhi: float              # W/m2


@dataclass(frozen=True)
class MeteoSeries:
    records: tuple

    def __post_init__(self):
        if not self.records:
            raise MeteoError("empty series")
        one_hour = timedelta(hours=1)
        for prev, cur in zip(self.records, self.records[1:]):
            delta = cur.timestamp - prev.timestamp
            if delta != one_hour:
                kind = "gap" if delta > one_hour else "disorder"
                raise MeteoError(f"{kind} at {prev.timestamp.isoformat()} -> "
                                 f"{cur.timestamp.isoformat()}")

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return MeteoSeries(self.records[i])
        return self.records[i]

    @property
    def timestamps(self):
        return [r.timestamp for r in self.records]

    def values(self) -> np.ndarray:
        """(T, 7) array in VARIABLES order."""
        return np.array([[getattr(r, v) for v in VARIABLES] for r in self.records],
                        dtype=np.float64)

    def slice_hours(self, start: int, count: int) -> "MeteoSeries":
        return MeteoSeries(self.records[start:start + count])


@dataclass(frozen=True)
class HeatWavePeriod:
    start_day: date
    end_day: date
    threshold: float
    window_start: date = None
    window_end: date = None

    def __post_init__(self):
        if self.window_start is None:
            object.__setattr__(self, "window_start", self.start_day)
        if self.window_end is None:
            object.__setattr__(self, "window_end", self.end_day)

    @property
    def n_days(self) -> int:
        return (self.end_day - self.start_day).days + 1

    @property
    def window_days(self) -> int:
        return (self.window_end - self.window_start).days + 1


def _parse_timestamp(text: str, row: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise MeteoError(f"row {row}: bad timestamp {text!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


_RANGES = {
    "rh": (0.0, 100.0),
    "wind_speed": (0.0, math.inf),
    "wind_dir": (0.0, 360.0 - 1e-9),
    "ghi": (0.0, math.inf),
    "dni": (0.0, math.inf),
    "dhi": (0.0, math.inf),
}


def load_meteo_csv(path) -> MeteoSeries:
    """Parse and validate a meteo CSV (see CSV_HEADER for the layout)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise MeteoError(f"{path}: header {header} != {CSV_HEADER}")
        for i, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise MeteoError(f"{path}: row {i}: expected {len(CSV_HEADER)} fields")
            ts = _parse_timestamp(row[0], i)
            try:
                vals = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise MeteoError(f"{path}: row {i}: non-numeric value") from exc
            rec = MeteoRecord(ts, *vals)
            for name, (lo, hi) in _RANGES.items():
                v = getattr(rec, name)
                if not (lo <= v <= hi) or not math.isfinite(v):
                    raise MeteoError(
                        f"{path}: row {i} ({ts.isoformat()}): {name}={v} "
                        f"outside [{lo}, {hi}]")
            if not math.isfinite(rec.ta):
                raise MeteoError(f"{path}: row {i}: non-finite ta")
            records.append(rec)
    try:
        return MeteoSeries(tuple(records))
    except MeteoError as exc:
        raise MeteoError(f"{path}: {exc}") from exc


def save_meteo_csv(series: MeteoSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in series.records:
            writer.writerow([r.timestamp.strftime("%Y-%m-%dT%H:%M:%S+00:00"),
                             f"{r.ta:.3f}", f"{r.rh:.2f}", f"{r.wind_speed:.3f}",
                             f"{r.wind_dir:.2f}", f"{r.ghi:.2f}", f"{r.dni:.2f}",
                             f"{r.dhi:.2f}"])


@dataclass(frozen=True)
class HeatwaveSpec:
    start_day: int       # 1-based day index within the generated range
    length_days: int
    amplitude: float     # degC peak uplift on heat-wave days


def _clear_sky(elevation_deg: float):
    """Direct/diffuse clear-sky irradiance from solar elevation (W/m2)."""
    if elevation_deg <= 0.0:
        return 0.0, 0.0, 0.0
    sin_e = math.sin(math.radians(elevation_deg))
    air_mass = min(1.0 / max(sin_e, 0.02), 12.0)
    dni = 1100.0 * (0.75 ** air_mass)
    dhi = 130.0 * math.sqrt(sin_e)
    ghi = dni * sin_e + dhi
    return ghi, dni, dhi


def generate_synthetic_meteo(seed: int, n_days: int,
                             heatwave: HeatwaveSpec | None = None,
                             latitude: float = 30.6,
                             longitude: float = -96.3,
                             utc_offset: int = DEFAULT_UTC_OFFSET,
                             start_date: date = date(2022, 7, 1),
                             base_ta: float = 31.0,
                             diurnal_amplitude: float = 4.0,
                             level_sigma: float = 1.0,
                             level_phi: float = 0.5,
                             hourly_sigma: float = 0.4,
                             rh_slope: float = 1.8) -> MeteoSeries:
    """Deterministic synthetic weather: diurnal sinusoid with a wandering
    day-to-day level, anti-phase humidity, clear-sky radiation and an optional
    heat-wave uplift.

    The day-to-day level is a clipped AR(1) on day centers, interpolated
    hourly so trends are visible inside a single day. The heat-wave uplift is
    day-aligned (full ``amplitude`` at each wave day's mid-afternoon maximum),
    so wave-day maxima dominate for any reasonable amplitude.
    """
    if n_days < 1:
        raise MeteoError(f"n_days must be >= 1, got {n_days}")
    if heatwave is not None:
        if heatwave.start_day < 1 or \
                heatwave.start_day + heatwave.length_days - 1 > n_days:
            raise MeteoError(
                f"heatwave days {heatwave.start_day}.."
                f"{heatwave.start_day + heatwave.length_days - 1} "
                f"outside the {n_days}-day range")
    rng = np.random.default_rng(seed)
    n_hours = n_days * 24

    level = np.zeros(n_days)
    clip = 2.5 * level_sigma
    for d in range(1, n_days):
        innov = rng.normal(0.0, level_sigma * math.sqrt(max(1e-12, 1 - level_phi ** 2)))
        level[d] = float(np.clip(level_phi * level[d - 1] + innov, -clip, clip))

    uplift = np.zeros(n_days)
    if heatwave is not None:
        i0 = heatwave.start_day - 1
        uplift[i0:i0 + heatwave.length_days] = heatwave.amplitude

    hours = np.arange(n_hours)
    # interpolate day-center values (15:00 local, the diurnal maximum)
    day_centers = np.arange(n_days) * 24.0 + 15.0
    level_h = np.interp(hours, day_centers, level)
    uplift_h = np.interp(hours, day_centers, uplift)

    local_hour = hours % 24
    diurnal = np.sin((local_hour - 9.0) / 24.0 * 2.0 * math.pi)  # max at 15:00

    noise = np.zeros(n_hours)
    for t in range(1, n_hours):
        noise[t] = 0.6 * noise[t - 1] + rng.normal(0.0, hourly_sigma)

    ta = base_ta + level_h + uplift_h + diurnal_amplitude * diurnal + noise
    rh = np.clip(62.0 - rh_slope * (ta - base_ta), 15.0, 98.0)

    wind = np.zeros(n_hours)
    wind[0] = 2.5
    for t in range(1, n_hours):
        wind[t] = 2.5 + 0.7 * (wind[t - 1] - 2.5) + rng.normal(0.0, 0.5)
    wind = np.clip(wind, 0.3, 12.0)
    wdir = np.cumsum(rng.normal(0.0, 9.0, n_hours)) + rng.uniform(0, 360)
    wdir = np.mod(wdir, 360.0)

    # local midnight of start_date in UTC
    t0 = datetime(start_date.year, start_date.month, start_date.day,
                  tzinfo=timezone.utc) - timedelta(hours=utc_offset)
    records = []
    for t in range(n_hours):
        ts = t0 + timedelta(hours=t)
        sun = solar_position(ts, latitude, longitude)
        ghi, dni, dhi = _clear_sky(sun.elevation)
        records.append(MeteoRecord(ts, float(ta[t]), float(rh[t]),
                                   float(wind[t]), float(wdir[t]),
                                   round(ghi, 2), round(dni, 2), round(dhi, 2)))
    return MeteoSeries(tuple(records))


def local_day(ts: datetime, utc_offset: int) -> date:
    return (ts + timedelta(hours=utc_offset)).date()


def daily_maxima(series: MeteoSeries, utc_offset: int = DEFAULT_UTC_OFFSET):
    """Ordered list of (local_date, max ta) pairs."""
    out = {}
    for r in series.records:
        d = local_day(r.timestamp, utc_offset)
        if d not in out or r.ta > out[d]:
            out[d] = r.ta
    return sorted(out.items())


def detect_heatwaves(series: MeteoSeries, threshold: float = DEFAULT_THRESHOLD_C,
                     min_consecutive: int = 3,
                     utc_offset: int = DEFAULT_UTC_OFFSET) -> list[HeatWavePeriod]:
    """Maximal runs of consecutive local days with daily max ta >= threshold
    and length >= min_consecutive, ordered by start day."""
    return detect_heatwaves_daily(daily_maxima(series, utc_offset), threshold,
                                  min_consecutive)


def detect_heatwaves_daily(daily, threshold: float,
                           min_consecutive: int = 3) -> list[HeatWavePeriod]:
    """Run detection on precomputed (local_date, daily_max) pairs."""
    periods = []
    run = []  # consecutive hot days
    for day, mx in daily:
        contiguous = run and day == run[-1] + timedelta(days=1)
        if mx >= threshold:
            if contiguous:
                run.append(day)
            else:
                if len(run) >= min_consecutive:
                    periods.append(HeatWavePeriod(run[0], run[-1], threshold))
                run = [day]
        else:
            if len(run) >= min_consecutive:
                periods.append(HeatWavePeriod(run[0], run[-1], threshold))
            run = []
    if len(run) >= min_consecutive:
        periods.append(HeatWavePeriod(run[0], run[-1], threshold))
    return periods


def percentile_threshold(daily_max_values, p: float = 98.0) -> float:
    """Nearest-rank percentile: rank = ceil(p/100 * n) of the sorted values."""
    vals = sorted(float(v) for v in daily_max_values)
    if not vals:
        raise MeteoError("empty input to percentile_threshold")
    rank = max(1, math.ceil(p / 100.0 * len(vals)))
    return vals[min(rank, len(vals)) - 1]


def study_window(event: HeatWavePeriod, pad_days: int = 3,
                 series: MeteoSeries | None = None,
                 utc_offset: int = DEFAULT_UTC_OFFSET) -> HeatWavePeriod:
    """Pad the event by ``pad_days`` on each side; optionally check that the
    padded window is covered by ``series``."""
    ws = event.start_day - timedelta(days=pad_days)
    we = event.end_day + timedelta(days=pad_days)
    if series is not None:
        have = [local_day(r.timestamp, utc_offset) for r in
                (series.records[0], series.records[-1])]
        if ws < have[0] or we > have[1]:
            raise MeteoError(
                f"study window {ws}..{we} exceeds series coverage "
                f"{have[0]}..{have[1]}")
    return replace(event, window_start=ws, window_end=we)
