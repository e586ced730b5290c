"""Demand, feature and weather containers plus ingestion, windowing and synthesis.

All matrices are ``(rows, hours)`` numpy arrays.  Demand counts are stored as
``float64``; normalization happens per area on the training span only.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, EmptyDatasetError, SchemaError

FEATURE_GROUPS = ("demographic", "functionality", "transport")
HOUR = timedelta(hours=1)


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------


@dataclass
class DemandMatrix:
    area_ids: list[str]
    t0: datetime
    values: np.ndarray
    interval: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.area_ids = [str(a) for a in self.area_ids]
        if self.values.ndim != 2 or self.values.shape[0] != len(self.area_ids):
            raise DimensionError(
                f"demand values {self.values.shape} do not match {len(self.area_ids)} area ids"
            )
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("demand values must be finite and non-negative")

    @property
    def n_areas(self) -> int:
        return self.values.shape[0]

    @property
    def n_hours(self) -> int:
        return self.values.shape[1]

    def timestamps(self) -> list[datetime]:
        return [self.t0 + k * HOUR for k in range(self.n_hours)]

    def hour_of_week(self) -> np.ndarray:
        """Hour-of-week slot (0 = Monday 00:00) of every column."""
        start = self.t0.weekday() * 24 + self.t0.hour
        return (start + np.arange(self.n_hours)) % 168

    def subset(self, indices: Sequence[int]) -> "DemandMatrix":
        idx = list(indices)
        return DemandMatrix([self.area_ids[i] for i in idx], self.t0, self.values[idx], self.interval)


@dataclass
class FeatureBundle:
    demographic: np.ndarray
    functionality: np.ndarray
    transport: np.ndarray
    names: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        n = None
        for g in FEATURE_GROUPS:
            m = np.asarray(getattr(self, g), dtype=np.float64)
            if m.ndim != 2:
                raise DimensionError(f"{g} features must be a matrix, got shape {m.shape}")
            if m.shape[1] < 2:
                raise ValueError(f"{g} features need at least 2 columns for a Pearson correlation")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{g} features contain non-finite entries")
            if n is not None and m.shape[0] != n:
                raise DimensionError("feature groups disagree on the number of areas")
            n = m.shape[0]
            setattr(self, g, m)
            self.names.setdefault(g, [f"{g}_{k}" for k in range(m.shape[1])])

    @property
    def n_areas(self) -> int:
        return self.demographic.shape[0]

    def group(self, name: str) -> np.ndarray:
        if name not in FEATURE_GROUPS:
            raise KeyError(f"unknown feature group {name!r}")
        return getattr(self, name)

    def subset(self, indices: Sequence[int]) -> "FeatureBundle":
        idx = list(indices)
        return FeatureBundle(
            self.demographic[idx], self.functionality[idx], self.transport[idx], dict(self.names)
        )


@dataclass
class WeatherSeries:
    names: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.names):
            raise DimensionError(f"weather: {len(self.names)} names for values of shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("weather values must be finite")

    @property
    def n_features(self) -> int:
        return len(self.names)

    @classmethod
    def from_daily(cls, names, days: Sequence[date], daily: np.ndarray, t0: datetime, n_hours: int):
        """Broadcast one value per day to all hours of that day."""
        daily = np.asarray(daily, dtype=np.float64).reshape(len(names), -1)
        lookup = {d: k for k, d in enumerate(days)}
        out = np.empty((len(names), n_hours))
        for h in range(n_hours):
            day = (t0 + h * HOUR).date()
            if day not in lookup:
                raise EmptyDatasetError(f"no weather record for {day.isoformat()}")
            out[:, h] = daily[:, lookup[day]]
        return cls(list(names), out)

    @classmethod
    def empty(cls, n_hours: int) -> "WeatherSeries":
        return cls([], np.zeros((0, n_hours)))


@dataclass
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0 < f < 1 for f in fr):
            raise ConfigError(f"split fractions must lie in (0, 1), got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fr)}")

    def counts(self, n: int) -> tuple[int, int, int]:
        n_train = int(math.floor(self.train_frac * n + 1e-9))
        n_val = int(math.floor(self.val_frac * n + 1e-9))
        return n_train, n_val, n - n_train - n_val


class Normalizer:
    """Row-wise z-score; rows are areas (or weather features)."""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        std = np.asarray(std, dtype=np.float64).reshape(-1)
        self.std = np.where(std < 1e-8, 1.0, std)

    @classmethod
    def fit(cls, values: np.ndarray) -> "Normalizer":
        values = np.asarray(values, dtype=np.float64)
        return cls(values.mean(axis=-1), values.std(axis=-1))

    def transform(self, v):
        # rows sit on axis -2 so (rows, T) and (batch, rows, T) both work
        return (np.asarray(v) - self.mean[:, None]) / self.std[:, None]

    def inverse(self, v):
        return np.asarray(v) * self.std[:, None] + self.mean[:, None]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(d["mean"], d["std"])


@dataclass
class WindowedSample:
    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    t_index: int


@dataclass
class SampleSet:
    """Stacked windows: ``x`` (S, N, T), ``w`` (S, N_w, T), ``y`` (S, N, M) raw scale."""

    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    t_index: np.ndarray

    def __len__(self):
        return len(self.t_index)

    def __getitem__(self, k) -> WindowedSample:
        return WindowedSample(self.x[k], self.w[k], self.y[k], int(self.t_index[k]))

    def take(self, idx) -> "SampleSet":
        return SampleSet(self.x[idx], self.w[idx], self.y[idx], self.t_index[idx])


@dataclass
class WindowSets:
    train: SampleSet
    val: SampleSet
    test: SampleSet
    normalizer: Normalizer
    weather_normalizer: Normalizer
    window: int
    horizon: int
    train_hours: int  # hours [0, train_hours) feed the training samples


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

DEFAULT_COLUMNS = {
    "start_time": "start_time",
    "area_id": "area_id",
    "lat": "start_latitude",
    "lon": "start_longitude",
    "area_property": "area_id",
    "time_format": None,
}


@dataclass
class IngestReport:
    rows: int = 0
    counted: int = 0
    skipped: Counter = field(default_factory=Counter)

    @property
    def n_skipped(self) -> int:
        return sum(self.skipped.values())

    def to_dict(self) -> dict:
        return {"rows": self.rows, "counted": self.counted, "skipped": dict(sorted(self.skipped.items()))}


def parse_timestamp(text: str, fmt: str | None = None) -> datetime:
    text = text.strip()
    if fmt:
        ts = datetime.strptime(text, fmt)
    else:
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        ts = datetime.fromisoformat(text)
    # keep the local wall-clock hour; hour-of-week slots are defined on it
    return ts.replace(tzinfo=None)


def load_column_map(path: str | Path | None) -> dict:
    cols = dict(DEFAULT_COLUMNS)
    if path:
        cols.update(json.loads(Path(path).read_text()))
    return cols


class AreaMap:
    """Point-in-polygon lookup over a GeoJSON FeatureCollection."""

    def __init__(self, geojson_path: str | Path, id_property: str = "area_id"):
        from shapely.geometry import Point, shape
        from shapely.strtree import STRtree

        doc = json.loads(Path(geojson_path).read_text())
        self.area_ids: list[str] = []
        geoms = []
        for feat in doc.get("features", []):
            props = feat.get("properties") or {}
            if id_property not in props:
                raise SchemaError(id_property, str(geojson_path))
            self.area_ids.append(str(props[id_property]))
            geoms.append(shape(feat["geometry"]))
        self._geoms = geoms
        self._tree = STRtree(geoms)
        self._point = Point

    def locate(self, lon: float, lat: float) -> str | None:
        p = self._point(lon, lat)
        for k in sorted(self._tree.query(p)):
            if self._geoms[k].covers(p):
                return self.area_ids[k]
        return None


def ingest_trips(
    trip_csv: str | Path,
    area_map: AreaMap | None = None,
    span: tuple[datetime, datetime] | None = None,
    columns: dict | None = None,
    area_ids: Sequence[str] | None = None,
) -> tuple[DemandMatrix, IngestReport]:
    """Count trip starts per (area, hour).

    ``span`` is ``[start, end)``; hours are floored.  Rows that cannot be
    placed (bad timestamp, unknown area, outside the span) are tallied in the
    returned report under a reason key so that counted + skipped = rows.
    """
    cols = dict(DEFAULT_COLUMNS, **(columns or {}))
    report = IngestReport()
    events: list[tuple[str, datetime]] = []
    with open(trip_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = [cols["start_time"]]
        required += [cols["lon"], cols["lat"]] if area_map is not None else [cols["area_id"]]
        for c in required:
            if c not in header:
                raise SchemaError(c, str(trip_csv))
        for row in reader:
            report.rows += 1
            try:
                ts = parse_timestamp(row[cols["start_time"]], cols.get("time_format"))
            except (ValueError, TypeError):
                report.skipped["bad_timestamp"] += 1
                continue
            if area_map is not None:
                try:
                    area = area_map.locate(float(row[cols["lon"]]), float(row[cols["lat"]]))
                except (ValueError, TypeError):
                    area = None
            else:
                area = (row[cols["area_id"]] or "").strip() or None
            if area is None:
                report.skipped["unknown_area"] += 1
                continue
            events.append((area, ts.replace(minute=0, second=0, microsecond=0)))

    if area_ids is None:
        area_ids = area_map.area_ids if area_map is not None else sorted({a for a, _ in events})
    area_ids = [str(a) for a in area_ids]
    if span is None:
        if not events:
            raise EmptyDatasetError(f"no usable trips in {trip_csv}")
        start = min(t for _, t in events)
        end = max(t for _, t in events) + HOUR
    else:
        start = span[0].replace(minute=0, second=0, microsecond=0)
        end = span[1]
    n_hours = int(math.ceil((end - start) / HOUR))
    if n_hours <= 0 or not area_ids:
        raise EmptyDatasetError("the requested span contains no hours")

    row_of = {a: k for k, a in enumerate(area_ids)}
    values = np.zeros((len(area_ids), n_hours))
    for area, t in events:
        h = (t - start) // HOUR
        if area not in row_of:
            report.skipped["unknown_area"] += 1
        elif 0 <= h < n_hours:
            values[row_of[area], h] += 1
            report.counted += 1
        else:
            report.skipped["out_of_span"] += 1
    if report.counted == 0:
        raise EmptyDatasetError("no trips fall inside the requested span")
    return DemandMatrix(area_ids, start, values), report


def filter_active_areas(d: DemandMatrix, threshold: float = 1.0) -> tuple[DemandMatrix, list[int]]:
    """Keep areas whose mean hourly demand is strictly above ``threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    keep = [i for i, m in enumerate(d.values.mean(axis=1)) if m > threshold]
    if not keep:
        raise EmptyDatasetError(f"no area has mean hourly demand above {threshold}")
    return d.subset(keep), keep


def read_feature_csv(path: str | Path, area_ids: Sequence[str]) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise SchemaError("area_id", str(path))
    names = rows[0][1:]
    table = {r[0].strip(): [float(v) for v in r[1:]] for r in rows[1:] if r}
    missing = [a for a in area_ids if a not in table]
    if missing:
        raise EmptyDatasetError(f"{path}: no features for areas {missing[:5]}")
    return np.array([table[a] for a in area_ids], dtype=np.float64), names


def read_features(paths: dict[str, str | Path], area_ids: Sequence[str]) -> FeatureBundle:
    mats, names = {}, {}
    for g in FEATURE_GROUPS:
        mats[g], names[g] = read_feature_csv(paths[g], area_ids)
    return FeatureBundle(names=names, **mats)


def read_weather_csv(path: str | Path, t0: datetime, n_hours: int) -> WeatherSeries:
    """Read a daily (``date`` column) or hourly (``timestamp`` column) weather table."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    if "date" in header:
        key = "date"
    elif "timestamp" in header:
        key = "timestamp"
    else:
        raise SchemaError("date", str(path))
    names = [c for c in header if c != key]
    vals = np.array([[float(r[c]) for c in names] for r in rows], dtype=np.float64).T.reshape(len(names), -1)
    if key == "date":
        days = [date.fromisoformat(r["date"].strip()[:10]) for r in rows]
        return WeatherSeries.from_daily(names, days, vals, t0, n_hours)
    stamps = [parse_timestamp(r["timestamp"]) for r in rows]
    col = {s: k for k, s in enumerate(stamps)}
    idx = []
    for h in range(n_hours):
        s = t0 + h * HOUR
        if s not in col:
            raise EmptyDatasetError(f"no weather record for {s.isoformat()}")
        idx.append(col[s])
    return WeatherSeries(names, vals[:, idx])


# ---------------------------------------------------------------------------
# canonical bundle on disk
# ---------------------------------------------------------------------------

BUNDLE_FORMAT = 1


@dataclass
class Bundle:
    demand: DemandMatrix
    features: FeatureBundle | None
    weather: WeatherSeries


def _fmt(v: float) -> str:
    return repr(float(v))


def save_bundle(
    out_dir: str | Path,
    demand: DemandMatrix,
    features: FeatureBundle | None,
    weather: WeatherSeries | None,
    extra_meta: dict | None = None,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamps = [t.isoformat() for t in demand.timestamps()]
    with open(out / "demand.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["area_id", *stamps])
        for a, row in zip(demand.area_ids, demand.values):
            w.writerow([a, *(_fmt(v) for v in row)])
    if features is not None:
        for g in FEATURE_GROUPS:
            with open(out / f"features_{g}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["area_id", *features.names[g]])
                for a, row in zip(demand.area_ids, features.group(g)):
                    w.writerow([a, *(_fmt(v) for v in row)])
    if weather is not None and weather.n_features:
        with open(out / "weather.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", *weather.names])
            for h, s in enumerate(stamps):
                w.writerow([s, *(_fmt(v) for v in weather.values[:, h])])
    meta = {
        "format": BUNDLE_FORMAT,
        "t0": demand.t0.isoformat(),
        "interval_hours": demand.interval,
        "n_hours": demand.n_hours,
        "area_ids": demand.area_ids,
        "weather_features": list(weather.names) if weather is not None else [],
    }
    meta.update(extra_meta or {})
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def load_bundle(path: str | Path) -> Bundle:
    root = Path(path)
    if not (root / "meta.json").exists():
        raise EmptyDatasetError(f"{root} is not a dataset bundle (meta.json missing)")
    meta = json.loads((root / "meta.json").read_text())
    t0 = datetime.fromisoformat(meta["t0"])
    with open(root / "demand.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    ids = [r[0] for r in rows[1:]]
    if ids != meta["area_ids"]:
        raise EmptyDatasetError("demand.csv area order disagrees with meta.json")
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    demand = DemandMatrix(ids, t0, values, meta.get("interval_hours", 1))
    features = None
    if all((root / f"features_{g}.csv").exists() for g in FEATURE_GROUPS):
        features = read_features({g: root / f"features_{g}.csv" for g in FEATURE_GROUPS}, ids)
    if (root / "weather.csv").exists():
        weather = read_weather_csv(root / "weather.csv", t0, demand.n_hours)
    else:
        weather = WeatherSeries.empty(demand.n_hours)
    return Bundle(demand, features, weather)


# ---------------------------------------------------------------------------
# windowing
# ---------------------------------------------------------------------------


def check_window(window: int, levels: int) -> None:
    if levels < 1:
        raise ConfigError(f"levels must be >= 1, got {levels}")
    if window < 2**levels or window % 2**levels:
        raise ConfigError(
            f"window T={window} is incompatible with L={levels} levels: "
            f"T mod 2^L must be 0 (2^L={2**levels}) because every level halves the sequence"
        )


def make_windows(
    d: DemandMatrix,
    w: WeatherSeries | None,
    window: int,
    horizon: int,
    split: SplitSpec | None = None,
    levels: int = 2,
    norm: Normalizer | None = None,
    weather_norm: Normalizer | None = None,
) -> WindowSets:
    """Slice stride-1 windows and split them chronologically.

    ``M - 1`` samples are dropped at each split boundary so that no training
    target hour appears among the validation targets (and likewise val/test).
    Normalizers are fitted on the hours covered by the training samples unless
    given explicitly (e.g. restored from a checkpoint).
    """
    check_window(window, levels)
    split = split or SplitSpec()
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    total = d.n_hours
    if window + horizon > total:
        raise ConfigError(f"window+horizon={window + horizon} exceeds the {total} available hours")
    if w is None:
        w = WeatherSeries.empty(total)
    if w.values.shape[1] != total:
        raise DimensionError("weather and demand cover different numbers of hours")

    n = total - window - horizon + 1
    n_train, n_val, n_test = split.counts(n)
    gap = horizon - 1
    train_idx = np.arange(0, n_train)
    val_idx = np.arange(n_train + gap, n_train + n_val)
    test_idx = np.arange(n_train + n_val + gap, n)
    if len(train_idx) == 0 or len(val_idx) == 0 or len(test_idx) == 0:
        raise EmptyDatasetError(f"{n} windows are too few for a {split} split with horizon {horizon}")

    train_hours = n_train - 1 + window + horizon
    if norm is None:
        norm = Normalizer.fit(d.values[:, :train_hours])
    wnorm = weather_norm if weather_norm is not None else Normalizer.fit(w.values[:, :train_hours])
    xs = norm.transform(d.values)
    ws = wnorm.transform(w.values)

    def build(starts):
        win = np.lib.stride_tricks.sliding_window_view
        x = win(xs, window, axis=1)[:, starts].transpose(1, 0, 2)
        ww = win(ws, window, axis=1)[:, starts].transpose(1, 0, 2)
        y = win(d.values, horizon, axis=1)[:, starts + window].transpose(1, 0, 2)
        return SampleSet(
            np.ascontiguousarray(x), np.ascontiguousarray(ww), np.ascontiguousarray(y),
            starts + window - 1,
        )

    return WindowSets(
        build(train_idx), build(val_idx), build(test_idx), norm, wnorm, window, horizon, train_hours
    )


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def even_groups(n_areas: int, n_groups: int) -> list[list[int]]:
    """Partition ``range(n_areas)`` into ``n_groups`` contiguous, near-equal groups."""
    return [list(map(int, g)) for g in np.array_split(np.arange(n_areas), n_groups)]


_FEATURE_COUNTS = {"demographic": 8, "functionality": 9, "transport": 5}


def generate_synthetic(
    n_areas: int = 16,
    hours: int = 24 * 7 * 8,
    seed: int = 0,
    correlation_plan: Sequence[Sequence[int]] | int | None = None,
    planted_group: str = "demographic",
    noise_scale: float = 1.0,
    trend_scale: float = 0.5,
    trend_persistence: float = 0.97,
    weather_scale: float = 0.3,
    min_window: int = 24,
    t0: datetime = datetime(2019, 1, 7),
) -> tuple[DemandMatrix, FeatureBundle, WeatherSeries]:
    """Seeded desk-scale dataset with a known dilation match.

    Areas in one ``correlation_plan`` group share periodic phase and a latent
    log-scale AR(1) trend, and carry near-identical ``planted_group``
    features; the other feature groups are drawn independently.  Setting
    ``noise_scale``, ``trend_scale`` and ``weather_scale`` to 0 gives demand
    that repeats exactly every 168 hours.
    """
    if n_areas < 4:
        raise ValueError("need at least 4 areas")
    if hours < 10 * min_window:
        raise ValueError(f"hours={hours} is below 10x the window ({min_window})")
    if correlation_plan is None:
        correlation_plan = n_areas // 2
    if isinstance(correlation_plan, int):
        correlation_plan = even_groups(n_areas, correlation_plan)
    plan = [list(map(int, g)) for g in correlation_plan]
    flat = sorted(i for g in plan for i in g)
    if flat != list(range(n_areas)):
        raise ValueError("correlation_plan must partition the areas")
    if any(len(g) < 2 for g in plan):
        raise ValueError("every correlation_plan group needs at least 2 areas (a partner j != i)")
    if planted_group not in FEATURE_GROUPS:
        raise ValueError(f"unknown feature group {planted_group!r}")

    rng = np.random.default_rng(seed)
    group_of = np.empty(n_areas, dtype=int)
    for k, g in enumerate(plan):
        group_of[g] = k
    n_groups = len(plan)

    # periodic component, evaluated on hour-of-week so it is bit-exactly periodic
    how = (t0.weekday() * 24 + t0.hour + np.arange(hours)) % 168
    base = rng.uniform(4.0, 30.0, n_areas)
    daily_amp = rng.uniform(0.4, 0.8, n_groups)[group_of]
    weekly_amp = rng.uniform(0.1, 0.3, n_groups)[group_of]
    phase_d = rng.uniform(0, 2 * np.pi, n_groups)[group_of]
    phase_w = rng.uniform(0, 2 * np.pi, n_groups)[group_of]
    hod = (how % 24)[None, :]
    log_periodic = (
        daily_amp[:, None] * np.sin(2 * np.pi * hod / 24 + phase_d[:, None])
        + weekly_amp[:, None] * np.sin(2 * np.pi * how[None, :] / 168 + phase_w[:, None])
    )

    # shared latent trend per group (stationary AR(1), unit variance before scaling)
    phi = trend_persistence
    eps = rng.standard_normal((n_groups, hours))
    trend = np.empty((n_groups, hours))
    trend[:, 0] = eps[:, 0]
    for t in range(1, hours):
        trend[:, t] = phi * trend[:, t - 1] + math.sqrt(1 - phi**2) * eps[:, t]

    # daily weather: precipitation, temperature, wind
    n_days = int(math.ceil((t0.hour + hours) / 24))
    days = [t0.date() + timedelta(days=k) for k in range(n_days)]
    precip = rng.exponential(0.15, n_days) * (rng.random(n_days) < 0.35)
    temp = 60 + 15 * np.sin(2 * np.pi * np.arange(n_days) / 365) + rng.normal(0, 6, n_days)
    wind = np.abs(rng.normal(6, 2.5, n_days))
    weather = WeatherSeries.from_daily(
        ["precipitation", "temperature", "wind_speed"], days, np.stack([precip, temp, wind]), t0, hours
    )
    wz = (weather.values - weather.values.mean(axis=1, keepdims=True)) / (
        weather.values.std(axis=1, keepdims=True) + 1e-12
    )
    sens = rng.uniform(0.5, 1.0, n_areas)
    weather_effect = sens[:, None] * (-0.8 * wz[0] + 0.3 * wz[1] - 0.2 * wz[2])[None, :]

    log_rate = (
        np.log(base)[:, None]
        + log_periodic
        + trend_scale * trend[group_of]
        + weather_scale * weather_effect
    )
    rate = np.exp(log_rate)
    if noise_scale > 0:
        counts = rng.poisson(rate).astype(np.float64)
        values = np.maximum(rate + noise_scale * (counts - rate), 0.0)
    else:
        values = rate

    mats = {}
    for g in FEATURE_GROUPS:
        k = _FEATURE_COUNTS[g]
        if g == planted_group:
            proto = rng.normal(0, 1, (n_groups, k))
            mats[g] = proto[group_of] + rng.normal(0, 1e-3, (n_areas, k))
        else:
            mats[g] = rng.normal(0, 1, (n_areas, k))
    features = FeatureBundle(**mats)
    ids = [f"A{i:03d}" for i in range(n_areas)]
    return DemandMatrix(ids, t0, values), features, weather
