"""SCADA-style datasets: CSV ingestion, time features and a synthetic network generator."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Iterable, Sequence

import numpy as np

PRESSURE_BOUNDS = (0.0, 16.0)
FLOW_BOUNDS = (0.0, math.inf)
DEFAULT_CADENCE = 15
STEPS_PER_DAY = 96
STEPS_PER_WEEK = 7 * STEPS_PER_DAY
SYNTH_START = datetime(2024, 1, 1)
KINDS = ("pressure", "flow", "inlet_pressure")
INLET_ID = "inlet"


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnomalyEvent:
    """An anomalous interval ``[start_index, end_index]`` (inclusive).

    For detected events ``peak_score`` is the largest absolute score in the
    interval; ground-truth labels carry the injected magnitude there.
    """

    sensor_id: str
    start_index: int
    end_index: int
    peak_score: float
    direction: str

    def __post_init__(self):
        if self.start_index > self.end_index:
            raise DataError("event start_index must not exceed end_index")
        if self.direction not in ("drop", "spike"):
            raise DataError(f"unknown event direction {self.direction!r}")

    def to_dict(self) -> dict:
        return {"sensor_id": self.sensor_id, "start_index": self.start_index,
                "end_index": self.end_index, "peak_score": self.peak_score,
                "direction": self.direction}

    @classmethod
    def from_dict(cls, d: dict) -> "AnomalyEvent":
        return cls(str(d["sensor_id"]), int(d["start_index"]), int(d["end_index"]),
                   float(d["peak_score"]), str(d["direction"]))


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SensorSeries:
    sensor_id: str
    kind: str
    start: datetime
    cadence: int
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown sensor kind {self.kind!r}")
        object.__setattr__(self, "values", _frozen(self.values, float))
        object.__setattr__(self, "valid", _frozen(self.valid, bool))
        if self.values.shape != self.valid.shape or self.values.ndim != 1:
            raise DataError("values and valid must be 1-D and equally long")
        if self.cadence <= 0:
            raise DataError("cadence must be positive")

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SensorSeries):
            return NotImplemented
        return (self.sensor_id == other.sensor_id and self.kind == other.kind
                and self.start == other.start and self.cadence == other.cadence
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.valid, other.valid))

    @property
    def column(self) -> str:
        if self.kind == "inlet_pressure":
            return "inlet_pressure"
        return f"{self.sensor_id}_{self.kind}"

    def timestamps(self) -> list[datetime]:
        step = timedelta(minutes=self.cadence)
        return [self.start + i * step for i in range(len(self))]

    def with_values(self, values, valid=None) -> "SensorSeries":
        return replace(self, values=values, valid=self.valid if valid is None else valid)


@dataclass(frozen=True, eq=False)
class Dataset:
    inlet: SensorSeries
    distribution_pressure: tuple[SensorSeries, ...] = ()
    distribution_flow: tuple[SensorSeries, ...] = ()
    labels: tuple[AnomalyEvent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "distribution_pressure", tuple(self.distribution_pressure))
        object.__setattr__(self, "distribution_flow", tuple(self.distribution_flow))
        object.__setattr__(self, "labels", tuple(self.labels))
        for s in self.all_series():
            if (s.start, s.cadence, len(s)) != (self.inlet.start, self.inlet.cadence, len(self.inlet)):
                raise DataError(f"series {s.column} does not share start/cadence/length with inlet")
        pids = [s.sensor_id for s in self.distribution_pressure]
        fids = [s.sensor_id for s in self.distribution_flow]
        if pids != fids:
            raise DataError("pressure and flow sensor ids must match")
        if len(set(pids)) != len(pids):
            raise DataError("duplicate sensor ids")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.inlet == other.inlet
                and self.distribution_pressure == other.distribution_pressure
                and self.distribution_flow == other.distribution_flow
                and self.labels == other.labels)

    def __len__(self) -> int:
        return len(self.inlet)

    @property
    def point_ids(self) -> list[str]:
        return [s.sensor_id for s in self.distribution_pressure]

    def all_series(self) -> list[SensorSeries]:
        return [*self.distribution_pressure, *self.distribution_flow, self.inlet]

    def series(self, name: str) -> SensorSeries:
        """Look a series up by CSV column name or by sensor id (pressure)."""
        for s in self.all_series():
            if name == s.column:
                return s
        if name == INLET_ID:
            return self.inlet
        for s in self.distribution_pressure:
            if s.sensor_id == name:
                return s
        raise DataError(f"no series named {name!r}")

    def replace_series(self, new: SensorSeries) -> "Dataset":
        def swap(group):
            return tuple(new if s.column == new.column else s for s in group)
        inlet = new if new.column == self.inlet.column else self.inlet
        return replace(self, inlet=inlet,
                       distribution_pressure=swap(self.distribution_pressure),
                       distribution_flow=swap(self.distribution_flow))

    def map_series(self, fn) -> "Dataset":
        return replace(self, inlet=fn(self.inlet),
                       distribution_pressure=tuple(fn(s) for s in self.distribution_pressure),
                       distribution_flow=tuple(fn(s) for s in self.distribution_flow))


# ---------------------------------------------------------------------------
# Time handling
# ---------------------------------------------------------------------------

def parse_timestamp(text: str) -> datetime:
    try:
        return datetime.strptime(text.strip(), "%Y-%m-%dT%H:%M")
    except ValueError as exc:
        raise DataError(f"bad timestamp {text!r}: expected YYYY-MM-DDTHH:MM") from exc


def format_timestamp(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M")


def time_features(ts: datetime, cadence: int = DEFAULT_CADENCE) -> tuple[int, int, int]:
    """``(day_of_month, hour, minute_slot)`` for a timestamp on the cadence grid."""
    if ts.second or ts.microsecond or ts.minute % cadence:
        raise DataError(f"{ts} is not on the {cadence}-minute grid")
    return ts.day, ts.hour, ts.minute // cadence


def time_feature_matrix(series: SensorSeries) -> np.ndarray:
    """Integer time features for every sample, shape ``[len, 3]``."""
    return np.array([time_features(ts, series.cadence) for ts in series.timestamps()], dtype=int)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _in_bounds(kind: str, v: float) -> bool:
    lo, hi = FLOW_BOUNDS if kind == "flow" else PRESSURE_BOUNDS
    return lo <= v <= hi


def _column_kind(name: str) -> tuple[str, str]:
    if name == "inlet_pressure":
        return INLET_ID, "inlet_pressure"
    for kind in ("pressure", "flow"):
        suffix = "_" + kind
        if name.endswith(suffix) and len(name) > len(suffix):
            sid = name[: -len(suffix)]
            if sid == INLET_ID:
                raise DataError("sensor id 'inlet' is reserved for the inlet channel")
            return sid, kind
    raise DataError(f"column {name!r} has an unknown kind suffix")


def parse_csv(text: str, cadence: int = DEFAULT_CADENCE) -> Dataset:
    """Parse a SCADA CSV export into a :class:`Dataset`.

    Empty, non-numeric and out-of-bounds cells become invalid samples with
    value 0.0. Missing grid slots are inserted as invalid samples.
    """
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError("empty CSV document")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "DateTime":
        raise DataError("first column must be DateTime")
    columns = [(name, *_column_kind(name)) for name in header[1:]]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names")
    if not any(kind == "inlet_pressure" for _, _, kind in columns):
        raise DataError("CSV has no inlet_pressure column")
    body = rows[1:]
    if not body:
        raise DataError("CSV has no data rows")

    stamps = [parse_timestamp(r[0]) for r in body]
    step = timedelta(minutes=cadence)
    for ts in stamps:
        time_features(ts, cadence)
    slots = [0]
    for prev, cur in zip(stamps, stamps[1:]):
        if cur == prev:
            raise DataError(f"duplicate timestamp {format_timestamp(cur)}")
        if cur < prev:
            raise DataError(f"timestamps not increasing at {format_timestamp(cur)}")
        gap, rem = divmod(cur - prev, step)
        if rem:
            raise DataError(f"cadence is not constant at {format_timestamp(cur)}")
        slots.append(slots[-1] + gap)
    length = slots[-1] + 1

    series = {}
    for ci, (name, sid, kind) in enumerate(columns, start=1):
        values = np.zeros(length)
        valid = np.zeros(length, dtype=bool)
        for slot, row in zip(slots, body):
            if len(row) != len(header):
                raise DataError(f"row for {row[0]} has {len(row)} cells, expected {len(header)}")
            cell = row[ci].strip()
            try:
                v = float(cell)
            except ValueError:
                continue
            if math.isfinite(v) and _in_bounds(kind, v):
                values[slot] = v
                valid[slot] = True
        series[name] = SensorSeries(sid, kind, stamps[0], cadence, values, valid)

    pressures = [s for s in series.values() if s.kind == "pressure"]
    flows = {s.sensor_id: s for s in series.values() if s.kind == "flow"}
    if set(flows) != {s.sensor_id for s in pressures}:
        raise DataError("every distribution point needs both a _pressure and a _flow column")
    return Dataset(series["inlet_pressure"], pressures, [flows[p.sensor_id] for p in pressures])


def to_csv(ds: Dataset) -> str:
    cols = [*ds.distribution_pressure, *ds.distribution_flow, ds.inlet]
    buf = io.StringIO()
    buf.write(",".join(["DateTime", *(s.column for s in cols)]) + "\n")
    for i, ts in enumerate(ds.inlet.timestamps()):
        cells = [repr(float(s.values[i])) if s.valid[i] else "" for s in cols]
        buf.write(",".join([format_timestamp(ts), *cells]) + "\n")
    return buf.getvalue()


def read_csv(path, cadence: int = DEFAULT_CADENCE) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read(), cadence)


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(ds))


# ---------------------------------------------------------------------------
# Synthetic network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    days: int = 60
    n_points: int = 5
    noise_std: float = 0.02
    seed: int = 0


def _daily(t: np.ndarray, phase: float, second: float) -> np.ndarray:
    w = 2.0 * np.pi * t / STEPS_PER_DAY
    return np.sin(w + phase) + second * np.sin(2.0 * w + 2.0 * phase)


def generate_network(cfg: SynthConfig) -> Dataset:
    """Synthetic SCADA network with an inlet-coupled set of distribution points.

    Inlet pressure follows daily and weekly cycles. Each point's pressure is
    an affine function of the inlet minus a point-specific demand cycle, and
    its flow is that demand cycle plus noise.
    """
    if cfg.days < 2:
        raise DataError("days must be >= 2")
    if cfg.n_points < 1:
        raise DataError("n_points must be >= 1")
    if cfg.noise_std < 0:
        raise DataError("noise_std must be >= 0")
    rng = np.random.default_rng(cfg.seed)
    n = cfg.days * STEPS_PER_DAY
    t = (np.arange(n) % STEPS_PER_WEEK).astype(float)  # exact weekly periodicity in floats

    inlet_clean = (3.0 + 0.35 * _daily(t, rng.uniform(0, 2 * np.pi), 0.3)
                   + 0.03 * np.sin(2.0 * np.pi * t / STEPS_PER_WEEK + rng.uniform(0, 2 * np.pi)))
    inlet = inlet_clean + cfg.noise_std * rng.standard_normal(n)

    pressures, flows = [], []
    for j in range(cfg.n_points):
        sid = f"P{j + 1:02d}"
        gain = rng.uniform(0.6, 0.9)
        offset = rng.uniform(0.0, 0.4)
        base_flow = rng.uniform(20.0, 80.0)
        swing = rng.uniform(0.3, 0.6)
        demand = base_flow * (1.0 + swing * _daily(t, rng.uniform(0, 2 * np.pi), 0.25))
        headloss = rng.uniform(0.002, 0.005) * demand
        p = gain * inlet_clean + offset - headloss + cfg.noise_std * rng.standard_normal(n)
        q = demand + cfg.noise_std * base_flow * rng.standard_normal(n)
        pressures.append(SensorSeries(sid, "pressure", SYNTH_START, DEFAULT_CADENCE, p, np.ones(n, bool)))
        flows.append(SensorSeries(sid, "flow", SYNTH_START, DEFAULT_CADENCE, q, np.ones(n, bool)))
    inlet_s = SensorSeries(INLET_ID, "inlet_pressure", SYNTH_START, DEFAULT_CADENCE, inlet, np.ones(n, bool))
    return Dataset(inlet_s, pressures, flows)


@dataclass(frozen=True)
class AnomalySpec:
    sensor_id: str
    start_index: int
    duration: int
    kind: str
    magnitude: float

    def __post_init__(self):
        if self.kind not in ("drop", "spike"):
            raise DataError(f"anomaly kind must be drop or spike, got {self.kind!r}")
        if not self.magnitude > 0:
            raise DataError("anomaly magnitude must be positive")
        if self.duration < 1:
            raise DataError("anomaly duration must be >= 1")


def anomaly_profile(duration: int) -> np.ndarray:
    """Unit-height profile with 2-sample linear ramps inside each edge."""
    i = np.arange(duration)
    return np.minimum(1.0, np.minimum((i + 1) / 3.0, (duration - i) / 3.0))


def inject_anomalies(ds: Dataset, specs: Iterable[AnomalySpec]) -> Dataset:
    """Add drops/spikes to pressure series and record ground-truth labels.

    Invalid samples keep their placeholder value.
    """
    specs = list(specs)
    by_sensor: dict[str, list[AnomalySpec]] = {}
    for sp in specs:
        by_sensor.setdefault(sp.sensor_id, []).append(sp)
    out = ds
    labels = list(ds.labels)
    for sid, group in by_sensor.items():
        target = ds.inlet if sid == INLET_ID else None
        for s in ds.distribution_pressure:
            if s.sensor_id == sid:
                target = s
        if target is None:
            raise DataError(f"no pressure series for sensor {sid!r}")
        group.sort(key=lambda sp: sp.start_index)
        for a, b in zip(group, group[1:]):
            if b.start_index < a.start_index + a.duration:
                raise DataError(f"overlapping anomaly specs on sensor {sid!r}")
        values = target.values.copy()
        for sp in group:
            if sp.start_index < 0 or sp.start_index + sp.duration > len(values):
                raise DataError(f"anomaly interval [{sp.start_index}, "
                                f"{sp.start_index + sp.duration}) outside series of length {len(values)}")
            sign = 1.0 if sp.kind == "spike" else -1.0
            sl = slice(sp.start_index, sp.start_index + sp.duration)
            delta = sign * sp.magnitude * anomaly_profile(sp.duration)
            values[sl] = np.where(target.valid[sl], values[sl] + delta, values[sl])
            labels.append(AnomalyEvent(sid, sp.start_index, sp.start_index + sp.duration - 1,
                                       float(sp.magnitude), sp.kind))
        out = out.replace_series(target.with_values(values))
    return replace(out, labels=tuple(labels))


def sample_anomaly_specs(length: int, n: int, seed: int, sensor_id: str = INLET_ID,
                         duration: tuple[int, int] = (8, 24),
                         magnitude: tuple[float, float] = (0.4, 0.8),
                         margin: int = 2 * STEPS_PER_DAY, gap: int = 0) -> list[AnomalySpec]:
    """Draw ``n`` non-overlapping drop/spike specs spread evenly over a series.

    The first ``margin`` samples stay clean so forecasters have history, and
    every event is preceded by at least ``gap`` clean samples.
    """
    if n < 1:
        return []
    rng = np.random.default_rng(seed)
    slot = (length - margin) // n
    if slot < duration[1] + gap + 4:
        raise DataError("series too short for the requested number of anomalies")
    specs = []
    for k in range(n):
        dur = int(rng.integers(duration[0], duration[1] + 1))
        lo = margin + k * slot
        start = int(rng.integers(lo + gap, lo + slot - dur))
        kind = "drop" if rng.random() < 0.5 else "spike"
        mag = float(rng.uniform(*magnitude))
        specs.append(AnomalySpec(sensor_id, start, dur, kind, round(mag, 3)))
    return specs


def inject_missing(ds: Dataset, rate: float, seed: int) -> Dataset:
    """Invalidate an i.i.d. Bernoulli(rate) subset of every series' samples."""
    if not 0.0 <= rate < 1.0:
        raise DataError("missing rate must lie in [0, 1)")
    if rate == 0.0:
        return ds
    rng = np.random.default_rng(seed)

    def knock_out(s: SensorSeries) -> SensorSeries:
        drop = rng.random(len(s)) < rate
        valid = s.valid & ~drop
        return s.with_values(np.where(valid, s.values, 0.0), valid)

    return ds.map_series(knock_out)


def specs_from_json(items: Sequence[dict]) -> list[AnomalySpec]:
    return [AnomalySpec(str(d["sensor_id"]), int(d["start_index"]), int(d["duration"]),
                        str(d["kind"]), float(d["magnitude"])) for d in items]
