"""Min-Max scaling, one-hot time encoding and lag windowing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PARAMS_VERSION = 1
N_DAYS, N_HOURS, N_SLOTS = 31, 24, 4
ONE_HOT_WIDTH = N_DAYS + N_HOURS + N_SLOTS


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class MinMaxEntry:
    name: str
    x_min: float
    x_max: float
    degenerate: bool

    def __post_init__(self):
        if not self.x_min <= self.x_max:
            raise PreprocessError(f"{self.name}: x_min {self.x_min} exceeds x_max {self.x_max}")
        if self.degenerate != (self.x_min == self.x_max):
            raise PreprocessError(f"{self.name}: degenerate flag inconsistent with its range")


@dataclass(frozen=True)
class MinMaxParams:
    features: tuple[MinMaxEntry, ...]

    def __getitem__(self, name: str) -> MinMaxEntry:
        for e in self.features:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.features]

    def merged(self, other: "MinMaxParams") -> "MinMaxParams":
        return MinMaxParams(self.features + other.features)


def fit_minmax(values, name: str) -> MinMaxEntry:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise PreprocessError(f"cannot fit Min-Max on empty data for {name!r}")
    lo, hi = float(x.min()), float(x.max())
    return MinMaxEntry(name, lo, hi, lo == hi)


def normalize(x, p: MinMaxEntry):
    """Scale to ``[0, 1]`` over the fitted range; degenerate entries map to 0."""
    if p.degenerate:
        return np.zeros_like(x, dtype=float) if np.ndim(x) else 0.0
    return (np.asarray(x, dtype=float) - p.x_min) / (p.x_max - p.x_min) if np.ndim(x) \
        else (float(x) - p.x_min) / (p.x_max - p.x_min)


def denormalize(x_norm, p: MinMaxEntry):
    if p.degenerate:
        return np.full(np.shape(x_norm), p.x_min) if np.ndim(x_norm) else p.x_min
    return np.asarray(x_norm, dtype=float) * (p.x_max - p.x_min) + p.x_min if np.ndim(x_norm) \
        else float(x_norm) * (p.x_max - p.x_min) + p.x_min


def one_hot_time(feats: tuple[int, int, int]) -> np.ndarray:
    """59-wide indicator vector: 31 days, 24 hours, 4 quarter-hour slots."""
    day, hour, slot = (int(v) for v in feats)
    if not (1 <= day <= N_DAYS and 0 <= hour < N_HOURS and 0 <= slot < N_SLOTS):
        raise PreprocessError(f"time features out of range: {feats}")
    v = np.zeros(ONE_HOT_WIDTH)
    v[day - 1] = 1.0
    v[N_DAYS + hour] = 1.0
    v[N_DAYS + N_HOURS + slot] = 1.0
    return v


def one_hot_matrix(feats: np.ndarray) -> np.ndarray:
    """Row-wise :func:`one_hot_time` for an ``[n, 3]`` feature matrix."""
    feats = np.asarray(feats, dtype=int)
    out = np.zeros((len(feats), ONE_HOT_WIDTH))
    if len(feats) == 0:
        return out
    d, h, s = feats[:, 0], feats[:, 1], feats[:, 2]
    if d.min() < 1 or d.max() > N_DAYS or h.min() < 0 or h.max() >= N_HOURS or s.min() < 0 or s.max() >= N_SLOTS:
        raise PreprocessError("time features out of range")
    rows = np.arange(len(feats))
    out[rows, d - 1] = 1.0
    out[rows, N_DAYS + h] = 1.0
    out[rows, N_DAYS + N_HOURS + s] = 1.0
    return out


@dataclass(frozen=True)
class SupervisedSet:
    inputs: np.ndarray   # [sample, lag, channel]
    targets: np.ndarray  # [sample, output]
    lookback: int
    horizon: int

    def __len__(self) -> int:
        return len(self.inputs)


def series_to_supervised(channels: Sequence, lookback: int, horizon: int = 1,
                         target_channel: int = 0, target=None) -> SupervisedSet:
    """Lag windows over stacked channels.

    ``inputs[s, w, c]`` is channel ``c`` at time ``s + w`` and ``targets[s]``
    is the target at ``s + lookback + horizon - 1``. The target is channel
    ``target_channel`` unless an explicit ``target`` sequence is given.
    """
    data = np.asarray(channels, dtype=float)
    if data.ndim == 1:
        data = data[None, :]
    if lookback < 1 or horizon < 1:
        raise PreprocessError("lookback and horizon must be >= 1")
    length = data.shape[1]
    if length < lookback + horizon:
        raise PreprocessError(f"series of length {length} too short for lookback {lookback} "
                              f"and horizon {horizon}")
    tgt = data[target_channel] if target is None else np.asarray(target, dtype=float)
    if len(tgt) != length:
        raise PreprocessError("target length differs from channel length")
    n = length - lookback - horizon + 1
    windows = np.lib.stride_tricks.sliding_window_view(data, lookback, axis=1)[:, :n]
    inputs = np.ascontiguousarray(windows.transpose(1, 2, 0))
    targets = tgt[lookback + horizon - 1: lookback + horizon - 1 + n].reshape(n, 1).copy()
    return SupervisedSet(inputs, targets, lookback, horizon)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def params_to_json(p: MinMaxParams) -> str:
    doc = {"features": [{"name": e.name, "x_min": float(e.x_min), "x_max": float(e.x_max),
                         "degenerate": bool(e.degenerate)} for e in p.features],
           "version": PARAMS_VERSION}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def params_from_json(text: str) -> MinMaxParams:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PreprocessError(f"malformed parameter JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("version") != PARAMS_VERSION:
        raise PreprocessError("parameter file must carry version 1")
    feats = doc.get("features")
    if not isinstance(feats, list):
        raise PreprocessError("parameter file lacks a features list")
    entries = []
    required = {"name", "x_min", "x_max", "degenerate"}
    for item in feats:
        if not isinstance(item, dict) or set(item) != required:
            raise PreprocessError(f"feature entry must have exactly the fields {sorted(required)}")
        lo, hi, deg = item["x_min"], item["x_max"], item["degenerate"]
        if not isinstance(deg, bool) or isinstance(lo, bool) or isinstance(hi, bool) \
                or not isinstance(lo, (int, float)) or not isinstance(hi, (int, float)) \
                or not math.isfinite(lo) or not math.isfinite(hi):
            raise PreprocessError(f"bad field types in entry {item.get('name')!r}")
        entries.append(MinMaxEntry(str(item["name"]), float(lo), float(hi), deg))
    return MinMaxParams(tuple(entries))


def save_params(p: MinMaxParams, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(params_to_json(p))


def load_params(path) -> MinMaxParams:
    with open(path, encoding="utf-8") as fh:
        return params_from_json(fh.read())
