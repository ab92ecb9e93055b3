"""CNN-EMD pressure forecaster, CNN-EMD-LSTM inlet fusion model and residual anomaly detection."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .data import AnomalyEvent, SensorSeries
from .preprocess import (MinMaxParams, denormalize, fit_minmax, normalize, one_hot_matrix,
                         params_from_json, params_to_json)
from .signal import EmdConfig, ImfSet, decompose

log = logging.getLogger(__name__)

SCORE_FLOOR = 1e-6


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# IMF matrix
# ---------------------------------------------------------------------------

def channel_names(c: int) -> list[str]:
    return [f"imf_{i}" for i in range(1, c)] + ["residual"]


@dataclass(frozen=True)
class ImfMatrix:
    values: np.ndarray  # [C, L], normalized
    channel_count: int
    padding_report: dict

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def reconcile_channels(imfs: ImfSet, c: int = 8) -> tuple[np.ndarray, dict]:
    """Map an IMF set onto exactly ``c`` raw channels.

    Channels ``1..c-1`` carry IMFs in order; surplus slow IMFs are summed
    into channel ``c-1``, missing ones are zero rows. Channel ``c`` is the
    residual. Channel sums always reproduce the decomposed series.
    """
    if c < 2:
        raise ModelError("at least 2 channels are required (one IMF slot plus the residual)")
    length = len(imfs.residual)
    out = np.zeros((c, length))
    n = imfs.n_imfs
    slots = c - 1
    report = {"padded": [], "merged": []}
    for i in range(min(n, slots)):
        out[i] = imfs.imfs[i]
    if n > slots:
        for d in imfs.imfs[slots:]:
            out[slots - 1] += d
        report["merged"] = list(range(slots, n + 1))
    else:
        report["padded"] = list(range(n + 1, slots + 1))
    out[c - 1] = imfs.residual
    return out, report


def fit_channel_params(raw_channels: np.ndarray) -> MinMaxParams:
    """Per-channel Min-Max over ``[..., C, L]`` raw channel arrays."""
    raw = np.asarray(raw_channels, dtype=float)
    c = raw.shape[-2]
    flat = np.moveaxis(raw, -2, 0).reshape(c, -1)
    return MinMaxParams(tuple(fit_minmax(flat[i], name) for i, name in enumerate(channel_names(c))))


def normalize_channels(raw: np.ndarray, params: MinMaxParams, axis: int = -2) -> np.ndarray:
    raw = np.moveaxis(np.asarray(raw, dtype=float), axis, 0)
    out = np.stack([normalize(raw[i], params[name]) for i, name in enumerate(channel_names(len(raw)))])
    return np.moveaxis(out, 0, axis)


def denormalize_channels(norm: np.ndarray, params: MinMaxParams, axis: int = -2) -> np.ndarray:
    norm = np.moveaxis(np.asarray(norm, dtype=float), axis, 0)
    out = np.stack([denormalize(norm[i], params[name]) for i, name in enumerate(channel_names(len(norm)))])
    return np.moveaxis(out, 0, axis)


def prepare_imf_matrix(imfs: ImfSet, params: MinMaxParams, c: int = 8) -> ImfMatrix:
    raw, report = reconcile_channels(imfs, c)
    return ImfMatrix(normalize_channels(raw, params), c, report)


# ---------------------------------------------------------------------------
# CNN-EMD forecaster
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CnnEmdConfig:
    lookback: int = 96
    imf_channels: int = 8
    branch_dilations: tuple[int, ...] = (1, 2, 4, 8)
    filters: int = 32
    kernel: int = 3
    batch_norm: bool = False
    context: int = 384  # trailing samples decomposed for each forecast
    crop: bool = True  # skip conv work outside the final step's receptive field

    def __post_init__(self):
        object.__setattr__(self, "branch_dilations", tuple(int(d) for d in self.branch_dilations))
        if self.lookback < 1 or self.filters < 1 or self.kernel < 1 or not self.branch_dilations:
            raise ModelError("lookback, filters, kernel must be >= 1 and at least one branch is needed")
        if any(d < 1 for d in self.branch_dilations):
            raise ModelError("dilations must be >= 1")
        if self.imf_channels < 2:
            raise ModelError("imf_channels must be >= 2")
        if self.context < max(self.lookback, 8):
            raise ModelError("context must cover the lookback window and at least 8 samples")

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel - 1) * sum(self.branch_dilations)


def build_cnn_emd(cfg: CnnEmdConfig = CnnEmdConfig(), seed: int = 0) -> nn.NetworkModel:
    """Parallel causal branches of increasing depth, concatenated and mixed.

    Branch ``k`` stacks convolutions with the first ``k + 1`` dilation rates,
    so the deepest branch spans the full receptive field.
    """
    b = nn.GraphBuilder()
    x = b.input("imf", (cfg.lookback, cfg.imf_channels))
    if cfg.crop and not cfg.batch_norm and cfg.receptive_field < cfg.lookback:
        # the single-step output only sees this many trailing samples (batch
        # statistics would differ, so never with batch norm)
        x = b.add("crop", nn.Crop(cfg.receptive_field), x)
    tips = []
    for k in range(len(cfg.branch_dilations)):
        h = x
        for j, d in enumerate(cfg.branch_dilations[: k + 1]):
            h = b.add(f"branch{k}_conv{j}", nn.Conv1D(cfg.filters, cfg.kernel, d, "relu"), h)
            if cfg.batch_norm:
                h = b.add(f"branch{k}_bn{j}", nn.BatchNorm(), h)
        tips.append(h)
    cat = b.add("concat", nn.Concat(len(tips)), *tips) if len(tips) > 1 else tips[0]
    mix = b.add("mix", nn.Conv1D(cfg.filters, 1, 1, "relu"), cat)
    last = b.add("last", nn.LastStep(), mix)
    b.add("out", nn.Dense(1, "linear"), last)
    return b.build("out", seed)


@dataclass
class ForecasterBundle:
    network: nn.NetworkModel
    minmax: MinMaxParams  # channel entries plus a "target" entry
    emd_config: EmdConfig
    config: CnnEmdConfig

    @property
    def lookback(self) -> int:
        return self.config.lookback

    @property
    def imf_channels(self) -> int:
        return self.config.imf_channels


def raw_imf_window(history: np.ndarray, cfg: CnnEmdConfig, emd_cfg: EmdConfig) -> np.ndarray:
    """Decompose the trailing context of ``history``; raw ``[W, C]`` window."""
    ctx = np.asarray(history[-cfg.context:], dtype=float)
    raw, _ = reconcile_channels(decompose(ctx, emd_cfg), cfg.imf_channels)
    return raw[:, -cfg.lookback:].T


def imf_windows(values, cfg: CnnEmdConfig, emd_cfg: EmdConfig, start: int | None = None,
                stop: int | None = None) -> np.ndarray:
    """Raw IMF windows for forecasting targets ``values[start:stop]``.

    The window for target ``t`` is built only from ``values[t - context:t]``.
    Returns ``[n, W, C]``.
    """
    values = np.asarray(values, dtype=float)
    start = cfg.context if start is None else start
    stop = len(values) if stop is None else stop
    if start < cfg.context:
        raise ModelError(f"targets before index {cfg.context} lack a full decomposition context")
    if stop > len(values) + 1 or stop <= start:
        raise ModelError("empty or out-of-range target span")
    return np.stack([raw_imf_window(values[t - cfg.context:t], cfg, emd_cfg) for t in range(start, stop)])


def train_forecaster(values, cfg: CnnEmdConfig = CnnEmdConfig(), emd_cfg: EmdConfig = EmdConfig(),
                     train_cfg: nn.TrainConfig = nn.TrainConfig(), windows: np.ndarray | None = None):
    """Fit a forecaster bundle on a complete (imputed) series.

    Returns ``(bundle, history)``. ``windows`` may carry precomputed
    :func:`imf_windows` output for targets ``values[context:]``.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < cfg.context + 2:
        raise ModelError(f"series of length {len(values)} is too short for context {cfg.context}")
    if windows is None:
        windows = imf_windows(values, cfg, emd_cfg)
    targets = values[cfg.context:]
    if len(windows) != len(targets):
        raise ModelError("precomputed windows do not match the series")
    chan = fit_channel_params(windows.transpose(0, 2, 1))
    target_p = fit_minmax(values, "target")
    params = MinMaxParams(chan.features + (target_p,))
    x = normalize_channels(windows, params, axis=-1)
    y = normalize(targets, target_p).reshape(-1, 1)
    net = build_cnn_emd(cfg, train_cfg.seed)
    net, history = nn.train(net, {"imf": x}, y, train_cfg)
    return ForecasterBundle(net, params, emd_cfg, cfg), history


def _network_predict(b: ForecasterBundle, windows: np.ndarray) -> np.ndarray:
    x = normalize_channels(windows, b.minmax, axis=-1)
    y = b.network.predict({"imf": x})[:, 0]
    return denormalize(y, b.minmax["target"])


def forecast_pressure(b: ForecasterBundle, history: SensorSeries) -> float:
    """Next-step value after the end of ``history`` (same units as the series)."""
    if not np.all(history.valid):
        raise ModelError("history contains invalid samples; impute it first")
    if len(history) < b.config.context:
        raise ModelError(f"history of {len(history)} samples is shorter than the "
                         f"{b.config.context}-sample decomposition context")
    win = raw_imf_window(history.values, b.config, b.emd_config)
    return float(_network_predict(b, win[None])[0])


def forecast_series(b: ForecasterBundle, values, start: int | None = None,
                    windows: np.ndarray | None = None) -> np.ndarray:
    """One-step forecasts for every ``values[t]`` with ``t >= start``."""
    values = np.asarray(values, dtype=float)
    start = b.config.context if start is None else start
    if windows is None:
        windows = imf_windows(values, b.config, b.emd_config, start)
    return _network_predict(b, windows)


def persistence_forecast(values, start: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values[start - 1:-1]


# ---------------------------------------------------------------------------
# Fusion model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FusionConfig:
    lookback: int = 96
    n_points: int = 1
    lstm_units: int = 64
    head_units: int = 32
    time_features: bool = False

    def __post_init__(self):
        if self.n_points < 1:
            raise ModelError("n_points must be >= 1")
        if self.lookback < 1 or self.lstm_units < 1 or self.head_units < 1:
            raise ModelError("lookback and layer sizes must be >= 1")

    @property
    def branch_width(self) -> int:
        return self.n_points + (59 if self.time_features else 0)


def build_fusion_network(cfg: FusionConfig, seed: int = 0) -> nn.NetworkModel:
    b = nn.GraphBuilder()
    p = b.input("pressure", (cfg.lookback, cfg.branch_width))
    q = b.input("flow", (cfg.lookback, cfg.branch_width))
    c = b.input("inlet_forecast", (1,))
    hp = b.add("pressure_lstm", nn.LSTM(cfg.lstm_units), p)
    hq = b.add("flow_lstm", nn.LSTM(cfg.lstm_units), q)
    cat = b.add("concat", nn.Concat(3), hp, hq, c)
    h = b.add("head_dense", nn.Dense(cfg.head_units, "relu"), cat)
    b.add("out", nn.Dense(1, "linear"), h)
    return b.build("out", seed)


@dataclass
class FusionBundle:
    """Three-branch inlet predictor.

    ``network`` holds the pressure and flow LSTM branches and the head;
    the CNN-EMD branch is the separately trained ``inlet_branch`` whose
    forecast enters the network as the ``inlet_forecast`` input.
    """

    network: nn.NetworkModel
    inlet_branch: ForecasterBundle
    minmax: MinMaxParams
    config: FusionConfig

    @property
    def concat_width(self) -> int:
        return 2 * self.config.lstm_units + 1


def build_fusion(cfg: FusionConfig, inlet_branch: ForecasterBundle, seed: int = 0) -> FusionBundle:
    """Freshly initialized fusion bundle with identity-like Min-Max params."""
    entries = [fit_minmax([0.0, 1.0], n) for n in _fusion_param_names(cfg.n_points)]
    return FusionBundle(build_fusion_network(cfg, seed), inlet_branch, MinMaxParams(tuple(entries)), cfg)


def _fusion_param_names(n_points: int) -> list[str]:
    return ([f"pressure_{j}" for j in range(n_points)] + [f"flow_{j}" for j in range(n_points)]
            + ["inlet"])


def _scale_group(arr: np.ndarray, params: MinMaxParams, prefix: str) -> np.ndarray:
    cols = [normalize(arr[..., j], params[f"{prefix}_{j}"]) for j in range(arr.shape[-1])]
    return np.stack(cols, axis=-1)


def _fusion_inputs(f: FusionBundle, pressures, flows, inlet_fc, onehot=None) -> dict:
    p = _scale_group(np.asarray(pressures, dtype=float), f.minmax, "pressure")
    q = _scale_group(np.asarray(flows, dtype=float), f.minmax, "flow")
    if f.config.time_features:
        p = np.concatenate([p, onehot], axis=-1)
        q = np.concatenate([q, onehot], axis=-1)
    c = normalize(np.asarray(inlet_fc, dtype=float), f.minmax["inlet"]).reshape(-1, 1)
    return {"pressure": p, "flow": q, "inlet_forecast": c}


def _lag_windows(mat: np.ndarray, lookback: int, targets: range) -> np.ndarray:
    """``[n, W, k]`` windows ending just before each target index."""
    view = np.lib.stride_tricks.sliding_window_view(mat, lookback, axis=0)  # [L-W+1, k, W]
    idx = np.asarray(targets) - lookback
    return view[idx].transpose(0, 2, 1)


def fusion_dataset(f: FusionBundle, pressures: np.ndarray, flows: np.ndarray, inlet_fc: np.ndarray,
                   start: int, onehot: np.ndarray | None = None) -> dict:
    """Network inputs for inlet targets ``start..L-1``.

    ``pressures`` and ``flows`` are ``[L, n_points]``; ``inlet_fc`` holds the
    CNN-EMD forecasts for the same targets.
    """
    length = len(pressures)
    targets = range(start, length)
    if start < f.config.lookback:
        raise ModelError("targets need a full lookback window")
    pw = _lag_windows(pressures, f.config.lookback, targets)
    qw = _lag_windows(flows, f.config.lookback, targets)
    ow = _lag_windows(onehot, f.config.lookback, targets) if f.config.time_features else None
    return _fusion_inputs(f, pw, qw, inlet_fc, ow)


def train_fusion(pressures, flows, inlet, inlet_branch: ForecasterBundle, cfg: FusionConfig,
                 train_cfg: nn.TrainConfig = nn.TrainConfig(), inlet_fc=None, onehot=None):
    """Fit the fusion head on complete ``[L, n_points]`` pressure/flow arrays.

    Targets are ``inlet[t]`` for ``t >= inlet_branch.config.context``.
    """
    pressures = np.asarray(pressures, dtype=float)
    flows = np.asarray(flows, dtype=float)
    inlet = np.asarray(inlet, dtype=float)
    if pressures.shape != flows.shape or pressures.shape[1] != cfg.n_points:
        raise ModelError(f"pressure/flow arrays must both be [L, {cfg.n_points}]")
    start = max(inlet_branch.config.context, cfg.lookback)
    if inlet_fc is None:
        inlet_fc = forecast_series(inlet_branch, inlet, start)
    entries = ([fit_minmax(pressures[:, j], f"pressure_{j}") for j in range(cfg.n_points)]
               + [fit_minmax(flows[:, j], f"flow_{j}") for j in range(cfg.n_points)]
               + [fit_minmax(inlet, "inlet")])
    bundle = FusionBundle(build_fusion_network(cfg, train_cfg.seed), inlet_branch,
                          MinMaxParams(tuple(entries)), cfg)
    x = fusion_dataset(bundle, pressures, flows, inlet_fc, start, onehot)
    y = normalize(inlet[start:], bundle.minmax["inlet"]).reshape(-1, 1)
    _, history = nn.train(bundle.network, x, y, train_cfg)
    return bundle, history


def predict_inlet_series(f: FusionBundle, pressures, flows, inlet, start: int,
                         inlet_fc=None, onehot=None) -> np.ndarray:
    pressures = np.asarray(pressures, dtype=float)
    flows = np.asarray(flows, dtype=float)
    if inlet_fc is None:
        inlet_fc = forecast_series(f.inlet_branch, inlet, start)
    x = fusion_dataset(f, pressures, flows, inlet_fc, start, onehot)
    return denormalize(f.network.predict(x)[:, 0], f.minmax["inlet"])


def predict_inlet(f: FusionBundle, pressures, flows, inlet_history: SensorSeries, onehot=None) -> float:
    """Next-step inlet pressure from the last ``lookback`` samples of every point."""
    w = f.config.lookback
    pressures = np.asarray(pressures, dtype=float)
    flows = np.asarray(flows, dtype=float)
    expected = (w, f.config.n_points)
    if pressures.shape != expected or flows.shape != expected:
        raise ModelError(f"pressure and flow windows must have shape {expected}, "
                         f"got {pressures.shape} and {flows.shape}")
    fc = forecast_pressure(f.inlet_branch, inlet_history)
    oh = None if onehot is None else np.asarray(onehot, dtype=float)[None]
    x = _fusion_inputs(f, pressures[None], flows[None], [fc], oh)
    return float(denormalize(f.network.predict(x)[0, 0], f.minmax["inlet"]))


# ---------------------------------------------------------------------------
# Anomaly scoring and detection
# ---------------------------------------------------------------------------

def residual_scores(predicted, actual, window: int = 96) -> np.ndarray:
    """Rolling z-score of ``actual - predicted`` against the previous ``window`` residuals."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ModelError(f"predicted ({len(p)}) and actual ({len(a)}) lengths differ")
    if len(a) < window:
        raise ModelError(f"need at least {window} samples to score")
    e = a - p
    scores = np.zeros(len(e))
    if len(e) > window:
        past = np.lib.stride_tricks.sliding_window_view(e[:-1], window)  # row i covers e[i:i+window]
        mu = past.mean(axis=1)
        sd = np.maximum(past.std(axis=1), SCORE_FLOOR)
        scores[window:] = (e[window:] - mu) / sd
    return scores


def detect(scores, threshold: float = 3.0, min_duration: int = 1, residuals=None,
           sensor_id: str = "", merge_gap: int = 0) -> list[AnomalyEvent]:
    """Events from runs of ``|score| >= threshold``.

    Runs separated by at most ``merge_gap`` sub-threshold samples are joined
    into one event before the ``min_duration`` filter. An event's direction
    follows the mean residual (or score) of its first constituent run, which
    for an unmerged event is the whole run.
    """
    if threshold <= 0:
        raise ModelError("threshold must be positive")
    s = np.asarray(scores, dtype=float)
    sign_src = s if residuals is None else np.asarray(residuals, dtype=float)
    hot = np.abs(s) >= threshold
    edges = np.diff(np.concatenate(([0], hot.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    groups: list[list[tuple[int, int]]] = []
    for lo, hi in zip(starts, ends):
        if groups and lo - groups[-1][-1][1] - 1 <= merge_gap:
            groups[-1].append((lo, hi))
        else:
            groups.append([(lo, hi)])
    events = []
    for runs in groups:
        lo, hi = runs[0][0], runs[-1][1]
        if hi - lo + 1 < min_duration:
            continue
        first = runs[0]
        direction = "spike" if sign_src[first[0]:first[1] + 1].mean() > 0 else "drop"
        events.append(AnomalyEvent(sensor_id, int(lo), int(hi),
                                   float(np.abs(s[lo:hi + 1]).max()), direction))
    return events


@dataclass(frozen=True)
class Metrics:
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    mape: float | None = None
    accuracy: float | None = None
    n_events: int | None = None
    n_labels: int | None = None
    matched: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def match_events(events: Sequence[AnomalyEvent], labels: Sequence[AnomalyEvent],
                 tolerance: int = 2) -> list[tuple[AnomalyEvent, AnomalyEvent]]:
    """Greedy one-to-one matching, strongest events first."""
    free = list(labels)
    pairs = []
    for ev in sorted(events, key=lambda e: (-e.peak_score, e.start_index)):
        for lab in free:
            if lab.sensor_id and ev.sensor_id and lab.sensor_id != ev.sensor_id:
                continue
            if ev.start_index <= lab.end_index + tolerance and ev.end_index >= lab.start_index - tolerance:
                pairs.append((ev, lab))
                free.remove(lab)
                break
    return pairs


def mape(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ModelError("prediction and actual lengths differ")
    if np.any(a == 0):
        raise ModelError("MAPE is undefined for zero actual values")
    return float(np.mean(np.abs(a - p) / np.abs(a)))


def evaluate(events=None, labels=None, tolerance: int = 2, predicted=None, actual=None) -> Metrics:
    """Event-level precision/recall/F1 and forecast MAPE / accuracy.

    Detection metrics are reported only when labels are given and non-empty;
    forecast metrics only when predictions are. Precision with no events
    is 0.
    """
    det = {}
    if labels:
        events = list(events or [])
        matched = len(match_events(events, labels, tolerance))
        precision = matched / len(events) if events else 0.0
        recall = matched / len(labels)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        det = dict(precision=precision, recall=recall, f1=f1, n_events=len(events),
                   n_labels=len(labels), matched=matched)
    fc = {}
    if predicted is not None:
        m = mape(predicted, actual)
        fc = dict(mape=m, accuracy=100.0 * (1.0 - m))
    return Metrics(**det, **fc)


# ---------------------------------------------------------------------------
# Bundle persistence
# ---------------------------------------------------------------------------

def _write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read(path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def save_forecaster(b: ForecasterBundle, directory) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, n) for n in ("network.nnw", "minmax.json", "config.json")]
    nn.save_weights(b.network, paths[0])
    _write(paths[1], params_to_json(b.minmax))
    cfg = {"kind": "cnn_emd", "cnn_emd": asdict(b.config), "emd": b.emd_config.to_dict(),
           "seed": b.network.seed}
    cfg["cnn_emd"]["branch_dilations"] = list(b.config.branch_dilations)
    _write(paths[2], json.dumps(cfg, sort_keys=True, indent=2) + "\n")
    return paths


def load_forecaster(directory) -> ForecasterBundle:
    cfg = json.loads(_read(os.path.join(directory, "config.json")))
    if cfg.get("kind") != "cnn_emd":
        raise ModelError(f"{directory} does not hold a CNN-EMD bundle")
    cnn_cfg = CnnEmdConfig(**cfg["cnn_emd"])
    net = build_cnn_emd(cnn_cfg, cfg.get("seed", 0))
    nn.load_weights(net, os.path.join(directory, "network.nnw"))
    params = params_from_json(_read(os.path.join(directory, "minmax.json")))
    return ForecasterBundle(net, params, EmdConfig.from_dict(cfg["emd"]), cnn_cfg)


def save_fusion(f: FusionBundle, directory) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, n) for n in ("network.nnw", "minmax.json", "config.json")]
    nn.save_weights(f.network, paths[0])
    _write(paths[1], params_to_json(f.minmax))
    cfg = {"kind": "fusion", "fusion": asdict(f.config), "seed": f.network.seed}
    _write(paths[2], json.dumps(cfg, sort_keys=True, indent=2) + "\n")
    return paths + save_forecaster(f.inlet_branch, os.path.join(directory, "inlet_branch"))


def load_fusion(directory) -> FusionBundle:
    cfg = json.loads(_read(os.path.join(directory, "config.json")))
    if cfg.get("kind") != "fusion":
        raise ModelError(f"{directory} does not hold a fusion bundle")
    fcfg = FusionConfig(**cfg["fusion"])
    net = build_fusion_network(fcfg, cfg.get("seed", 0))
    nn.load_weights(net, os.path.join(directory, "network.nnw"))
    params = params_from_json(_read(os.path.join(directory, "minmax.json")))
    inlet = load_forecaster(os.path.join(directory, "inlet_branch"))
    return FusionBundle(net, inlet, params, fcfg)
