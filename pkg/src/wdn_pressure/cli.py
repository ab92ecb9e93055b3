"""Command-line pipeline: simulate, inject, impute, analyze, train, predict, detect, eval."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import data, impute, models, nn, plot, signal
from .preprocess import one_hot_matrix

log = logging.getLogger("wdn_pressure")

CONFIG_KEYS = ("synth", "forest", "emd", "cnn_emd", "fusion", "train", "detect", "anomalies", "acf")


class UsageError(Exception):
    """Bad arguments or configuration (exit code 2)."""


class PipelineError(Exception):
    """A module operation failed (exit code 1)."""


@dataclass
class CommandResult:
    exit_code: int
    artifacts: list[str] = field(default_factory=list)
    summary: str = ""


@dataclass(frozen=True)
class DetectConfig:
    threshold: float = 3.0
    min_duration: int = 1
    window: int = 96
    merge_gap: int = 0
    tolerance: int = 2


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _step(op: str, fn, *args, **kwargs):
    """Run one module operation, tagging failures with its name."""
    try:
        return fn(*args, **kwargs)
    except (ValueError, KeyError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise PipelineError(f"{op} failed: {exc}") from exc


def _build(cls, section: dict | None, name: str, **overrides):
    section = dict(section or {})
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise UsageError(f"config section {name!r} has unknown keys: {sorted(unknown)}")
    section.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {name!r} config: {exc}") from None


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - set(CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _emd_config(cfg: dict) -> signal.EmdConfig:
    try:
        return signal.EmdConfig.from_dict(cfg.get("emd", {}))
    except TypeError as exc:
        raise UsageError(f"invalid 'emd' config: {exc}") from None


def _cnn_config(cfg: dict) -> models.CnnEmdConfig:
    try:
        return _build(models.CnnEmdConfig, cfg.get("cnn_emd"), "cnn_emd")
    except models.ModelError as exc:
        raise UsageError(str(exc)) from None


def _out_dir(path: str | None) -> str:
    if not path:
        raise UsageError("--out is required")
    os.makedirs(path, exist_ok=True)
    return path


def _need_in(path: str | None) -> str:
    if not path:
        raise UsageError("--in is required")
    return path


def _read_dataset(path: str) -> data.Dataset:
    return _step("data.parse_csv", data.read_csv, path)


def _series(ds: data.Dataset, name: str) -> data.SensorSeries:
    return _step("data.Dataset.series", ds.series, name)


def _write_text(path: str, text: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _write_rows(path: str, header: list[str], rows) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _labels_near(path: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(path)), "labels.json")


def _read_labels(path: str) -> list[data.AnomalyEvent]:
    with open(path, encoding="utf-8") as fh:
        items = json.load(fh)
    if not isinstance(items, list):
        raise ValueError("labels file must hold a JSON list")
    return [data.AnomalyEvent.from_dict(d) for d in items]


def _carry_labels(src_csv: str, out_dir: str) -> list[str]:
    """Copy ``labels.json`` from the input's directory, if present."""
    src = _labels_near(src_csv)
    dst = os.path.join(out_dir, "labels.json")
    if os.path.exists(src) and os.path.abspath(src) != os.path.abspath(dst):
        with open(src, encoding="utf-8") as fh:
            _write_text(dst, fh.read())
        return [dst]
    return []


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(a, cfg) -> CommandResult:
    out = _out_dir(a.out)
    sc = _build(data.SynthConfig, cfg.get("synth"), "synth", days=a.days, n_points=a.points, seed=a.seed)
    ds = _step("data.generate_network", data.generate_network, sc)
    if a.rate:
        ds = _step("data.inject_missing", data.inject_missing, ds, a.rate, sc.seed)
    path = os.path.join(out, "data.csv")
    _step("data.write_csv", data.write_csv, ds, path)
    return CommandResult(0, [path], f"simulated {len(ds)} samples for {len(ds.point_ids)} points "
                                    f"(seed {sc.seed}, noise_std {sc.noise_std})")


def _anomaly_specs(cfg: dict, length: int, seed: int, sensor: str) -> list[data.AnomalySpec]:
    spec = cfg.get("anomalies")
    if spec is None:
        raise UsageError("inject needs an 'anomalies' config entry (a list of specs or sampler settings)")
    try:
        if isinstance(spec, list):
            return data.specs_from_json(spec)
        opts = dict(spec)
        count = int(opts.pop("count"))
        for key in ("duration", "magnitude"):
            if key in opts:
                opts[key] = tuple(opts[key])
        opts.setdefault("sensor_id", sensor)
        return data.sample_anomaly_specs(length, count, seed, **opts)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"invalid 'anomalies' config: {exc}") from None


def cmd_inject(a, cfg) -> CommandResult:
    src = _need_in(a.inp)
    out = _out_dir(a.out)
    ds = _read_dataset(src)
    sensor = a.sensor or data.INLET_ID
    specs = _anomaly_specs(cfg, len(ds), a.seed or 0, sensor) if "anomalies" in cfg else []
    ds = _step("data.inject_anomalies", data.inject_anomalies, ds, specs)
    if a.rate:
        ds = _step("data.inject_missing", data.inject_missing, ds, a.rate, a.seed or 0)
    path = os.path.join(out, "data.csv")
    _step("data.write_csv", data.write_csv, ds, path)
    lab = _write_text(os.path.join(out, "labels.json"),
                      _dump_json([e.to_dict() for e in ds.labels]))
    return CommandResult(0, [path, lab], f"injected {len(specs)} anomalies and missing rate {a.rate or 0}")


def cmd_impute(a, cfg) -> CommandResult:
    src = _need_in(a.inp)
    out = _out_dir(a.out)
    ds = _read_dataset(src)
    fc = _build(impute.ForestConfig, cfg.get("forest"), "forest", seed=a.seed)
    targets = [_series(ds, a.sensor)] if a.sensor else ds.all_series()
    artifacts, filled = [], 0
    for s in targets:
        if s.valid.all():
            continue
        model = _step("impute.fit_forest", impute.fit_forest, s, fc)
        new = _step("impute.impute_series", impute.impute_series, s, model)
        filled += int((~s.valid).sum())
        ds = ds.replace_series(new)
        if a.save_model:
            artifacts.append(_write_text(os.path.join(out, f"forest_{s.column}.json"),
                                         impute.forest_to_json(model)))
    path = os.path.join(out, "imputed.csv")
    _step("data.write_csv", data.write_csv, ds, path)
    artifacts = [path] + artifacts + _carry_labels(src, out)
    return CommandResult(0, artifacts, f"imputed {filled} samples across {len(targets)} series")


def cmd_acf(a, cfg) -> CommandResult:
    out = _out_dir(a.out)
    s = _series(_read_dataset(_need_in(a.inp)), a.sensor or "inlet_pressure")
    max_lag = int(cfg.get("acf", {}).get("max_lag", 2 * data.STEPS_PER_DAY))
    r = _step("signal.acf", signal.acf, s.values, max_lag)
    p = _step("signal.pacf", signal.pacf, s.values, max_lag)
    rows = [[k, repr(float(r[k])), repr(float(p[k - 1])) if k else ""] for k in range(max_lag + 1)]
    path = _write_rows(os.path.join(out, "acf.csv"), ["lag", "acf", "pacf"], rows)
    svg_path = os.path.join(out, "acf.svg")
    plot.write_svg(plot.line_svg([r, np.concatenate(([1.0], p))], ["acf", "pacf"],
                                 f"{s.column} autocorrelation"), svg_path)
    return CommandResult(0, [path, svg_path],
                         f"{s.column}: acf at lag {min(max_lag, 96)} = {r[min(max_lag, 96)]:.4f}")


def cmd_decompose(a, cfg) -> CommandResult:
    out = _out_dir(a.out)
    s = _series(_read_dataset(_need_in(a.inp)), a.sensor or "inlet_pressure")
    if not s.valid.all():
        raise PipelineError(f"signal.decompose failed: {s.column} has invalid samples; impute first")
    imfs = _step("signal.decompose", signal.decompose, s.values, _emd_config(cfg))
    header = ["t"] + [f"imf_{i + 1}" for i in range(imfs.n_imfs)] + ["residual"]
    rows = ([t] + [repr(float(d[t])) for d in imfs.imfs] + [repr(float(imfs.residual[t]))]
            for t in range(len(s)))
    path = _write_rows(os.path.join(out, "imfs.csv"), header, rows)
    svg_path = os.path.join(out, "imfs.svg")
    plot.write_svg(plot.imf_svg(imfs), svg_path)
    return CommandResult(0, [path, svg_path], f"{s.column}: {imfs.n_imfs} IMFs plus residual")


def cmd_hht(a, cfg) -> CommandResult:
    out = _out_dir(a.out)
    s = _series(_read_dataset(_need_in(a.inp)), a.sensor or "inlet_pressure")
    if not s.valid.all():
        raise PipelineError(f"signal.hht failed: {s.column} has invalid samples; impute first")
    imfs = _step("signal.decompose", signal.decompose, s.values, _emd_config(cfg))
    frames = _step("signal.hht", signal.hht, imfs)
    header = ["t"]
    for i in range(len(frames)):
        header += [f"amplitude_{i + 1}", f"frequency_{i + 1}"]
    rows = []
    for t in range(len(s)):
        row = [t]
        for f in frames:
            row += [repr(float(f.amplitude[t])), repr(float(f.frequency[t]))]
        rows.append(row)
    path = _write_rows(os.path.join(out, "hht.csv"), header, rows)
    svg_path = os.path.join(out, "hht.svg")
    if frames:
        tt = np.concatenate([np.arange(len(s))] * len(frames))
        ff = np.concatenate([f.frequency for f in frames])
        aa = np.concatenate([f.amplitude for f in frames])
        stride = max(1, len(tt) // 4000)
        plot.write_svg(plot.scatter_svg(tt[::stride], ff[::stride], aa[::stride],
                                        f"{s.column} time-frequency"), svg_path)
    else:
        plot.write_svg(plot.line_svg([s.values], [s.column], "no IMFs"), svg_path)
    return CommandResult(0, [path, svg_path], f"{s.column}: HHT of {len(frames)} IMFs")


def _train_config(cfg: dict, seed) -> nn.TrainConfig:
    return _build(nn.TrainConfig, cfg.get("train"), "train", seed=seed)


def cmd_train_forecaster(a, cfg) -> CommandResult:
    out = _out_dir(a.out)
    s = _series(_read_dataset(_need_in(a.inp)), a.sensor or "inlet_pressure")
    if not s.valid.all():
        raise PipelineError(f"models.train_forecaster failed: {s.column} has invalid samples; impute first")
    cc, ec, tc = _cnn_config(cfg), _emd_config(cfg), _train_config(cfg, a.seed)
    bundle, history = _step("models.train_forecaster", models.train_forecaster, s.values, cc, ec, tc)
    paths = models.save_forecaster(bundle, out)
    hist = os.path.join(out, "history.csv")
    nn.write_history(history, hist)
    return CommandResult(0, paths + [hist], f"trained CNN-EMD on {s.column} for {len(history)} epochs; "
                                            f"best val_mse {min(r.val_mse for r in history):.6g}")


def _point_arrays(ds: data.Dataset) -> tuple[np.ndarray, np.ndarray]:
    p = np.stack([s.values for s in ds.distribution_pressure], axis=1)
    q = np.stack([s.values for s in ds.distribution_flow], axis=1)
    return p, q


def _fusion_config(cfg: dict, n_points: int) -> models.FusionConfig:
    try:
        return _build(models.FusionConfig, cfg.get("fusion"), "fusion", n_points=n_points)
    except models.ModelError as exc:
        raise UsageError(str(exc)) from None


def cmd_train_fusion(a, cfg) -> CommandResult:
    out = _out_dir(a.out)
    ds = _read_dataset(_need_in(a.inp))
    if not all(s.valid.all() for s in ds.all_series()):
        raise PipelineError("models.train_fusion failed: dataset has invalid samples; impute first")
    if not ds.point_ids:
        raise PipelineError("models.train_fusion failed: dataset has no distribution points")
    fcfg = _fusion_config(cfg, len(ds.point_ids))
    cc, ec, tc = _cnn_config(cfg), _emd_config(cfg), _train_config(cfg, a.seed)
    inlet = ds.inlet.values
    windows = _step("models.imf_windows", models.imf_windows, inlet, cc, ec)
    branch, h1 = _step("models.train_forecaster", models.train_forecaster, inlet, cc, ec, tc, windows)
    p, q = _point_arrays(ds)
    start = max(cc.context, fcfg.lookback)
    fc = models.forecast_series(branch, inlet, start, windows[start - cc.context:])
    onehot = one_hot_matrix(data.time_feature_matrix(ds.inlet)) if fcfg.time_features else None
    fusion, h2 = _step("models.train_fusion", models.train_fusion, p, q, inlet, branch, fcfg, tc, fc, onehot)
    paths = models.save_fusion(fusion, out)
    hist = os.path.join(out, "history.csv")
    nn.write_history(h2, hist)
    return CommandResult(0, paths + [hist], f"trained fusion model over {len(ds.point_ids)} points "
                                            f"({len(h1)} + {len(h2)} epochs)")


def _is_fusion(model_dir: str) -> bool:
    with open(os.path.join(model_dir, "config.json"), encoding="utf-8") as fh:
        return json.load(fh).get("kind") == "fusion"


def cmd_predict(a, cfg) -> CommandResult:
    out = _out_dir(a.out)
    if not a.model:
        raise UsageError("predict needs --model <bundle dir>")
    src = _need_in(a.inp)
    ds = _read_dataset(src)
    fusion = _step("models.load_bundle", _is_fusion, a.model)
    if fusion:
        f = _step("models.load_fusion", models.load_fusion, a.model)
        s = ds.inlet
        if not all(x.valid.all() for x in ds.all_series()):
            raise PipelineError("models.predict_inlet failed: dataset has invalid samples; impute first")
        if len(ds.point_ids) != f.config.n_points:
            raise PipelineError(f"models.predict_inlet failed: bundle expects {f.config.n_points} points, "
                                f"data has {len(ds.point_ids)}")
        start = max(f.inlet_branch.config.context, f.config.lookback)
        p, q = _point_arrays(ds)
        onehot = one_hot_matrix(data.time_feature_matrix(s)) if f.config.time_features else None
        pred = _step("models.predict_inlet", models.predict_inlet_series, f, p, q, s.values, start,
                     None, onehot)
    else:
        b = _step("models.load_forecaster", models.load_forecaster, a.model)
        s = _series(ds, a.sensor or "inlet_pressure")
        if not s.valid.all():
            raise PipelineError(f"models.forecast_pressure failed: {s.column} has invalid samples")
        start = b.config.context
        pred = _step("models.forecast_pressure", models.forecast_series, b, s.values, start)
    stamps = s.timestamps()
    rows = ([data.format_timestamp(stamps[t]), t, s.sensor_id, repr(float(s.values[t])),
             repr(float(pred[t - start]))] for t in range(start, len(s)))
    path = _write_rows(os.path.join(out, "predictions.csv"),
                       ["DateTime", "index", "sensor_id", "actual", "predicted"], rows)
    return CommandResult(0, [path] + _carry_labels(src, out),
                         f"{len(pred)} one-step predictions for {s.column}")


def read_predictions(path: str) -> tuple[np.ndarray, str, np.ndarray, np.ndarray]:
    """``(index, sensor_id, actual, predicted)`` from a predictions CSV."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} holds no predictions")
    try:
        idx = np.array([int(r["index"]) for r in rows])
        act = np.array([float(r["actual"]) for r in rows])
        pred = np.array([float(r["predicted"]) for r in rows])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed predictions file {path}: {exc}") from None
    return idx, rows[0].get("sensor_id") or "", act, pred


def cmd_detect(a, cfg) -> CommandResult:
    out = _out_dir(a.out)
    src = _need_in(a.inp)
    dc = _build(DetectConfig, cfg.get("detect"), "detect", threshold=a.threshold)
    idx, sid, act, pred = _step("models.read_predictions", read_predictions, src)
    scores = _step("models.residual_scores", models.residual_scores, pred, act, dc.window)
    ev = _step("models.detect", models.detect, scores, dc.threshold, dc.min_duration, act - pred,
               a.sensor or sid, dc.merge_gap)
    base = int(idx[0])
    events = [data.AnomalyEvent(e.sensor_id, e.start_index + base, e.end_index + base,
                                e.peak_score, e.direction) for e in ev]
    ev_path = _write_text(os.path.join(out, "events.json"), _dump_json([e.to_dict() for e in events]))
    sc_path = _write_rows(os.path.join(out, "scores.csv"), ["index", "score"],
                          ([int(i), repr(float(v))] for i, v in zip(idx, scores)))
    return CommandResult(0, [ev_path, sc_path] + _carry_labels(src, out),
                         f"{len(events)} events at threshold {dc.threshold}")


def metrics_markdown(m: models.Metrics) -> str:
    lines = ["| metric | value |", "| --- | --- |"]
    for k, v in m.to_dict().items():
        lines.append(f"| {k} | {v:.4f} |" if isinstance(v, float) else f"| {k} | {v} |")
    return "\n".join(lines) + "\n"


def cmd_eval(a, cfg) -> CommandResult:
    out = _out_dir(a.out)
    src = _need_in(a.inp)
    dc = _build(DetectConfig, cfg.get("detect"), "detect", threshold=a.threshold)
    _, _, act, pred = _step("models.read_predictions", read_predictions, src)
    labels_path = a.labels or _labels_near(src)
    labels = _step("data.read_labels", _read_labels, labels_path) if os.path.exists(labels_path) else []
    if a.labels and not os.path.exists(a.labels):
        raise PipelineError(f"data.read_labels failed: {a.labels} does not exist")
    events_path = a.events or os.path.join(os.path.dirname(os.path.abspath(src)), "events.json")
    events = _step("data.read_labels", _read_labels, events_path) if os.path.exists(events_path) else []
    m = _step("models.evaluate", models.evaluate, events, labels, dc.tolerance, pred, act)
    mpath = _write_text(os.path.join(out, "metrics.json"), _dump_json(m.to_dict()))
    rpath = _write_text(os.path.join(out, "report.md"), "# Evaluation\n\n" + metrics_markdown(m))
    parts = [f"accuracy {m.accuracy:.2f}"]
    if m.f1 is not None:
        parts.append(f"f1 {m.f1:.3f}")
    return CommandResult(0, [mpath, rpath], ", ".join(parts))


COMMANDS = {
    "simulate": cmd_simulate,
    "inject": cmd_inject,
    "impute": cmd_impute,
    "acf": cmd_acf,
    "decompose": cmd_decompose,
    "hht": cmd_hht,
    "train-forecaster": cmd_train_forecaster,
    "train-fusion": cmd_train_fusion,
    "predict": cmd_predict,
    "detect": cmd_detect,
    "eval": cmd_eval,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wdn-pressure", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--in", dest="inp", help="input CSV")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for every random draw (default 0)")
    p.add_argument("--config", help="JSON config with synth/forest/emd/cnn_emd/fusion/train/detect sections")
    p.add_argument("--sensor", help="column name or sensor id (default inlet_pressure)")
    p.add_argument("--days", type=int)
    p.add_argument("--points", type=int)
    p.add_argument("--rate", type=float, help="missing-value injection rate")
    p.add_argument("--threshold", type=float, help="detection z-score threshold")
    p.add_argument("--model", help="bundle directory for predict")
    p.add_argument("--labels", help="ground-truth labels JSON for eval")
    p.add_argument("--events", help="detected events JSON for eval")
    p.add_argument("--save-model", action="store_true", help="impute: also write forest JSON files")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv: list[str]) -> CommandResult:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        if args.verbose:
            logging.basicConfig(level=logging.INFO)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        return CommandResult(2, [], f"usage error: {exc}")
    except SystemExit as exc:  # --help
        return CommandResult(0 if exc.code in (0, None) else 2, [], "")
    except PipelineError as exc:
        return CommandResult(1, [], str(exc))
    except (OSError, ValueError, RuntimeError) as exc:
        return CommandResult(1, [], f"pipeline error: {exc}")


def main(argv=None) -> int:
    res = run(sys.argv[1:] if argv is None else list(argv))
    if res.summary:
        print(res.summary, file=sys.stderr if res.exit_code else sys.stdout)
    for path in res.artifacts:
        print(path)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
