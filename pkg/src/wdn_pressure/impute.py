"""Random-forest imputation of invalid samples from time-of-day features."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from typing import Union

import numpy as np

from .data import SensorSeries, time_feature_matrix, time_features

FEATURE_LAYOUT = ("day_of_month", "hour", "minute_slot")
N_CANDIDATES = 2  # ceil(sqrt(3))


class ImputeError(ValueError):
    pass


@dataclass(frozen=True)
class Leaf:
    mean_value: float


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    max_depth: int = 8
    min_leaf: int = 5
    bootstrap: bool = True
    seed: int = 0


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeNode, ...]
    n_trees: int
    max_depth: int
    min_leaf: int
    feature_layout: tuple[str, ...]
    seed: int
    kind: str = "pressure"

    def predict_features(self, feats: np.ndarray) -> np.ndarray:
        feats = np.atleast_2d(np.asarray(feats, dtype=float))
        total = np.zeros(len(feats))
        for tree in self.trees:
            total += _predict_tree(tree, feats)
        return total / len(self.trees)


# ---------------------------------------------------------------------------
# Tree growing
# ---------------------------------------------------------------------------

def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best variance-reduction threshold on one feature, or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(ys)
    csum = np.cumsum(ys)
    csq = np.cumsum(ys * ys)
    # candidate cut after position i (left = [0..i]); only between distinct values
    i = np.arange(min_leaf - 1, n - min_leaf)
    if len(i) == 0:
        return None
    i = i[xs[i] < xs[i + 1]]
    if len(i) == 0:
        return None
    nl = i + 1.0
    nr = n - nl
    sl, sr = csum[i], csum[-1] - csum[i]
    ql, qr = csq[i], csq[-1] - csq[i]
    sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
    k = int(np.argmin(sse))
    cut = i[k]
    return float(sse[k]), float((xs[cut] + xs[cut + 1]) / 2.0)


def _grow(X: np.ndarray, y: np.ndarray, depth: int, cfg: ForestConfig,
          rng: np.random.Generator) -> TreeNode:
    mean = float(np.mean(y))
    if depth >= cfg.max_depth or len(y) < 2 * cfg.min_leaf or np.all(y == y[0]):
        return Leaf(mean)
    parent_sse = float(np.sum((y - mean) ** 2))
    order = rng.permutation(X.shape[1])
    best = None
    # draw the candidate subset first; fall back to the others only if it has no usable split
    for group in (order[:N_CANDIDATES], order[N_CANDIDATES:]):
        for f in group:
            found = _best_split(X[:, f], y, cfg.min_leaf)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], int(f), found[1])
        if best is not None:
            break
    if best is None or best[0] >= parent_sse:
        return Leaf(mean)
    _, f, thr = best
    mask = X[:, f] <= thr
    return Split(f, thr,
                 _grow(X[mask], y[mask], depth + 1, cfg, rng),
                 _grow(X[~mask], y[~mask], depth + 1, cfg, rng))


def _predict_tree(node: TreeNode, feats: np.ndarray) -> np.ndarray:
    if isinstance(node, Leaf):
        return np.full(len(feats), node.mean_value)
    out = np.empty(len(feats))
    mask = feats[:, node.feature_index] <= node.threshold
    if mask.any():
        out[mask] = _predict_tree(node.left, feats[mask])
    if (~mask).any():
        out[~mask] = _predict_tree(node.right, feats[~mask])
    return out


def fit_forest(series: SensorSeries, cfg: ForestConfig = ForestConfig()) -> ForestModel:
    """Fit a regression forest mapping time features to the series' valid values.

    Tree ``i`` draws its bootstrap sample and feature candidates from a
    generator seeded with ``(cfg.seed, i)``.
    """
    if cfg.n_trees < 1:
        raise ImputeError("n_trees must be >= 1")
    X_all = time_feature_matrix(series).astype(float)
    X = X_all[series.valid]
    y = series.values[series.valid].astype(float)
    if len(y) < 2 * cfg.min_leaf:
        raise ImputeError(f"need at least {2 * cfg.min_leaf} valid samples, got {len(y)}")
    trees = []
    for i in range(cfg.n_trees):
        rng = np.random.default_rng([cfg.seed, i])
        if cfg.bootstrap:
            idx = rng.integers(0, len(y), len(y))
            Xi, yi = X[idx], y[idx]
        else:
            Xi, yi = X, y
        trees.append(_grow(Xi, yi, 0, cfg, rng))
    return ForestModel(tuple(trees), cfg.n_trees, cfg.max_depth, cfg.min_leaf,
                       FEATURE_LAYOUT, cfg.seed, "flow" if series.kind == "flow" else "pressure")


def predict_pressure(model: ForestModel, ts: datetime, cadence: int = 15) -> float:
    return float(model.predict_features(np.array([time_features(ts, cadence)]))[0])


def impute_series(series: SensorSeries, model: ForestModel) -> SensorSeries:
    """Replace every invalid sample by the forest prediction; mark all valid."""
    missing = ~series.valid
    if not missing.any():
        return series
    kind = "flow" if series.kind == "flow" else "pressure"
    if kind != model.kind:
        raise ImputeError(f"forest was fitted on {model.kind} data, series is {series.kind}")
    feats = time_feature_matrix(series)[missing]
    values = series.values.copy()
    values[missing] = model.predict_features(feats)
    return series.with_values(values, np.ones(len(series), dtype=bool))


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"mean_value": node.mean_value}
    return {"feature_index": node.feature_index, "threshold": node.threshold,
            "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}


def _node_from_dict(d: dict) -> TreeNode:
    if "mean_value" in d:
        return Leaf(float(d["mean_value"]))
    try:
        return Split(int(d["feature_index"]), float(d["threshold"]),
                     _node_from_dict(d["left"]), _node_from_dict(d["right"]))
    except KeyError as exc:
        raise ImputeError(f"tree node missing field {exc}") from None


def forest_to_json(model: ForestModel) -> str:
    doc = {"n_trees": model.n_trees, "max_depth": model.max_depth, "min_leaf": model.min_leaf,
           "feature_layout": list(model.feature_layout), "seed": model.seed, "kind": model.kind,
           "trees": [_node_to_dict(t) for t in model.trees]}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def forest_from_json(text: str) -> ForestModel:
    try:
        doc = json.loads(text)
        trees = tuple(_node_from_dict(t) for t in doc["trees"])
        model = ForestModel(trees, int(doc["n_trees"]), int(doc["max_depth"]), int(doc["min_leaf"]),
                            tuple(doc["feature_layout"]), int(doc["seed"]), str(doc.get("kind", "pressure")))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ImputeError(f"malformed forest document: {exc}") from None
    if model.n_trees != len(trees) or not trees:
        raise ImputeError("n_trees does not match the stored trees")
    return model
