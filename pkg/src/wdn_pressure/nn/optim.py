from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} differs from target shape {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.dot(diff.ravel(), diff.ravel()) / n), 2.0 * diff / n


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(weights: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new ``(weights, state)``.

    A non-finite gradient is logged and the step skipped: the inputs come
    back unchanged and the timestep does not advance.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            log.warning("non-finite gradient for %s; Adam step skipped", k)
            return weights, state
    t = state.t + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new_w, new_m, new_v = {}, {}, {}
    for k, w in weights.items():
        g = grads.get(k)
        m = state.m.get(k, np.zeros_like(w))
        v = state.v.get(k, np.zeros_like(w))
        if g is None:
            new_w[k], new_m[k], new_v[k] = w, m, v
            continue
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_w[k] = w - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k], new_v[k] = m, v
    return new_w, AdamState(new_m, new_v, t)
