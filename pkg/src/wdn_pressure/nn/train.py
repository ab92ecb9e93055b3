"""Mini-batch training with early stopping, plateau LR reduction and best-weight restore."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .graph import NetworkModel, to_float32_grid
from .optim import AdamState, adam_step, mse_loss

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-3
    early_stop_patience: int = 10
    lr_reduce_patience: int = 4
    lr_reduce_factor: float = 0.5
    min_lr: float = 1e-5
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.lr_reduce_factor < 1:
            raise ValueError("lr_reduce_factor must lie in (0, 1)")
        if self.early_stop_patience < 1 or self.lr_reduce_patience < 1:
            raise ValueError("patience values must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    lr: float


def chronological_split(n: int, validation_fraction: float) -> int:
    """Index where the validation tail starts."""
    n_val = max(1, int(round(n * validation_fraction)))
    split = n - n_val
    if split < 1:
        raise TrainingError(f"{n} samples leave no training data after the validation carve-out")
    return split


def evaluate_mse(model: NetworkModel, inputs: dict[str, np.ndarray], targets: np.ndarray,
                 batch_size: int = 512) -> float:
    pred = model.predict(inputs, batch_size)
    return mse_loss(pred, targets)[0]


def train(model: NetworkModel, inputs: dict[str, np.ndarray], targets: np.ndarray,
          cfg: TrainConfig = TrainConfig()) -> tuple[NetworkModel, list[EpochRecord]]:
    """Fit a single-output model in place and return it with its history.

    The last ``validation_fraction`` of samples (in the given order) form
    the validation set. Training batches are shuffled with a generator
    seeded from ``cfg.seed``; weights stay on the float32 grid after every
    step so the best state round-trips through a weight file bit-exactly.
    """
    targets = np.asarray(targets, dtype=float)
    n = len(targets)
    if n == 0:
        raise TrainingError("empty training set")
    for k, v in inputs.items():
        if len(v) != n:
            raise TrainingError(f"input {k!r} has {len(v)} samples, targets have {n}")
    split = chronological_split(n, cfg.validation_fraction)
    tr_in = {k: np.asarray(v[:split], dtype=float) for k, v in inputs.items()}
    va_in = {k: np.asarray(v[split:], dtype=float) for k, v in inputs.items()}
    tr_y, va_y = targets[:split], targets[split:]
    out_name = model.outputs[0]

    rng = np.random.default_rng(cfg.seed)
    state = model.adam_state or AdamState()
    lr = cfg.learning_rate
    best_val = math.inf
    best = (dict(model.weights), dict(model.state))
    since_best = 0
    since_reduce = 0
    history: list[EpochRecord] = []

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(split)
        total = 0.0
        for lo in range(0, split, cfg.batch_size):
            idx = np.sort(perm[lo:lo + cfg.batch_size])
            batch = {k: v[idx] for k, v in tr_in.items()}
            out, tape = model.forward(batch, training=True)
            loss, g = mse_loss(out[out_name], tr_y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}, batch starting {lo}")
            wgrads, _ = model.backward(tape, {out_name: g})
            weights, state = adam_step(model.weights, wgrads, state, lr)
            model.weights = {k: to_float32_grid(v) for k, v in weights.items()}
            model.apply_state_updates(tape.state_updates)
            total += loss * len(idx)
        train_mse = total / split
        val_mse = evaluate_mse(model, va_in, va_y)
        if not math.isfinite(val_mse):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochRecord(epoch, train_mse, val_mse, lr))
        log.debug("epoch %d train %.6g val %.6g lr %.3g", epoch, train_mse, val_mse, lr)

        if val_mse < best_val:
            best_val = val_mse
            best = (dict(model.weights), dict(model.state))
            since_best = 0
            since_reduce = 0
        else:
            since_best += 1
            since_reduce += 1
            if since_best >= cfg.early_stop_patience:
                break
            if since_reduce >= cfg.lr_reduce_patience and lr > cfg.min_lr:
                lr = max(cfg.min_lr, lr * cfg.lr_reduce_factor)
                since_reduce = 0

    model.weights, model.state = dict(best[0]), dict(best[1])
    model.adam_state = state
    return model, history


def write_history(history: list[EpochRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse", "lr"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_mse), repr(r.val_mse), repr(r.lr)])
