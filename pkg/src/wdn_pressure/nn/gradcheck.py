"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .graph import NetworkModel
from .optim import mse_loss


def _loss(model: NetworkModel, inputs, targets):
    out, tape = model.forward(inputs, training=True)
    total = 0.0
    grads = {}
    for name in model.outputs:
        loss, g = mse_loss(out[name], targets[name])
        total += loss
        grads[name] = g
    return total, tape, grads


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / (abs(a) + abs(n) + 1e-12)


def grad_check(model: NetworkModel, inputs: dict[str, np.ndarray], targets=None,
               eps: float = 1e-4, per_tensor: int = 20, check_inputs: bool = False,
               seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    Up to ``per_tensor`` entries are sampled from every weight tensor (and
    every input when ``check_inputs``). Entries whose perturbation flips a
    ReLU gate are resampled: the loss is not differentiable across the kink
    and central differences there measure the kink, not the gradient.
    Targets default to seeded normal draws shaped like the outputs.
    """
    rng = np.random.default_rng(seed)
    inputs = {k: np.array(v, dtype=float) for k, v in inputs.items()}
    if targets is None:
        out, _ = model.forward(inputs, training=True)
        targets = {k: rng.standard_normal(v.shape) for k, v in out.items()}
    elif not isinstance(targets, dict):
        targets = {model.outputs[0]: np.asarray(targets, dtype=float)}

    _, tape, gout = _loss(model, inputs, targets)
    base_sig = tape.relu_signature()
    wgrads, igrads = model.backward(tape, gout)

    tensors = [(model.weights, k, wgrads[k]) for k in sorted(model.weights)]
    if check_inputs:
        tensors += [(inputs, k, igrads[k]) for k in sorted(inputs)]

    worst = 0.0
    for store, key, analytic in tensors:
        arr = store[key]
        flat = arr.reshape(-1)
        candidates = rng.permutation(flat.size)
        checked = 0
        for idx in candidates:
            if checked >= per_tensor:
                break
            orig = flat[idx]
            flat[idx] = orig + eps
            lp, tp, _ = _loss(model, inputs, targets)
            flat[idx] = orig - eps
            lm, tm, _ = _loss(model, inputs, targets)
            flat[idx] = orig
            if tp.relu_signature() != base_sig or tm.relu_signature() != base_sig:
                continue
            numeric = (lp - lm) / (2.0 * eps)
            worst = max(worst, _rel_err(float(analytic.reshape(-1)[idx]), numeric))
            checked += 1
    return worst
