"""Layer definitions with explicit forward and backward passes.

Tensors are numpy arrays laid out ``[batch, time, channels]`` for sequence
layers and ``[batch, features]`` otherwise. Shapes passed to ``out_shape``
and ``init`` exclude the batch axis.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import ClassVar

import numpy as np

ACTIVATIONS = ("linear", "relu", "tanh")


class ShapeError(ValueError):
    pass


def _activate(name: str, z: np.ndarray):
    if name == "linear":
        return z, None
    if name == "relu":
        mask = z > 0
        return z * mask, mask
    if name == "tanh":
        a = np.tanh(z)
        return a, a
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(name: str, aux, g: np.ndarray) -> np.ndarray:
    if name == "linear":
        return g
    if name == "relu":
        return g * aux
    return g * (1.0 - aux * aux)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


class Layer:
    kind: ClassVar[str] = "layer"
    n_inputs: ClassVar[int] = 1

    def config(self) -> dict:
        return {"type": self.kind, **asdict(self)}

    def out_shape(self, in_shapes: list[tuple]) -> tuple:
        raise NotImplementedError

    def init(self, in_shapes: list[tuple], rng: np.random.Generator) -> dict[str, np.ndarray]:
        return {}

    def init_state(self, in_shapes: list[tuple]) -> dict[str, np.ndarray]:
        return {}

    def forward(self, params, state, xs, training):
        """Return ``(output, cache, state_update_or_None)``."""
        raise NotImplementedError

    def backward(self, params, cache, g):
        """Return ``(input_grads, param_grads)``."""
        raise NotImplementedError


@dataclass(frozen=True)
class Conv1D(Layer):
    """Causal dilated convolution; output keeps the input length."""

    filters: int
    kernel_size: int = 3
    dilation: int = 1
    activation: str = "relu"
    causal: bool = True
    kind: ClassVar[str] = "conv1d"

    def __post_init__(self):
        if self.filters < 1 or self.kernel_size < 1 or self.dilation < 1:
            raise ValueError("filters, kernel_size and dilation must be >= 1")
        if not self.causal:
            raise ValueError("only causal convolutions are supported")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def receptive_field(self) -> int:
        return (self.kernel_size - 1) * self.dilation + 1

    def out_shape(self, in_shapes):
        (s,) = in_shapes
        if len(s) != 2:
            raise ShapeError(f"Conv1D expects [time, channels] input, got {s}")
        return (s[0], self.filters)

    def init(self, in_shapes, rng):
        cin = in_shapes[0][1]
        k = self.kernel_size
        return {"kernel": glorot(rng, (k, cin, self.filters), k * cin, k * self.filters),
                "bias": np.zeros(self.filters)}

    def forward(self, params, state, xs, training):
        (x,) = xs
        w = params["kernel"]
        k, cin, f = w.shape
        if x.ndim != 3 or x.shape[2] != cin:
            raise ShapeError(f"Conv1D expects [batch, time, {cin}] input, got {x.shape}")
        b, t, _ = x.shape
        d = self.dilation
        pad = (k - 1) * d
        xp = np.concatenate((np.zeros((b, pad, cin)), x), axis=1) if pad else x
        cols = np.concatenate([xp[:, j * d: j * d + t, :] for j in range(k)], axis=2)
        cols2 = cols.reshape(b * t, k * cin)
        z = (cols2 @ w.reshape(k * cin, f) + params["bias"]).reshape(b, t, f)
        a, aux = _activate(self.activation, z)
        return a, {"cols": cols2, "aux": aux, "shape": (b, t, cin), "mask": aux if self.activation == "relu" else None}, None

    def backward(self, params, cache, g):
        w = params["kernel"]
        k, cin, f = w.shape
        b, t, _ = cache["shape"]
        d = self.dilation
        gz = _activate_grad(self.activation, cache["aux"], g).reshape(b * t, f)
        gw = (cache["cols"].T @ gz).reshape(k, cin, f)
        gb = gz.sum(axis=0)
        gcols = (gz @ w.reshape(k * cin, f).T).reshape(b, t, k, cin)
        pad = (k - 1) * d
        gxp = np.zeros((b, t + pad, cin))
        for j in range(k):
            gxp[:, j * d: j * d + t, :] += gcols[:, :, j, :]
        return [gxp[:, pad:, :]], {"kernel": gw, "bias": gb}


@dataclass(frozen=True)
class Dense(Layer):
    """Affine map over the last axis."""

    units: int
    activation: str = "linear"
    kind: ClassVar[str] = "dense"

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("units must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def out_shape(self, in_shapes):
        (s,) = in_shapes
        return (*s[:-1], self.units)

    def init(self, in_shapes, rng):
        cin = in_shapes[0][-1]
        return {"kernel": glorot(rng, (cin, self.units), cin, self.units),
                "bias": np.zeros(self.units)}

    def forward(self, params, state, xs, training):
        (x,) = xs
        w = params["kernel"]
        if x.shape[-1] != w.shape[0]:
            raise ShapeError(f"Dense expects last axis {w.shape[0]}, got {x.shape}")
        x2 = x.reshape(-1, w.shape[0])
        z = x2 @ w + params["bias"]
        a, aux = _activate(self.activation, z)
        return a.reshape(*x.shape[:-1], self.units), {"x": x2, "aux": aux, "shape": x.shape,
                                                      "mask": aux if self.activation == "relu" else None}, None

    def backward(self, params, cache, g):
        gz = _activate_grad(self.activation, cache["aux"], g.reshape(-1, self.units))
        gx = (gz @ params["kernel"].T).reshape(cache["shape"])
        return [gx], {"kernel": cache["x"].T @ gz, "bias": gz.sum(axis=0)}


@dataclass(frozen=True)
class LastStep(Layer):
    """Select the final time step of a sequence."""

    kind: ClassVar[str] = "last_step"

    def out_shape(self, in_shapes):
        (s,) = in_shapes
        if len(s) != 2:
            raise ShapeError(f"LastStep expects [time, channels] input, got {s}")
        return (s[1],)

    def forward(self, params, state, xs, training):
        (x,) = xs
        return x[:, -1, :], {"shape": x.shape}, None

    def backward(self, params, cache, g):
        gx = np.zeros(cache["shape"])
        gx[:, -1, :] = g
        return [gx], {}


@dataclass(frozen=True)
class Crop(Layer):
    """Keep only the trailing ``keep`` time steps of a sequence."""

    keep: int
    kind: ClassVar[str] = "crop"

    def __post_init__(self):
        if self.keep < 1:
            raise ValueError("keep must be >= 1")

    def out_shape(self, in_shapes):
        (s,) = in_shapes
        if len(s) != 2 or s[0] < self.keep:
            raise ShapeError(f"Crop({self.keep}) needs a [time >= {self.keep}, channels] input, got {s}")
        return (self.keep, s[1])

    def forward(self, params, state, xs, training):
        (x,) = xs
        return x[:, -self.keep:, :], {"shape": x.shape}, None

    def backward(self, params, cache, g):
        gx = np.zeros(cache["shape"])
        gx[:, -self.keep:, :] = g
        return [gx], {}


@dataclass(frozen=True)
class Concat(Layer):
    """Concatenate inputs along the last (feature) axis."""

    inputs: int = 2
    kind: ClassVar[str] = "concat"

    @property
    def n_inputs(self) -> int:  # type: ignore[override]
        return self.inputs

    def out_shape(self, in_shapes):
        lead = {tuple(s[:-1]) for s in in_shapes}
        if len(lead) != 1:
            raise ShapeError(f"Concat inputs disagree on leading extents: {in_shapes}")
        return (*in_shapes[0][:-1], sum(s[-1] for s in in_shapes))

    def forward(self, params, state, xs, training):
        return np.concatenate(xs, axis=-1), {"sizes": [x.shape[-1] for x in xs]}, None

    def backward(self, params, cache, g):
        cuts = np.cumsum(cache["sizes"])[:-1]
        return np.split(g, cuts, axis=-1), {}


@dataclass(frozen=True)
class BatchNorm(Layer):
    """Per-channel batch normalization with running statistics."""

    momentum: float = 0.99
    epsilon: float = 1e-3
    kind: ClassVar[str] = "batchnorm"

    def out_shape(self, in_shapes):
        return in_shapes[0]

    def init(self, in_shapes, rng):
        c = in_shapes[0][-1]
        return {"gamma": np.ones(c), "beta": np.zeros(c)}

    def init_state(self, in_shapes):
        c = in_shapes[0][-1]
        return {"moving_mean": np.zeros(c), "moving_var": np.ones(c)}

    def forward(self, params, state, xs, training):
        (x,) = xs
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            update = {"moving_mean": m * state["moving_mean"] + (1 - m) * mean,
                      "moving_var": m * state["moving_var"] + (1 - m) * var}
        else:
            mean, var, update = state["moving_mean"], state["moving_var"], None
        inv = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean) * inv
        return params["gamma"] * xhat + params["beta"], \
            {"xhat": xhat, "inv": inv, "training": training, "axes": axes}, update

    def backward(self, params, cache, g):
        xhat, inv, axes = cache["xhat"], cache["inv"], cache["axes"]
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gxhat = g * params["gamma"]
        if cache["training"]:
            n = g.size // g.shape[-1]
            gx = inv / n * (n * gxhat - gxhat.sum(axis=axes) - xhat * (gxhat * xhat).sum(axis=axes))
        else:
            gx = gxhat * inv
        return [gx], {"gamma": ggamma, "beta": gbeta}


@dataclass(frozen=True)
class LSTM(Layer):
    """Single-layer LSTM with zero initial state; gate order i, f, g, o."""

    units: int
    return_sequences: bool = False
    kind: ClassVar[str] = "lstm"

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("units must be >= 1")

    def out_shape(self, in_shapes):
        (s,) = in_shapes
        if len(s) != 2:
            raise ShapeError(f"LSTM expects [time, channels] input, got {s}")
        return (s[0], self.units) if self.return_sequences else (self.units,)

    def init(self, in_shapes, rng):
        cin, u = in_shapes[0][1], self.units
        rec = np.concatenate([orthogonal(rng, u, u) for _ in range(4)], axis=1)
        bias = np.zeros(4 * u)
        bias[u:2 * u] = 1.0
        return {"kernel": glorot(rng, (cin, 4 * u), cin, 4 * u), "recurrent": rec, "bias": bias}

    def forward(self, params, state, xs, training):
        (x,) = xs
        w, r, bias = params["kernel"], params["recurrent"], params["bias"]
        if x.ndim != 3 or x.shape[2] != w.shape[0]:
            raise ShapeError(f"LSTM expects [batch, time, {w.shape[0]}] input, got {x.shape}")
        b, t, cin = x.shape
        u = self.units
        xw = (x.reshape(b * t, cin) @ w + bias).reshape(b, t, 4 * u)
        h = np.zeros((b, u))
        c = np.zeros((b, u))
        gates = np.empty((t, b, 4 * u))
        cs = np.empty((t + 1, b, u))
        hs = np.empty((t + 1, b, u))
        tcs = np.empty((t, b, u))
        cs[0] = c
        hs[0] = h
        for s in range(t):
            z = xw[:, s, :] + h @ r
            gt = gates[s]
            gt[:, :u] = _sigmoid(z[:, :u])
            gt[:, u:2 * u] = _sigmoid(z[:, u:2 * u])
            gt[:, 2 * u:3 * u] = np.tanh(z[:, 2 * u:3 * u])
            gt[:, 3 * u:] = _sigmoid(z[:, 3 * u:])
            c = gt[:, u:2 * u] * c + gt[:, :u] * gt[:, 2 * u:3 * u]
            tc = np.tanh(c)
            h = gt[:, 3 * u:] * tc
            cs[s + 1] = c
            hs[s + 1] = h
            tcs[s] = tc
        out = hs[1:].transpose(1, 0, 2) if self.return_sequences else h
        return out, {"x": x, "gates": gates, "cs": cs, "hs": hs, "tcs": tcs}, None

    def backward(self, params, cache, g):
        w, r = params["kernel"], params["recurrent"]
        x, gates, cs, hs, tcs = cache["x"], cache["gates"], cache["cs"], cache["hs"], cache["tcs"]
        b, t, cin = x.shape
        u = self.units
        gz_all = np.empty((t, b, 4 * u))
        gr = np.zeros_like(r)
        dh_next = np.zeros((b, u))
        dc_next = np.zeros((b, u))
        for s in reversed(range(t)):
            dh = dh_next + (g[:, s, :] if self.return_sequences else (g if s == t - 1 else 0.0))
            gt = gates[s]
            i, f, gg, o = gt[:, :u], gt[:, u:2 * u], gt[:, 2 * u:3 * u], gt[:, 3 * u:]
            tc = tcs[s]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            gz = gz_all[s]
            gz[:, :u] = dc * gg * i * (1.0 - i)
            gz[:, u:2 * u] = dc * cs[s] * f * (1.0 - f)
            gz[:, 2 * u:3 * u] = dc * i * (1.0 - gg * gg)
            gz[:, 3 * u:] = dh * tc * o * (1.0 - o)
            gr += hs[s].T @ gz
            dh_next = gz @ r.T
            dc_next = dc * f
        gz2 = gz_all.transpose(1, 0, 2).reshape(b * t, 4 * u)
        gw = x.reshape(b * t, cin).T @ gz2
        gx = (gz2 @ w.T).reshape(b, t, cin)
        return [gx], {"kernel": gw, "recurrent": gr, "bias": gz2.sum(axis=0)}


LAYER_TYPES = {cls.kind: cls for cls in (Conv1D, Dense, LastStep, Crop, Concat, BatchNorm, LSTM)}


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    cls = LAYER_TYPES[cfg.pop("type")]
    return cls(**cfg)
