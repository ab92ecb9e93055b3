"""Layer graphs: construction, shape inference, forward and backward passes."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .layers import Layer, layer_from_config


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    name: str
    layer: Layer
    inputs: tuple[str, ...]


@dataclass
class Tape:
    """Everything a backward pass needs from one forward pass."""

    order: list[str]
    caches: dict[str, dict]
    state_updates: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def relu_signature(self) -> bytes:
        h = hashlib.sha256()
        for name in self.order:
            mask = self.caches[name].get("mask")
            if mask is not None:
                h.update(np.packbits(mask).tobytes())
        return h.digest()


def to_float32_grid(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


class NetworkModel:
    """A directed acyclic graph of layers with a flat weight store.

    Weights live in ``weights`` keyed ``"<node>/<param>"``; non-trainable
    layer statistics (batch-norm running moments) live in ``state`` under
    the same key scheme.
    """

    def __init__(self, inputs: dict[str, tuple], nodes: list[Node], outputs: list[str], seed: int = 0):
        self.input_shapes = {k: tuple(v) for k, v in inputs.items()}
        self.nodes = {n.name: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise GraphError("duplicate node names")
        clash = set(self.nodes) & set(self.input_shapes)
        if clash:
            raise GraphError(f"names used for both inputs and nodes: {sorted(clash)}")
        self.outputs = list(outputs)
        self.seed = seed
        self.order = self._toposort()
        for o in self.outputs:
            if o not in self.nodes and o not in self.input_shapes:
                raise GraphError(f"unknown output {o!r}")
        self.shapes: dict[str, tuple] = dict(self.input_shapes)
        rng = np.random.default_rng(seed)
        self.weights: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        for name in self.order:
            node = self.nodes[name]
            in_shapes = [self.shapes[i] for i in node.inputs]
            self.shapes[name] = node.layer.out_shape(in_shapes)
            for p, v in node.layer.init(in_shapes, rng).items():
                self.weights[f"{name}/{p}"] = to_float32_grid(v)
            for p, v in node.layer.init_state(in_shapes).items():
                self.state[f"{name}/{p}"] = to_float32_grid(v)
        self.adam_state = None

    def _toposort(self) -> list[str]:
        for n in self.nodes.values():
            if len(n.inputs) != n.layer.n_inputs:
                raise GraphError(f"node {n.name!r} takes {n.layer.n_inputs} inputs, got {len(n.inputs)}")
            for i in n.inputs:
                if i not in self.nodes and i not in self.input_shapes:
                    raise GraphError(f"node {n.name!r} reads unknown tensor {i!r}")
        order: list[str] = []
        mark: dict[str, int] = {}

        def visit(name: str, path: tuple):
            if name in self.input_shapes:
                return
            state = mark.get(name, 0)
            if state == 2:
                return
            if state == 1:
                raise GraphError(f"cycle detected through {' -> '.join(path + (name,))}")
            mark[name] = 1
            for i in self.nodes[name].inputs:
                visit(i, path + (name,))
            mark[name] = 2
            order.append(name)

        for name in self.nodes:
            visit(name, ())
        return order

    # -- structure -------------------------------------------------------

    def describe(self) -> dict:
        return {"inputs": {k: list(v) for k, v in sorted(self.input_shapes.items())},
                "nodes": [{"name": n, "layer": self.nodes[n].layer.config(),
                           "inputs": list(self.nodes[n].inputs)} for n in self.order],
                "outputs": self.outputs}

    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_description(cls, desc: dict, seed: int = 0) -> "NetworkModel":
        nodes = [Node(d["name"], layer_from_config(d["layer"]), tuple(d["inputs"])) for d in desc["nodes"]]
        return cls({k: tuple(v) for k, v in desc["inputs"].items()}, nodes, desc["outputs"], seed)

    def params_of(self, node: str) -> dict[str, np.ndarray]:
        prefix = node + "/"
        return {k[len(prefix):]: v for k, v in self.weights.items() if k.startswith(prefix)}

    def state_of(self, node: str) -> dict[str, np.ndarray]:
        prefix = node + "/"
        return {k[len(prefix):]: v for k, v in self.state.items() if k.startswith(prefix)}

    @property
    def n_trainable(self) -> int:
        return int(sum(v.size for v in self.weights.values()))

    def copy(self) -> "NetworkModel":
        return copy.deepcopy(self)

    def quantize(self) -> None:
        """Round every stored tensor onto the float32 grid used by weight files."""
        for k in self.weights:
            self.weights[k] = to_float32_grid(self.weights[k])
        for k in self.state:
            self.state[k] = to_float32_grid(self.state[k])

    def apply_state_updates(self, updates: dict[str, dict[str, np.ndarray]]) -> None:
        for node, upd in updates.items():
            for p, v in upd.items():
                self.state[f"{node}/{p}"] = to_float32_grid(v)

    # -- passes ----------------------------------------------------------

    def forward(self, inputs: dict[str, np.ndarray], training: bool = False):
        """Evaluate the graph; returns ``(outputs, tape)``."""
        missing = set(self.input_shapes) - set(inputs)
        if missing:
            raise GraphError(f"missing inputs: {sorted(missing)}")
        values: dict[str, np.ndarray] = {}
        for k, shape in self.input_shapes.items():
            x = np.asarray(inputs[k], dtype=float)
            if x.shape[1:] != shape:
                raise GraphError(f"input {k!r} expects shape [batch, {', '.join(map(str, shape))}], got {list(x.shape)}")
            values[k] = x
        tape = Tape(self.order, {})
        for name in self.order:
            node = self.nodes[name]
            out, cache, update = node.layer.forward(self.params_of(name), self.state_of(name),
                                                    [values[i] for i in node.inputs], training)
            values[name] = out
            tape.caches[name] = cache
            if update is not None:
                tape.state_updates[name] = update
        return {o: values[o] for o in self.outputs}, tape

    def backward(self, tape: Tape, grad_outputs: dict[str, np.ndarray]):
        """Back-propagate output gradients; returns ``(weight_grads, input_grads)``."""
        grads: dict[str, np.ndarray] = {}

        def accumulate(name, g):
            grads[name] = grads[name] + g if name in grads else g

        for o, g in grad_outputs.items():
            accumulate(o, np.asarray(g, dtype=float))
        wgrads = {k: np.zeros_like(v) for k, v in self.weights.items()}
        for name in reversed(self.order):
            if name not in grads:
                continue
            node = self.nodes[name]
            gin, gparams = node.layer.backward(self.params_of(name), tape.caches[name], grads.pop(name))
            for p, gp in gparams.items():
                wgrads[f"{name}/{p}"] = gp
            for i, gi in zip(node.inputs, gin):
                accumulate(i, gi)
        input_grads = {k: grads.get(k, np.zeros(1)) for k in self.input_shapes}
        return wgrads, input_grads

    def predict(self, inputs: dict[str, np.ndarray], batch_size: int = 512) -> np.ndarray:
        """Inference-mode output of a single-output graph, evaluated in batches."""
        n = len(next(iter(inputs.values())))
        out = []
        for lo in range(0, n, batch_size):
            y, _ = self.forward({k: v[lo:lo + batch_size] for k, v in inputs.items()})
            out.append(y[self.outputs[0]])
        return np.concatenate(out, axis=0)


class GraphBuilder:
    """Incremental construction helper for :class:`NetworkModel`."""

    def __init__(self):
        self._inputs: dict[str, tuple] = {}
        self._nodes: list[Node] = []

    def input(self, name: str, shape) -> str:
        self._inputs[name] = tuple(shape)
        return name

    def add(self, name: str, layer: Layer, *inputs: str) -> str:
        self._nodes.append(Node(name, layer, tuple(inputs)))
        return name

    def build(self, outputs, seed: int = 0) -> NetworkModel:
        if isinstance(outputs, str):
            outputs = [outputs]
        return NetworkModel(self._inputs, self._nodes, list(outputs), seed)


def forward(model: NetworkModel, inputs: dict[str, np.ndarray], training: bool = False):
    return model.forward(inputs, training)


def backward(model: NetworkModel, tape: Tape, grad_outputs: dict[str, np.ndarray]):
    return model.backward(tape, grad_outputs)
