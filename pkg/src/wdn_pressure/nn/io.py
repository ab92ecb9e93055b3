"""Weight files: 8-byte magic, length-prefixed JSON manifest, float32 blob."""

from __future__ import annotations

import json
import struct

import numpy as np

from .graph import NetworkModel

MAGIC = b"NNW1\0\0\0\0"
VERSION = 1


class WeightFileError(ValueError):
    pass


def _tensors(model: NetworkModel):
    for k in sorted(model.weights):
        yield "weights", k, model.weights[k]
    for k in sorted(model.state):
        yield "state", k, model.state[k]


def weights_to_bytes(model: NetworkModel) -> bytes:
    entries, chunks, offset = [], [], 0
    for group, name, arr in _tensors(model):
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"group": group, "name": name, "shape": list(arr.shape),
                        "dtype": "float32", "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    manifest = json.dumps({"version": VERSION, "fingerprint": model.fingerprint(),
                           "tensors": entries, "blob_bytes": offset},
                          sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(manifest)) + manifest + b"".join(chunks)


def weights_from_bytes(model: NetworkModel, data: bytes) -> None:
    if data[:8] != MAGIC:
        raise WeightFileError("not a weight file (bad magic)")
    if len(data) < 12:
        raise WeightFileError("truncated weight file header")
    (mlen,) = struct.unpack("<I", data[8:12])
    try:
        manifest = json.loads(data[12:12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFileError(f"unreadable manifest: {exc}") from None
    if manifest.get("version") != VERSION:
        raise WeightFileError(f"unknown manifest version {manifest.get('version')!r}")
    if manifest.get("fingerprint") != model.fingerprint():
        raise WeightFileError("graph fingerprint mismatch: the file was saved from a different architecture")
    blob = data[12 + mlen:]
    if len(blob) != manifest["blob_bytes"]:
        raise WeightFileError(f"truncated blob: expected {manifest['blob_bytes']} bytes, found {len(blob)}")
    loaded = {"weights": {}, "state": {}}
    for e in manifest["tensors"]:
        count = int(np.prod(e["shape"], dtype=int))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=e["offset"])
        loaded[e["group"]][e["name"]] = arr.astype(np.float64).reshape(e["shape"])
    if set(loaded["weights"]) != set(model.weights) or set(loaded["state"]) != set(model.state):
        raise WeightFileError("weight file tensors do not match the model")
    model.weights = loaded["weights"]
    model.state = loaded["state"]


def save_weights(model: NetworkModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(weights_to_bytes(model))


def load_weights(model: NetworkModel, path) -> NetworkModel:
    with open(path, "rb") as fh:
        weights_from_bytes(model, fh.read())
    return model
