"""Model files.

Layout (all integers little-endian)::

    b"DSNN" | u16 version | u32 header length | JSON header
    | u64 blob length | float64 parameter blob | sha256 of all preceding bytes

The JSON header carries the layer specs, input shape, class count,
standardisation vectors and free-form metadata; parameters are stored in the
order listed in the header.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .layers import layer_from_spec
from .model import Model

MAGIC = b"DSNN"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def model_to_dict(model: Model):
    header = {
        "name": model.name,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "layers": [layer.spec() for layer in model.layers],
        "params": [{"name": k, "shape": list(v.shape)} for k, v in model.params.items()],
        "norm": None if model.norm is None else {"mean": model.norm[0].tolist(),
                                                 "std": model.norm[1].tolist()},
        "meta": model.meta,
    }
    return header, {k: v.copy() for k, v in model.params.items()}


def model_from_dict(header: dict, params: dict) -> Model:
    layers = [layer_from_spec(spec) for spec in header["layers"]]
    norm = header.get("norm")
    model = Model(layers, header["input_shape"], header["num_classes"], name=header.get("name", ""),
                  norm=None if norm is None else (norm["mean"], norm["std"]), meta=header.get("meta"))
    target = model.params
    if set(target) != set(params):
        raise ModelFormatError("parameter names do not match the architecture")
    for k, v in params.items():
        if target[k].shape != v.shape:
            raise ModelFormatError(f"parameter {k} has shape {v.shape}, expected {target[k].shape}")
        target[k][...] = v
    return model


def dumps_model(model: Model) -> bytes:
    header, params = model_to_dict(model)
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(params[p["name"]], dtype="<f8").tobytes()
                    for p in header["params"])
    body = MAGIC + struct.pack("<HI", VERSION, len(hbytes)) + hbytes + struct.pack("<Q", len(blob)) + blob
    return body + hashlib.sha256(body).digest()


def loads_model(raw: bytes, num_classes: int | None = None) -> Model:
    if raw[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if len(raw) < 4 + 6 + 32:
        raise ModelFormatError("checksum failure: file truncated")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError("checksum failure: file corrupted or truncated")
    version, hlen = struct.unpack_from("<HI", body, 4)
    if version != VERSION:
        raise ModelFormatError(f"unsupported model file version {version} (expected {VERSION})")
    pos = 10
    header = json.loads(body[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (blen,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    blob = np.frombuffer(body[pos:pos + blen], dtype="<f8")
    params, off = {}, 0
    for p in header["params"]:
        n = int(np.prod(p["shape"])) if p["shape"] else 1
        params[p["name"]] = blob[off:off + n].astype(np.float64).reshape(p["shape"])
        off += n
    if off != blob.size:
        raise ModelFormatError("parameter blob size does not match header")
    if num_classes is not None and header["num_classes"] != num_classes:
        raise ModelFormatError(f"model has {header['num_classes']} classes, expected {num_classes}")
    return model_from_dict(header, params)


def save_model(model: Model, path):
    Path(path).write_bytes(dumps_model(model))


def load_model(path, num_classes: int | None = None) -> Model:
    return loads_model(Path(path).read_bytes(), num_classes=num_classes)
