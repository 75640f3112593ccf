"""Model checkpoints: a JSON document with base64 little-endian tensor blobs.

Keys are sorted and tensors are written in ``state_dict`` order, so saving the
same parameters twice gives identical bytes.
"""
from __future__ import annotations

import base64
import hashlib
import json

import numpy as np
import torch

from .encoder import Vocabulary
from .selector import EventModel, ModelConfig

FORMAT = "bleached-checkpoint"
VERSION = 1

_DTYPES = {torch.float64: "<f8", torch.float32: "<f4"}


class CheckpointError(ValueError):
    pass


def _blob(t: torch.Tensor) -> dict:
    t = t.detach().cpu()
    code = _DTYPES.get(t.dtype)
    if code is None:
        raise CheckpointError(f"unsupported dtype {t.dtype}")
    raw = np.ascontiguousarray(t.numpy().astype(code)).tobytes()
    return {"dtype": code, "shape": list(t.shape), "data": base64.b64encode(raw).decode("ascii")}


def _unblob(obj: dict) -> torch.Tensor:
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype=obj["dtype"]).reshape(obj["shape"])
    return torch.from_numpy(arr.copy())


def dumps(model: EventModel, meta: dict | None = None) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config": model.config.to_dict(),
        "vocab": model.vocab.to_list(),
        "tensors": {name: _blob(t) for name, t in model.state_dict().items()},
        "meta": meta or {},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def save(model: EventModel, path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps(model, meta))


def loads(text: str) -> EventModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a checkpoint: {exc}") from None
    if doc.get("format") != FORMAT:
        raise CheckpointError("not a checkpoint file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    config = ModelConfig.from_dict(doc["config"])
    vocab = Vocabulary.from_list(doc["vocab"], lowercase=config.encoder.lowercase)
    model = EventModel(vocab, config)
    tensors = {k: _unblob(v) for k, v in doc["tensors"].items()}
    dtype = next(iter(tensors.values())).dtype if tensors else torch.float64
    model.to(dtype)
    missing, unexpected = model.load_state_dict(tensors, strict=False)
    if missing or unexpected:
        raise CheckpointError(f"tensor mismatch: missing={missing} unexpected={unexpected}")
    model.eval()
    model.meta = doc.get("meta", {})
    return model


def load(path) -> EventModel:
    with open(path, encoding="ascii") as fh:
        return loads(fh.read())


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
