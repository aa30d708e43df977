"""Versioned model files: JSON header plus base64 parameter payload."""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .base import BoostModel, ForestModel, ModelSpec, NetModel, TrainedModel, build_net
from .hybrid import HybridModel, HybridNet
from .trees import BoostedTrees, RandomForest, TreeNode

FORMAT_NAME = "seqevade-model"
FORMAT_VERSION = 1


def _encode_params(params: dict[str, np.ndarray]) -> dict:
    out = {}
    for k in sorted(params):
        arr = np.ascontiguousarray(params[k], dtype=np.float64)
        out[k] = {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}
    return out


def _decode_params_into(params: dict[str, np.ndarray], payload: dict) -> None:
    for k, entry in payload.items():
        if k not in params:
            raise ValueError(f"model payload has unknown parameter {k!r}")
        arr = np.frombuffer(base64.b64decode(entry["data"]), dtype=np.float64).reshape(entry["shape"])
        if params[k].shape != arr.shape:
            raise ValueError(f"parameter {k!r} shape mismatch: {params[k].shape} vs {arr.shape}")
        params[k][...] = arr


def save_model(model: TrainedModel, path: str | Path) -> None:
    if isinstance(model, (NetModel, HybridModel)):
        payload = {"net_config": model.net.config, "params": _encode_params(model.net.params)}
    elif isinstance(model, ForestModel):
        payload = {"trees": [t.to_json() for t in model.forest.trees]}
    elif isinstance(model, BoostModel):
        payload = {"trees": [t.to_json() for t in model.booster.trees],
                   "base": model.booster.base,
                   "learning_rate": model.booster.learning_rate}
    else:
        raise ValueError(f"cannot serialize model of type {type(model).__name__}")
    doc = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "spec": model.spec.to_json(),
        "vocab_hash": model.vocab_hash,
        "vocab_size": model.vocab_size,
        "capabilities": model.capabilities,
        "report": model.report,
        "payload": payload,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a {FORMAT_NAME} file")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {doc.get('format_version')}")
    spec = ModelSpec.from_json(doc["spec"])
    vocab_size = int(doc["vocab_size"])
    vocab_hash = doc["vocab_hash"]
    payload = doc["payload"]
    if spec.family == "rf":
        forest = RandomForest([TreeNode.from_json(t) for t in payload["trees"]])
        model: TrainedModel = ForestModel(spec, vocab_size, vocab_hash, forest)
    elif spec.family == "gbdt":
        booster = BoostedTrees([TreeNode.from_json(t) for t in payload["trees"]],
                               base=float(payload["base"]),
                               learning_rate=float(payload["learning_rate"]))
        model = BoostModel(spec, vocab_size, vocab_hash, booster)
    elif spec.family == "hybrid":
        rng = np.random.default_rng(0)
        cfg = payload["net_config"]
        net = HybridNet(rng, cfg["vocab_size"], cfg["hidden"], cfg["static_dim"], cell=cfg["cell"])
        _decode_params_into(net.params, payload["params"])
        model = HybridModel(spec, vocab_size, vocab_hash, net)
    else:
        net = build_net(spec, vocab_size)
        _decode_params_into(net.params, payload["params"])
        model = NetModel(spec, vocab_size, vocab_hash, net)
    model.report = doc.get("report", {})
    return model
