"""Dual-branch classifier: recurrent branch over windows, dense branch over
static string bits, one shared sigmoid head. Gradients are available per branch."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..core import ApiSequence, Dataset, Label, Vocabulary
from .base import (ModelSpec, NetModel, TrainedModel, _sigmoid, fit_net,
                   hybrid_instances)
from .cells import CELL_TYPES, _glorot
from .nets import _dropout_mask


class HybridNet:
    variable_length = True

    def __init__(self, rng: np.random.Generator, vocab_size: int, hidden: int,
                 static_dim: int, cell: str = "gru"):
        self.config = {"kind": "hybrid", "vocab_size": vocab_size, "hidden": hidden,
                       "static_dim": static_dim, "cell": cell}
        self.hidden = hidden
        self.seq_cell = CELL_TYPES[cell](rng, vocab_size, hidden, prefix="seq_")
        self.params: dict[str, np.ndarray] = dict(self.seq_cell.params)
        self.params["sW0"] = _glorot(rng, static_dim, hidden)
        self.params["sb0"] = np.zeros(hidden)
        self.params["sW1"] = _glorot(rng, hidden, hidden)
        self.params["sb1"] = np.zeros(hidden)
        self.params["out_v"] = _glorot(rng, 2 * hidden, 1)[:, 0]
        self.params["out_b"] = np.zeros(1)

    def forward(self, X: np.ndarray, S: np.ndarray, dropout: float = 0.0,
                rng: np.random.Generator | None = None):
        mask_x = _dropout_mask(rng, X.shape, dropout)
        Xd = X * mask_x if mask_x is not None else X
        H, seq_cache = self.seq_cell.forward(Xd)
        h_seq = H[:, -1]
        relu0_pre = S @ self.params["sW0"] + self.params["sb0"]
        relu0 = relu0_pre > 0.0
        a0 = np.maximum(relu0_pre, 0.0)
        mask0 = _dropout_mask(rng, a0.shape, dropout)
        if mask0 is not None:
            a0 = a0 * mask0
        relu1_pre = a0 @ self.params["sW1"] + self.params["sb1"]
        relu1 = relu1_pre > 0.0
        a1 = np.maximum(relu1_pre, 0.0)
        mask1 = _dropout_mask(rng, a1.shape, dropout)
        if mask1 is not None:
            a1 = a1 * mask1
        read = np.concatenate([h_seq, a1], axis=1)
        logits = read @ self.params["out_v"] + self.params["out_b"][0]
        cache = (X.shape, S, seq_cache, mask_x, relu0, a0, mask0, relu1, a1, mask1, read)
        return logits, cache

    def backward(self, cache, dlogits: np.ndarray):
        x_shape, S, seq_cache, mask_x, relu0, a0, mask0, relu1, a1, mask1, read = cache
        B, T, _ = x_shape
        hid = self.hidden
        grads = {
            "out_v": read.T @ dlogits,
            "out_b": np.array([dlogits.sum()]),
        }
        d_read = np.outer(dlogits, self.params["out_v"])
        dH = np.zeros((B, T, hid))
        dH[:, -1] = d_read[:, :hid]
        dX, seq_grads = self.seq_cell.backward(dH, seq_cache)
        grads.update(seq_grads)
        if mask_x is not None:
            dX = dX * mask_x
        da1 = d_read[:, hid:]
        if mask1 is not None:
            da1 = da1 * mask1
        dz1 = da1 * relu1
        grads["sW1"] = a0.T @ dz1
        grads["sb1"] = dz1.sum(axis=0)
        da0 = dz1 @ self.params["sW1"].T
        if mask0 is not None:
            da0 = da0 * mask0
        dz0 = da0 * relu0
        grads["sW0"] = S.T @ dz0
        grads["sb0"] = dz0.sum(axis=0)
        dS = dz0 @ self.params["sW0"].T
        return grads, dX, dS


class HybridModel(TrainedModel):
    needs_static = True

    def __init__(self, spec: ModelSpec, vocab_size: int, vocab_hash: str, net: HybridNet):
        super().__init__(spec, vocab_size, vocab_hash)
        self.net = net

    def has_jacobian(self) -> bool:
        return True

    def accepts_any_length(self) -> bool:
        return True

    def score_pairs(self, W: np.ndarray, S: np.ndarray) -> np.ndarray:
        logits, _ = self.net.forward(np.asarray(W, dtype=np.float64),
                                     np.asarray(S, dtype=np.float64))
        return _sigmoid(logits)

    def score_windows(self, W: np.ndarray) -> np.ndarray:
        raise ValueError("hybrid model scores (window, static) pairs; use bind_static or score_pairs")

    def predict_pair(self, w: np.ndarray, bits: np.ndarray) -> tuple[Label, float]:
        score = float(self.score_pairs(self._check_window(w)[None], np.asarray(bits)[None])[0])
        return (Label.MALICIOUS if score >= 0.5 else Label.BENIGN), score

    def predict_sequence_pair(self, seq: ApiSequence | list[int], bits: np.ndarray) -> Label:
        W = self.sequence_windows(seq)
        S = np.tile(np.asarray(bits, dtype=np.float64), (W.shape[0], 1))
        return Label.MALICIOUS if (self.score_pairs(W, S) >= 0.5).any() else Label.BENIGN

    def _branch_grads(self, w: np.ndarray, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        _, cache = self.net.forward(self._check_window(w)[None],
                                    np.asarray(bits, dtype=np.float64)[None])
        _, dX, dS = self.net.backward(cache, np.ones(1))
        return dX[0], dS[0]

    def jacobian_window(self, w: np.ndarray, bits: np.ndarray) -> np.ndarray:
        return self._branch_grads(w, bits)[0]

    def gradient_static(self, w: np.ndarray, bits: np.ndarray) -> np.ndarray:
        return self._branch_grads(w, bits)[1]

    def input_jacobian(self, w: np.ndarray) -> np.ndarray:
        raise ValueError("hybrid Jacobian needs the paired static bits; use jacobian_window")

    def bind_static(self, bits: np.ndarray) -> "BoundHybrid":
        return BoundHybrid(self, np.asarray(bits, dtype=np.float64))


class BoundHybrid(TrainedModel):
    """Hybrid model with the static bits fixed: behaves like a plain window classifier."""

    def __init__(self, hybrid: HybridModel, bits: np.ndarray):
        super().__init__(hybrid.spec, hybrid.vocab_size, hybrid.vocab_hash)
        self.hybrid = hybrid
        self.bits = bits

    def has_jacobian(self) -> bool:
        return True

    def accepts_any_length(self) -> bool:
        return True

    def score_windows(self, W: np.ndarray) -> np.ndarray:
        W = np.asarray(W, dtype=np.float64)
        S = np.tile(self.bits, (W.shape[0], 1))
        return self.hybrid.score_pairs(W, S)

    def input_jacobian(self, w: np.ndarray) -> np.ndarray:
        return self.hybrid.jacobian_window(w, self.bits)


def train_hybrid(spec: ModelSpec, dataset: Dataset, vocab: Vocabulary,
                 val: Dataset | None = None) -> HybridModel:
    vocab_size = len(vocab)
    X, S, y = hybrid_instances(dataset, spec.window, vocab_size)
    if spec.static_dim and spec.static_dim != S.shape[1]:
        raise ValueError(f"spec.static_dim={spec.static_dim} but data carries {S.shape[1]} bits")
    spec.static_dim = int(S.shape[1])
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(7,)))
    net = HybridNet(rng, vocab_size, spec.hidden, spec.static_dim)
    val_arrays = hybrid_instances(val, spec.window, vocab_size) if val is not None else None
    report = fit_net(net, X, y, spec, statics=S, val=val_arrays)
    model = HybridModel(spec, vocab_size, vocab.content_hash(), net)
    model.report = report
    return model
