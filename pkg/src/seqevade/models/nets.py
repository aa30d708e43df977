"""Window classifiers assembled from scratch. Every net exposes

    params   dict of float64 arrays (updated in place by the optimizers)
    forward(X, dropout=0.0, rng=None) -> (logits, cache)
    backward(cache, dlogits) -> (grads, dX)

X is (batch, steps, vocab) and logits are pre-sigmoid malicious scores, so
backward with dlogits of ones yields the input Jacobian.
"""

from __future__ import annotations

import numpy as np

from .cells import CELL_TYPES, _glorot


def _dropout_mask(rng: np.random.Generator | None, shape, rate: float):
    if rng is None or rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


class RecurrentNet:
    """Uni/bidirectional, optionally stacked recurrent net with a linear readout
    on the final hidden state(s). Accepts windows of any length."""

    variable_length = True

    def __init__(self, rng: np.random.Generator, vocab_size: int, hidden: int,
                 cell: str = "gru", bidirectional: bool = False, depth: int = 1):
        self.config = {"kind": "recurrent", "vocab_size": vocab_size, "hidden": hidden,
                       "cell": cell, "bidirectional": bidirectional, "depth": depth}
        cell_cls = CELL_TYPES[cell]
        self.hidden = hidden
        self.bidirectional = bidirectional
        self.layers = []
        in_dim = vocab_size
        for layer in range(depth):
            fwd = cell_cls(rng, in_dim, hidden, prefix=f"l{layer}f_")
            bwd = cell_cls(rng, in_dim, hidden, prefix=f"l{layer}b_") if bidirectional else None
            self.layers.append((fwd, bwd))
            in_dim = hidden * (2 if bidirectional else 1)
        self.read_dim = in_dim
        self.params: dict[str, np.ndarray] = {}
        for fwd, bwd in self.layers:
            self.params.update(fwd.params)
            if bwd is not None:
                self.params.update(bwd.params)
        self.params["out_v"] = _glorot(rng, self.read_dim, 1)[:, 0]
        self.params["out_b"] = np.zeros(1)

    def forward(self, X: np.ndarray, dropout: float = 0.0, rng: np.random.Generator | None = None):
        cur = X
        layer_caches = []
        read_parts = None
        for fwd, bwd in self.layers:
            mask = _dropout_mask(rng, cur.shape, dropout)
            inp = cur * mask if mask is not None else cur
            Hf, cf = fwd.forward(inp)
            if bwd is not None:
                Hb_rev, cb = bwd.forward(inp[:, ::-1])
                Hb = Hb_rev[:, ::-1]
                cur = np.concatenate([Hf, Hb], axis=2)
                read_parts = (Hf[:, -1], Hb[:, 0])
            else:
                cur = Hf
                cb = None
                read_parts = (Hf[:, -1],)
            layer_caches.append((mask, cf, cb))
        read = np.concatenate(read_parts, axis=1) if len(read_parts) > 1 else read_parts[0]
        logits = read @ self.params["out_v"] + self.params["out_b"][0]
        return logits, (X.shape, layer_caches, read)

    def backward(self, cache, dlogits: np.ndarray):
        x_shape, layer_caches, read = cache
        B, T, _ = x_shape
        grads = {
            "out_v": read.T @ dlogits,
            "out_b": np.array([dlogits.sum()]),
        }
        d_read = np.outer(dlogits, self.params["out_v"])
        hid = self.hidden
        dH = None
        for li in range(len(self.layers) - 1, -1, -1):
            fwd, bwd = self.layers[li]
            mask, cf, cb = layer_caches[li]
            width = hid * (2 if bwd is not None else 1)
            if dH is None:
                dH = np.zeros((B, T, width))
                if bwd is not None:
                    dH[:, -1, :hid] += d_read[:, :hid]
                    dH[:, 0, hid:] += d_read[:, hid:]
                else:
                    dH[:, -1] += d_read
            dXf, gf = fwd.backward(dH[:, :, :hid] if bwd is not None else dH, cf)
            grads.update(gf)
            dcur = dXf
            if bwd is not None:
                dXb_rev, gb = bwd.backward(dH[:, ::-1, hid:], cb)
                grads.update(gb)
                dcur = dcur + dXb_rev[:, ::-1]
            if mask is not None:
                dcur = dcur * mask
            dH = dcur
        return grads, dH


class MlpNet:
    """Dense ReLU stack on the flattened window."""

    variable_length = False

    def __init__(self, rng: np.random.Generator, window: int, vocab_size: int,
                 hidden: int, depth: int = 2):
        self.config = {"kind": "mlp", "window": window, "vocab_size": vocab_size,
                       "hidden": hidden, "depth": depth}
        self.depth = depth
        self.params: dict[str, np.ndarray] = {}
        in_dim = window * vocab_size
        for i in range(depth):
            self.params[f"W{i}"] = _glorot(rng, in_dim, hidden)
            self.params[f"b{i}"] = np.zeros(hidden)
            in_dim = hidden
        self.params["out_v"] = _glorot(rng, in_dim, 1)[:, 0]
        self.params["out_b"] = np.zeros(1)

    def forward(self, X: np.ndarray, dropout: float = 0.0, rng: np.random.Generator | None = None):
        B = X.shape[0]
        a = X.reshape(B, -1)
        acts = [a]
        masks = []
        for i in range(self.depth):
            z = a @ self.params[f"W{i}"] + self.params[f"b{i}"]
            a = np.maximum(z, 0.0)
            mask = _dropout_mask(rng, a.shape, dropout)
            if mask is not None:
                a = a * mask
            masks.append(mask)
            acts.append(a)
        logits = a @ self.params["out_v"] + self.params["out_b"][0]
        return logits, (X.shape, acts, masks)

    def backward(self, cache, dlogits: np.ndarray):
        x_shape, acts, masks = cache
        grads = {
            "out_v": acts[-1].T @ dlogits,
            "out_b": np.array([dlogits.sum()]),
        }
        da = np.outer(dlogits, self.params["out_v"])
        for i in range(self.depth - 1, -1, -1):
            if masks[i] is not None:
                da = da * masks[i]
            dz = da * (acts[i + 1] > 0.0)
            grads[f"W{i}"] = acts[i].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            da = dz @ self.params[f"W{i}"].T
        return grads, da.reshape(x_shape)


class CnnNet:
    """1-D convolution over time, global max pool, one dense layer, linear readout."""

    variable_length = False
    kernel = 3

    def __init__(self, rng: np.random.Generator, window: int, vocab_size: int, hidden: int):
        if window < self.kernel:
            raise ValueError(f"window must be >= {self.kernel} for the convolutional family")
        self.config = {"kind": "cnn", "window": window, "vocab_size": vocab_size, "hidden": hidden}
        self.vocab_size = vocab_size
        self.params = {
            "Wc": _glorot(rng, self.kernel * vocab_size, hidden),
            "bc": np.zeros(hidden),
            "W0": _glorot(rng, hidden, hidden),
            "b0": np.zeros(hidden),
            "out_v": _glorot(rng, hidden, 1)[:, 0],
            "out_b": np.zeros(1),
        }

    def _patches(self, X: np.ndarray) -> np.ndarray:
        # (B, T-k+1, k*V) with each patch laid out time-major.
        view = np.lib.stride_tricks.sliding_window_view(X, self.kernel, axis=1)
        return view.transpose(0, 1, 3, 2).reshape(X.shape[0], X.shape[1] - self.kernel + 1, -1)

    def forward(self, X: np.ndarray, dropout: float = 0.0, rng: np.random.Generator | None = None):
        patches = self._patches(X)
        conv = patches @ self.params["Wc"] + self.params["bc"]
        act = np.maximum(conv, 0.0)
        pool_idx = act.argmax(axis=1)
        pooled = np.take_along_axis(act, pool_idx[:, None, :], axis=1)[:, 0, :]
        z0 = pooled @ self.params["W0"] + self.params["b0"]
        relu0 = z0 > 0.0
        a0 = np.maximum(z0, 0.0)
        mask = _dropout_mask(rng, a0.shape, dropout)
        if mask is not None:
            a0 = a0 * mask
        logits = a0 @ self.params["out_v"] + self.params["out_b"][0]
        return logits, (X.shape, patches, act, pool_idx, pooled, relu0, a0, mask)

    def backward(self, cache, dlogits: np.ndarray):
        x_shape, patches, act, pool_idx, pooled, relu0, a0, mask = cache
        B, T, V = x_shape
        grads = {
            "out_v": a0.T @ dlogits,
            "out_b": np.array([dlogits.sum()]),
        }
        da0 = np.outer(dlogits, self.params["out_v"])
        if mask is not None:
            da0 = da0 * mask
        dz0 = da0 * relu0
        grads["W0"] = pooled.T @ dz0
        grads["b0"] = dz0.sum(axis=0)
        dpool = dz0 @ self.params["W0"].T
        dact = np.zeros_like(act)
        np.put_along_axis(dact, pool_idx[:, None, :], dpool[:, None, :], axis=1)
        dconv = dact * (act > 0.0)
        grads["Wc"] = patches.reshape(-1, patches.shape[-1]).T @ dconv.reshape(-1, dconv.shape[-1])
        grads["bc"] = dconv.sum(axis=(0, 1))
        dpatches = dconv @ self.params["Wc"].T
        dpatches = dpatches.reshape(B, T - self.kernel + 1, self.kernel, V)
        dX = np.zeros((B, T, V))
        for j in range(self.kernel):
            dX[:, j:j + T - self.kernel + 1] += dpatches[:, :, j, :]
        return grads, dX


class LinearNet:
    """Affine scorer on the flattened window; the basis for logreg and the linear SVM."""

    variable_length = False

    def __init__(self, rng: np.random.Generator, window: int, vocab_size: int):
        self.config = {"kind": "linear", "window": window, "vocab_size": vocab_size}
        self.params = {
            "w": _glorot(rng, window * vocab_size, 1)[:, 0],
            "b": np.zeros(1),
        }

    def forward(self, X: np.ndarray, dropout: float = 0.0, rng: np.random.Generator | None = None):
        B = X.shape[0]
        flat = X.reshape(B, -1)
        logits = flat @ self.params["w"] + self.params["b"][0]
        return logits, (X.shape, flat)

    def backward(self, cache, dlogits: np.ndarray):
        x_shape, flat = cache
        grads = {
            "w": flat.T @ dlogits,
            "b": np.array([dlogits.sum()]),
        }
        dX = np.outer(dlogits, self.params["w"]).reshape(x_shape)
        return grads, dX
