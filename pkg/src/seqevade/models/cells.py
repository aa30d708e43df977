"""Recurrent cells with explicit backpropagation through time.

Shapes: inputs X are (batch, steps, in_dim); hidden trajectories H are
(batch, steps, hid). backward() takes dH, the loss gradient at every step's
hidden state, and returns (dX, grads). All arrays are float64.
"""

from __future__ import annotations

import numpy as np


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class RnnCell:
    """Elman cell: h_t = tanh(x_t Wx + h_{t-1} Wh + b)."""

    kind = "rnn"

    def __init__(self, rng: np.random.Generator, in_dim: int, hid: int, prefix: str = ""):
        self.in_dim, self.hid, self.prefix = in_dim, hid, prefix
        self.params = {
            prefix + "Wx": _glorot(rng, in_dim, hid),
            prefix + "Wh": _glorot(rng, hid, hid),
            prefix + "b": np.zeros(hid),
        }

    def forward(self, X: np.ndarray):
        p = self.prefix
        B, T, _ = X.shape
        H = np.zeros((B, T, self.hid))
        h = np.zeros((B, self.hid))
        for t in range(T):
            h = np.tanh(X[:, t] @ self.params[p + "Wx"] + h @ self.params[p + "Wh"] + self.params[p + "b"])
            H[:, t] = h
        return H, (X, H)

    def backward(self, dH: np.ndarray, cache):
        p = self.prefix
        X, H = cache
        B, T, _ = X.shape
        dX = np.zeros_like(X)
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dh_next = np.zeros((B, self.hid))
        for t in range(T - 1, -1, -1):
            h_prev = H[:, t - 1] if t > 0 else np.zeros((B, self.hid))
            dh = dH[:, t] + dh_next
            da = dh * (1.0 - H[:, t] ** 2)
            grads[p + "Wx"] += X[:, t].T @ da
            grads[p + "Wh"] += h_prev.T @ da
            grads[p + "b"] += da.sum(axis=0)
            dX[:, t] = da @ self.params[p + "Wx"].T
            dh_next = da @ self.params[p + "Wh"].T
        return dX, grads


class LstmCell:
    """Gate order in the fused weight matrices: input, forget, cell, output."""

    kind = "lstm"

    def __init__(self, rng: np.random.Generator, in_dim: int, hid: int, prefix: str = ""):
        self.in_dim, self.hid, self.prefix = in_dim, hid, prefix
        self.params = {
            prefix + "Wx": _glorot(rng, in_dim, 4 * hid),
            prefix + "Wh": _glorot(rng, hid, 4 * hid),
            prefix + "b": np.zeros(4 * hid),
        }

    def forward(self, X: np.ndarray):
        p = self.prefix
        B, T, _ = X.shape
        hid = self.hid
        H = np.zeros((B, T, hid))
        C = np.zeros((B, T, hid))
        gates = np.zeros((B, T, 4 * hid))
        h = np.zeros((B, hid))
        c = np.zeros((B, hid))
        for t in range(T):
            z = X[:, t] @ self.params[p + "Wx"] + h @ self.params[p + "Wh"] + self.params[p + "b"]
            i = _sigmoid(z[:, :hid])
            f = _sigmoid(z[:, hid:2 * hid])
            g = np.tanh(z[:, 2 * hid:3 * hid])
            o = _sigmoid(z[:, 3 * hid:])
            c = f * c + i * g
            h = o * np.tanh(c)
            gates[:, t] = np.concatenate([i, f, g, o], axis=1)
            H[:, t] = h
            C[:, t] = c
        return H, (X, H, C, gates)

    def backward(self, dH: np.ndarray, cache):
        p = self.prefix
        X, H, C, gates = cache
        B, T, _ = X.shape
        hid = self.hid
        dX = np.zeros_like(X)
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dh_next = np.zeros((B, hid))
        dc_next = np.zeros((B, hid))
        for t in range(T - 1, -1, -1):
            i = gates[:, t, :hid]
            f = gates[:, t, hid:2 * hid]
            g = gates[:, t, 2 * hid:3 * hid]
            o = gates[:, t, 3 * hid:]
            c = C[:, t]
            c_prev = C[:, t - 1] if t > 0 else np.zeros((B, hid))
            h_prev = H[:, t - 1] if t > 0 else np.zeros((B, hid))
            tanh_c = np.tanh(c)
            dh = dH[:, t] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            da = np.concatenate([
                di * i * (1 - i),
                df * f * (1 - f),
                dg * (1.0 - g ** 2),
                do * o * (1 - o),
            ], axis=1)
            grads[p + "Wx"] += X[:, t].T @ da
            grads[p + "Wh"] += h_prev.T @ da
            grads[p + "b"] += da.sum(axis=0)
            dX[:, t] = da @ self.params[p + "Wx"].T
            dh_next = da @ self.params[p + "Wh"].T
            dc_next = dc * f
        return dX, grads


class GruCell:
    """Gate order in the fused update/reset matrices: update (z), reset (r)."""

    kind = "gru"

    def __init__(self, rng: np.random.Generator, in_dim: int, hid: int, prefix: str = ""):
        self.in_dim, self.hid, self.prefix = in_dim, hid, prefix
        self.params = {
            prefix + "Wg": _glorot(rng, in_dim, 2 * hid),
            prefix + "Ug": _glorot(rng, hid, 2 * hid),
            prefix + "bg": np.zeros(2 * hid),
            prefix + "Wc": _glorot(rng, in_dim, hid),
            prefix + "Uc": _glorot(rng, hid, hid),
            prefix + "bc": np.zeros(hid),
        }

    def forward(self, X: np.ndarray):
        p = self.prefix
        B, T, _ = X.shape
        hid = self.hid
        H = np.zeros((B, T, hid))
        Z = np.zeros((B, T, hid))
        R = np.zeros((B, T, hid))
        Cand = np.zeros((B, T, hid))
        h = np.zeros((B, hid))
        for t in range(T):
            zr = _sigmoid(X[:, t] @ self.params[p + "Wg"] + h @ self.params[p + "Ug"] + self.params[p + "bg"])
            z, r = zr[:, :hid], zr[:, hid:]
            c = np.tanh(X[:, t] @ self.params[p + "Wc"] + (r * h) @ self.params[p + "Uc"] + self.params[p + "bc"])
            h = (1.0 - z) * h + z * c
            Z[:, t], R[:, t], Cand[:, t], H[:, t] = z, r, c, h
        return H, (X, H, Z, R, Cand)

    def backward(self, dH: np.ndarray, cache):
        p = self.prefix
        X, H, Z, R, Cand = cache
        B, T, _ = X.shape
        hid = self.hid
        dX = np.zeros_like(X)
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dh_next = np.zeros((B, hid))
        for t in range(T - 1, -1, -1):
            z, r, c = Z[:, t], R[:, t], Cand[:, t]
            h_prev = H[:, t - 1] if t > 0 else np.zeros((B, hid))
            dh = dH[:, t] + dh_next
            dz = dh * (c - h_prev)
            dc = dh * z
            dh_prev = dh * (1.0 - z)
            da_c = dc * (1.0 - c ** 2)
            d_rh = da_c @ self.params[p + "Uc"].T
            dr = d_rh * h_prev
            dh_prev += d_rh * r
            da_z = dz * z * (1 - z)
            da_r = dr * r * (1 - r)
            da_g = np.concatenate([da_z, da_r], axis=1)
            dh_prev += da_g @ self.params[p + "Ug"].T
            grads[p + "Wg"] += X[:, t].T @ da_g
            grads[p + "Ug"] += h_prev.T @ da_g
            grads[p + "bg"] += da_g.sum(axis=0)
            grads[p + "Wc"] += X[:, t].T @ da_c
            grads[p + "Uc"] += (r * h_prev).T @ da_c
            grads[p + "bc"] += da_c.sum(axis=0)
            dX[:, t] = da_g @ self.params[p + "Wg"].T + da_c @ self.params[p + "Wc"].T
            dh_next = dh_prev
        return dX, grads


CELL_TYPES = {"rnn": RnnCell, "lstm": LstmCell, "gru": GruCell}
