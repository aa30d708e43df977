"""Parameter-dict optimizers for the from-scratch networks."""

from __future__ import annotations

import numpy as np


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            params[k] -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1 - self.beta2 ** self.t)
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Adadelta:
    def __init__(self, lr: float, rho: float = 0.95, eps: float = 1e-6):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.acc_g: dict[str, np.ndarray] = {}
        self.acc_dx: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            if k not in self.acc_g:
                self.acc_g[k] = np.zeros_like(g)
                self.acc_dx[k] = np.zeros_like(g)
            self.acc_g[k] = self.rho * self.acc_g[k] + (1 - self.rho) * g * g
            dx = np.sqrt(self.acc_dx[k] + self.eps) / np.sqrt(self.acc_g[k] + self.eps) * g
            self.acc_dx[k] = self.rho * self.acc_dx[k] + (1 - self.rho) * dx * dx
            params[k] -= self.lr * dx


_OPTIMIZERS = {"sgd": Sgd, "adam": Adam, "adadelta": Adadelta}


def make_optimizer(name: str, lr: float):
    try:
        return _OPTIMIZERS[name](lr)
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; expected one of {sorted(_OPTIMIZERS)}") from None
