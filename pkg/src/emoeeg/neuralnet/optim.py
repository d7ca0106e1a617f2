"""SGD, Adam and RMSProp updating a parameter dict in place."""
from __future__ import annotations

import numpy as np

OPTIMIZERS = ("sgd", "adam", "rmsprop")


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            params[k] -= params[k].dtype.type(self.lr) * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1.0 - b1 ** self.t, 1.0 - b2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m *= b1
            m += (1.0 - b1) * g
            v = self.v[k]
            v *= b2
            v += (1.0 - b2) * g * g
            upd = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            params[k] -= upd.astype(params[k].dtype)


class RMSProp:
    def __init__(self, lr: float, decay: float = 0.9, eps: float = 1e-8):
        self.lr, self.decay, self.eps = lr, decay, eps
        self.v = {}

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            v = self.v.get(k)
            if v is None:
                v = self.v[k] = np.zeros_like(g)
            v *= self.decay
            v += (1.0 - self.decay) * g * g
            params[k] -= (self.lr * g / (np.sqrt(v) + self.eps)).astype(params[k].dtype)


def make_optimizer(name: str, lr: float, **kwargs):
    name = name.lower()
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr, **kwargs)
    if name == "rmsprop":
        return RMSProp(lr, **kwargs)
    raise ValueError(f"unknown optimizer {name!r}; choose from {OPTIMIZERS}")
