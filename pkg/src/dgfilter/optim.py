"""Adam (bias-corrected) and plain SGD over :class:`~dgfilter.autograd.Parameter` lists."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterable

import numpy as np


class MissingGradientError(RuntimeError):
    pass


class Adam:
    def __init__(self, params: Iterable, lr: float = 2e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = [p for p in params if p.requires_grad]
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = OrderedDict((p.name, np.zeros_like(p.data)) for p in self.params)
        self.v = OrderedDict((p.name, np.zeros_like(p.data)) for p in self.params)

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p in self.params:
            if p.grad is None:
                raise MissingGradientError(f"parameter {p.name!r} has no gradient")
            g = p.grad
            m, v = self.m[p.name], self.v[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

    def state_tensors(self, prefix: str) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for name in self.m:
            out[f"{prefix}.m.{name}"] = self.m[name]
            out[f"{prefix}.v.{name}"] = self.v[name]
        return out

    def load_state_tensors(self, prefix: str, tensors, t: int):
        for name in self.m:
            self.m[name][...] = tensors[f"{prefix}.m.{name}"]
            self.v[name][...] = tensors[f"{prefix}.v.{name}"]
        self.t = int(t)


def adam_step(state: Adam, params=None, grads=None):
    """Functional entry point; ``grads`` (name -> array), if given, overwrite ``.grad`` first."""
    if grads is not None:
        lookup = {p.name: p for p in state.params}
        for name, g in grads.items():
            lookup[name].grad = np.asarray(g, dtype=lookup[name].dtype)
    state.step()
    return state


class SGD:
    def __init__(self, params: Iterable, lr: float = 2e-4):
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise MissingGradientError(f"parameter {p.name!r} has no gradient")
            p.data -= (self.lr * p.grad).astype(p.dtype)
