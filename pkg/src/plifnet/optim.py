"""Adam optimizer and cosine-annealing learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError


class Adam:
    """Adam over named parameters; one shared instance updates weights
    and the per-layer membrane parameters alike."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)  # [(name, Param)]
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {n: np.zeros_like(p.value) for n, p in self.params}
        self.v = {n: np.zeros_like(p.value) for n, p in self.params}

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        for n, p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient for parameter {n!r}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for n, p in self.params:
            g = p.grad
            self.m[n] += (1.0 - self.beta1) * (g - self.m[n])
            self.v[n] += (1.0 - self.beta2) * (g * g - self.v[n])
            m_hat = self.m[n] / bc1
            v_hat = self.v[n] / bc2
            p.value -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self):
        items = [("adam.step", np.array([float(self.step_count)]))]
        for n, _ in self.params:
            items.append((f"adam.m.{n}", self.m[n]))
            items.append((f"adam.v.{n}", self.v[n]))
        return items

    def load_state_arrays(self, arrays):
        self.step_count = int(arrays["adam.step"][0])
        for n, _ in self.params:
            self.m[n][...] = arrays[f"adam.m.{n}"]
            self.v[n][...] = arrays[f"adam.v.{n}"]


def cosine_lr(epoch: int, t_schedule: int, lr_max: float, lr_min: float = 0.0) -> float:
    """Cosine annealing with warm restarts every t_schedule epochs."""
    phase = (epoch % t_schedule) / t_schedule
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * phase))
