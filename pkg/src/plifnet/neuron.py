"""Discrete spiking neuron models.

A neuron layer runs the charge -> fire -> reset machine at every
time-step:

    H_t = V_{t-1} + k * (-(V_{t-1} - V_reset) + X_t)
    S_t = step(H_t - V_th)
    V_t = H_t * (1 - S_t) + V_reset * S_t     (hard reset)

LIF mode fixes k = 1/tau; PLIF mode learns a scalar `a` per layer with
k = sigmoid(a), which keeps the implied tau = 1/k inside (1, inf).
Backward passes use the arctan surrogate derivative in place of the
step function's distributional derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ShapeError


def clamp_k(a: float) -> float:
    """Sigmoid clamp mapping the raw parameter a to k in (0, 1)."""
    if a >= 0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


def clamp_k_prime(a: float) -> float:
    """d k / d a for the sigmoid clamp: k(a) * (1 - k(a))."""
    k = clamp_k(a)
    return k * (1.0 - k)


def a_from_tau(tau0: float) -> float:
    """Inverse of clamp_k at 1/tau0, i.e. the a giving an initial tau of tau0."""
    if not tau0 > 1.0:
        raise ValueError(f"tau0 must exceed 1, got {tau0}")
    return -math.log(tau0 - 1.0)


def charge(v_prev: np.ndarray, x: np.ndarray, k: float, v_reset: float) -> np.ndarray:
    """Membrane update H = V_prev + k * (-(V_prev - V_reset) + X)."""
    v_prev = np.asarray(v_prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if v_prev.shape != x.shape:
        raise ShapeError(f"charge: V {v_prev.shape} vs X {x.shape}")
    return v_prev + k * (-(v_prev - v_reset) + x)


def fire(h: np.ndarray, v_th: float) -> np.ndarray:
    """Heaviside spike: 1 where H >= V_th (firing at exact threshold), else 0."""
    return (np.asarray(h, dtype=np.float64) >= v_th).astype(np.float64)


def soft_fire(h: np.ndarray, v_th: float) -> np.ndarray:
    """Smooth stand-in for fire used by the gradient-check forward mode."""
    return np.arctan(np.pi * (np.asarray(h, dtype=np.float64) - v_th)) / np.pi + 0.5


def reset(h: np.ndarray, s: np.ndarray, v_reset: float, *, check_binary: bool = True) -> np.ndarray:
    """Hard reset V = H * (1 - S) + V_reset * S."""
    h = np.asarray(h, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if s.shape != h.shape:
        raise ShapeError(f"reset: H {h.shape} vs S {s.shape}")
    if check_binary and not np.all((s == 0.0) | (s == 1.0)):
        raise ContractViolation("reset expects a binary spike tensor")
    return h * (1.0 - s) + v_reset * s


def surrogate_grad(x: np.ndarray) -> np.ndarray:
    """Arctan surrogate derivative 1 / (1 + (pi x)^2)."""
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (1.0 + (np.pi * x) ** 2)


@dataclass
class NeuronLayer:
    """Mutable per-layer spiking state.

    mode is "lif" (fixed tau > 1) or "plif" (learnable a). V is created
    lazily at the first step of a forward pass and always starts at
    V_reset; state never carries across samples.
    """

    mode: str = "plif"
    tau: float = 2.0
    a: float = 0.0
    v_th: float = 1.0
    v_reset: float = 0.0
    detach_reset: bool = True
    v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("lif", "plif"):
            raise ValueError(f"unknown neuron mode {self.mode!r}")
        if self.mode == "lif" and not self.tau > 1.0:
            raise ValueError(f"LIF requires tau > 1, got {self.tau}")
        if not self.v_reset < self.v_th:
            raise ValueError(f"V_reset must be below V_th ({self.v_reset} >= {self.v_th})")

    @property
    def k(self) -> float:
        return 1.0 / self.tau if self.mode == "lif" else clamp_k(self.a)

    def reset_state(self) -> None:
        self.v = None

    def step(self, x_t: np.ndarray, *, soft: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """One charge/fire/reset step; returns (S_t, H_t, V_t) and mutates V."""
        x_t = np.asarray(x_t, dtype=np.float64)
        if self.v is None:
            self.v = np.full_like(x_t, self.v_reset)
        h = charge(self.v, x_t, self.k, self.v_reset)
        s = soft_fire(h, self.v_th) if soft else fire(h, self.v_th)
        v = reset(h, s, self.v_reset, check_binary=not soft)
        self.v = v
        return s, h, v
