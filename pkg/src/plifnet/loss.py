"""Training loss, target encoding, prediction, and evaluation protocols."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError


def encode_target(label: int, num_classes: int, t_steps: int) -> np.ndarray:
    """Target tensor Y[C, T]: ones on the labeled class row, zeros elsewhere."""
    if not 0 <= label < num_classes:
        raise ConfigError(f"label {label} out of range for {num_classes} classes")
    y = np.zeros((num_classes, t_steps))
    y[label, :] = 1.0
    return y


def mse_loss(o: np.ndarray, y: np.ndarray) -> float:
    """Mean over time of per-step mean squared error over classes.

    L = (1/T) sum_t (1/C) sum_i (o_ti - y_ti)^2, with O and Y as [C, T].
    """
    o = np.asarray(o, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if o.shape != y.shape:
        raise ShapeError(f"output {o.shape} vs target {y.shape}")
    return float(np.mean((o - y) ** 2))


def mse_loss_grad(o: np.ndarray, y: np.ndarray) -> np.ndarray:
    """dL/dO for mse_loss: (2 / (T*C)) * (O - Y)."""
    o = np.asarray(o, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if o.shape != y.shape:
        raise ShapeError(f"output {o.shape} vs target {y.shape}")
    return (2.0 / o.size) * (o - y)


def predict(o: np.ndarray) -> int:
    """Class with the maximum mean firing rate over time; ties -> lowest index."""
    o = np.asarray(o, dtype=np.float64)
    rates = o.mean(axis=1)
    return int(np.argmax(rates))


def split_train_val(labels: np.ndarray, fraction: float = 0.15,
                    seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-class stratified split; returns (train_idx, val_idx).

    The validation set takes round(fraction * n_c) samples of each class
    c, drawn by a seeded shuffle, so the split is deterministic.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise ConfigError(f"class {c} has no samples")
        idx = idx[rng.permutation(idx.size)]
        n_val = int(round(fraction * idx.size))
        val_idx.append(idx[:n_val])
        train_idx.append(idx[n_val:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(val_idx))


def evaluate_protocol(mode: str, test_acc_per_epoch=None, val_acc_per_epoch=None,
                      test_acc_at_best_val: float | None = None) -> float:
    """Reported accuracy under protocol A or B.

    A: running maximum of per-epoch test accuracy. B: the single test
    accuracy measured at the best-validation checkpoint.
    """
    if mode == "A":
        if not test_acc_per_epoch:
            raise ConfigError("protocol A needs per-epoch test accuracies")
        return float(max(test_acc_per_epoch))
    if mode == "B":
        if val_acc_per_epoch is None or test_acc_at_best_val is None:
            raise ConfigError("protocol B needs a validation history and a "
                              "test accuracy at the best-validation checkpoint")
        return float(test_acc_at_best_val)
    raise ConfigError(f"unknown protocol {mode!r}")
