"""Dataset assembly for the trainer, plus desk-scale preset builders."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as dio
from .config import DatasetConfig
from .errors import DataError


@dataclass
class Dataset:
    """Inputs ready for the training loop.

    For static images, ``train_x``/``test_x`` are [N, C, H, W] and the
    same (normalized) image is presented at every time-step. For frame
    sequences they are [N, T, C, H, W] and vary per step.
    """

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    t_steps: int
    static: bool
    num_classes: int
    augment: bool = False

    @property
    def input_shape(self) -> tuple:
        return tuple(self.train_x.shape[2:]) if not self.static else tuple(self.train_x.shape[1:])

    def sequence(self, x: np.ndarray) -> np.ndarray:
        """Per-sample input as a [T, ...] sequence."""
        if self.static:
            return np.broadcast_to(x, (self.t_steps,) + x.shape).copy()
        return x


def load_dataset(cfg: DatasetConfig, seed: int) -> Dataset:
    if cfg.kind == "idx":
        return _load_idx_dataset(cfg)
    if cfg.kind == "synth-xor":
        return make_temporal_xor(cfg, seed)
    if cfg.kind == "frames":
        return _load_frames_dataset(cfg)
    raise DataError(f"unknown dataset kind {cfg.kind!r}")


def _load_idx_dataset(cfg: DatasetConfig) -> Dataset:
    train_x = dio.load_idx(cfg.train_images)[:, None, :, :]  # add channel dim
    train_y = dio.load_idx(cfg.train_labels)
    test_x = dio.load_idx(cfg.test_images)[:, None, :, :]
    test_y = dio.load_idx(cfg.test_labels)
    if len(train_x) != len(train_y) or len(test_x) != len(test_y):
        raise DataError("image/label counts disagree")
    if cfg.limit_train:
        train_x, train_y = train_x[:cfg.limit_train], train_y[:cfg.limit_train]
    if cfg.limit_test:
        test_x, test_y = test_x[:cfg.limit_test], test_y[:cfg.limit_test]
    if cfg.normalize:
        train_x = train_x / 255.0
        test_x = test_x / 255.0
        mean, std = dio.normalization_stats(train_x)
        train_x = dio.normalize(train_x, mean, std)
        test_x = dio.normalize(test_x, mean, std)
    classes = int(max(train_y.max(), test_y.max())) + 1
    return Dataset(train_x, train_y, test_x, test_y, cfg.t_steps, True, classes,
                   augment=cfg.augment)


def _load_frames_dataset(cfg: DatasetConfig) -> Dataset:
    """Frame caches laid out as <dir>/{train,test}/<label>_<idx>.bin."""
    root = Path(cfg.frames_dir)

    def load_split(split):
        xs, ys = [], []
        for path in sorted((root / split).glob("*.bin")):
            label = int(path.stem.split("_")[0])
            xs.append(dio.read_frame_cache(path).astype(np.float64))
            ys.append(label)
        if not xs:
            raise DataError(f"no frame caches under {root / split}")
        return np.stack(xs), np.array(ys, dtype=np.int64)

    train_x, train_y = load_split("train")
    test_x, test_y = load_split("test")
    if train_x.shape[1] != cfg.t_steps:
        raise DataError(f"frame caches have T={train_x.shape[1]}, config says {cfg.t_steps}")
    classes = int(max(train_y.max(), test_y.max())) + 1
    return Dataset(train_x, train_y, test_x, test_y, cfg.t_steps, False, classes)


def make_temporal_xor(cfg: DatasetConfig, seed: int) -> Dataset:
    """Synthetic two-class task where the label depends on spike timing.

    Each sample is a [T, F] binary sequence with two marked feature
    groups; the class is the XOR of which half of the time window each
    group fires in. Rate codes are identical across classes, so the task
    is only solvable by reading timing, which is what distinguishes
    spike max-pooling from average pooling.
    """
    rng = np.random.default_rng(seed + 9173)
    t_steps, f = cfg.t_steps, cfg.n_features
    half = t_steps // 2
    if half < 1 or f < 4:
        raise DataError("temporal XOR needs T >= 2 and at least 4 features")

    def make(n):
        x = np.zeros((n, t_steps, f))
        y = np.zeros(n, dtype=np.int64)
        for i in range(n):
            early_a = int(rng.integers(0, 2))
            early_b = int(rng.integers(0, 2))
            y[i] = early_a ^ early_b
            ta = int(rng.integers(0, half)) if early_a else int(rng.integers(half, t_steps))
            tb = int(rng.integers(0, half)) if early_b else int(rng.integers(half, t_steps))
            x[i, ta, : f // 2] = 1.0
            x[i, tb, f // 2:] = 1.0
            # sparse background noise
            noise = rng.random((t_steps, f)) < 0.02
            x[i] = np.maximum(x[i], noise)
        return x, y

    train_x, train_y = make(cfg.n_train)
    test_x, test_y = make(cfg.n_test)
    return Dataset(train_x, train_y, test_x, test_y, t_steps, False, 2)


def build_digits_idx(out_dir, *, n_train: int = 1000, upscale: int = 28,
                     seed: int = 0) -> dict:
    """Materialize a small handwritten-digit dataset as IDX files.

    Backed by scikit-learn's bundled 8x8 digit scans, upsampled to
    ``upscale`` pixels, split into n_train training images with the rest
    held out for testing. A stand-in for MNIST-at-1k scale when the real
    IDX files are not on disk.
    """
    from sklearn.datasets import load_digits

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: out_dir / f"{name}.idx" for name in
             ("train_images", "train_labels", "test_images", "test_labels")}
    if all(p.exists() for p in paths.values()):
        return {k: str(v) for k, v in paths.items()}

    bunch = load_digits()
    images = bunch.images * (255.0 / 16.0)
    labels = bunch.target.astype(np.int64)
    rep = upscale // images.shape[1]
    big = np.kron(images, np.ones((rep, rep)))
    pad = upscale - big.shape[1]
    if pad:
        big = np.pad(big, ((0, 0), (0, pad), (0, pad)))
    order = np.random.default_rng(seed).permutation(len(big))
    big, labels = big[order], labels[order]
    dio.write_idx(paths["train_images"], big[:n_train])
    dio.write_idx(paths["train_labels"], labels[:n_train])
    dio.write_idx(paths["test_images"], big[n_train:])
    dio.write_idx(paths["test_labels"], labels[n_train:])
    return {k: str(v) for k, v in paths.items()}
