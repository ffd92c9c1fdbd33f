"""Training and evaluation loops with deterministic logging and checkpoints.

The run is fully determined by the config and seed: one PCG64 generator
drives initialization, shuffling, augmentation, dropout, and pooling tie
breaks, and its state travels inside checkpoints so a resumed run
reproduces the uninterrupted one byte for byte. Per-epoch wall times go
to a sidecar file so the run log itself stays deterministic.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .datasets import Dataset, load_dataset
from .errors import ConfigError, NumericError
from .layers import Context, Network, build_network
from .loss import split_train_val
from .optim import Adam, cosine_lr


def batch_targets(labels: np.ndarray, num_classes: int, t_steps: int) -> np.ndarray:
    """[T, B, C] target: ones on each sample's class at every step."""
    b = labels.shape[0]
    y = np.zeros((t_steps, b, num_classes))
    y[:, np.arange(b), labels] = 1.0
    return y


def batch_predict(out: np.ndarray) -> np.ndarray:
    """Argmax of per-class firing rate; ties resolve to the lowest index."""
    return out.mean(axis=0).argmax(axis=1)


class Trainer:
    def __init__(self, config: TrainConfig, resume: str | None = None):
        self.cfg = config.validate()
        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.dataset: Dataset = load_dataset(config.dataset, config.seed)
        self.rng = np.random.default_rng(config.seed)

        if config.protocol == "B":
            tr_idx, val_idx = split_train_val(self.dataset.train_y,
                                              config.val_fraction, config.seed)
            self.train_idx, self.val_idx = tr_idx, val_idx
        else:
            self.train_idx = np.arange(len(self.dataset.train_y))
            self.val_idx = None

        self.net: Network = build_network(
            config.network, self.dataset.input_shape, rng=self.rng,
            tau0=config.neuron.tau0, v_th=config.neuron.v_th,
            v_reset=config.neuron.v_reset, detach_reset=config.neuron.detach_reset,
            dropout_p=config.dropout_p)
        self.opt = Adam(self.net.params(), lr=config.lr)

        self.start_epoch = 0
        self.log_lines: list[dict] = []
        self.best_metric = -1.0
        self.best_epoch = -1
        if resume is not None:
            self._load(resume)

    # --- persistence ---------------------------------------------------------

    def _meta(self, next_epoch: int) -> dict:
        return {
            "config_hash": self.cfg.config_hash(),
            "epoch": next_epoch,
            "rng_state": self.rng.bit_generator.state,
            "best_metric": self.best_metric,
            "best_epoch": self.best_epoch,
            "log_lines": self.log_lines,
        }

    def _save(self, path, next_epoch: int):
        arrays = self.net.state_arrays() + self.opt.state_arrays()
        save_checkpoint(path, self._meta(next_epoch), arrays)

    def _load(self, path):
        meta, arrays = load_checkpoint(path)
        if meta["config_hash"] != self.cfg.config_hash():
            raise ConfigError(
                f"checkpoint {path} was produced under a different config "
                f"({meta['config_hash']} != {self.cfg.config_hash()}); refusing to resume")
        self.net.load_state_arrays(arrays)
        self.opt.load_state_arrays(arrays)
        self.rng.bit_generator.state = meta["rng_state"]
        self.start_epoch = meta["epoch"]
        self.best_metric = meta["best_metric"]
        self.best_epoch = meta["best_epoch"]
        self.log_lines = meta["log_lines"]

    def _write_runlog(self):
        with open(self.out_dir / "runlog.jsonl", "w", encoding="utf-8") as f:
            for rec in self.log_lines:
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    def _write_meta_files(self):
        with open(self.out_dir / "run_meta.json", "w", encoding="utf-8") as f:
            json.dump({"config": self.cfg.to_dict(),
                       "config_hash": self.cfg.config_hash()}, f, indent=2, sort_keys=True)

    # --- core loops ----------------------------------------------------------

    def _input_batch(self, x: np.ndarray, training: bool) -> np.ndarray:
        """Assemble [T, B, ...] input; static images repeat across steps."""
        ds = self.dataset
        if ds.static:
            if training and ds.augment:
                from .data import augment
                x = np.stack([augment(img, self.rng) for img in x])
            return np.broadcast_to(x, (ds.t_steps,) + x.shape).copy()
        return np.moveaxis(x, 0, 1).copy()  # [B, T, ...] -> [T, B, ...]

    def run_epoch(self, epoch: int) -> tuple[float, float]:
        ds = self.dataset
        cfg = self.cfg
        lr = cosine_lr(epoch, cfg.t_schedule, cfg.lr)
        order = self.train_idx[self.rng.permutation(len(self.train_idx))]
        ctx = Context(training=True, rng=self.rng, tie_policy=cfg.tie_policy)
        losses, correct, seen = [], 0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x = self._input_batch(ds.train_x[idx], training=True)
            labels = ds.train_y[idx]
            y = batch_targets(labels, ds.num_classes, ds.t_steps)
            out = self.net.forward(x, ctx)
            loss = float(np.mean((out - y) ** 2))
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss in epoch {epoch}, "
                                   f"batch {start // cfg.batch_size}")
            self.net.zero_grads()
            self.net.backward((2.0 / out.size) * (out - y), ctx)
            self.opt.step(lr)
            losses.append(loss)
            correct += int(np.sum(batch_predict(out) == labels))
            seen += len(idx)
        return float(np.mean(losses)), correct / max(seen, 1)

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> float:
        """Accuracy on a sample set; uses a fresh rng so training state is untouched."""
        ctx = Context(training=False, rng=np.random.default_rng(self.cfg.seed + 0x5EED),
                      tie_policy=self.cfg.tie_policy)
        correct = 0
        for start in range(0, len(y), self.cfg.batch_size):
            xb = self._input_batch(x[start:start + self.cfg.batch_size], training=False)
            out = self.net.forward(xb, ctx)
            correct += int(np.sum(batch_predict(out) == y[start:start + self.cfg.batch_size]))
        return correct / max(len(y), 1)

    def train(self) -> dict:
        ds = self.dataset
        cfg = self.cfg
        self._write_meta_files()
        times_path = self.out_dir / "runlog.times"
        for epoch in range(self.start_epoch, cfg.epochs):
            t0 = time.perf_counter()
            train_loss, train_acc = self.run_epoch(epoch)
            record = {
                "epoch": epoch,
                "lr": cosine_lr(epoch, cfg.t_schedule, cfg.lr),
                "train_loss": train_loss,
                "train_acc": train_acc,
                "tau": self.net.taus(),
            }
            if cfg.protocol == "A":
                test_acc = self.evaluate(ds.test_x, ds.test_y)
                record["test_acc"] = test_acc
                metric = test_acc
            else:
                val_acc = self.evaluate(ds.train_x[self.val_idx], ds.train_y[self.val_idx])
                record["val_acc"] = val_acc
                metric = val_acc
            self.log_lines.append(record)
            self._write_runlog()
            if metric > self.best_metric:
                self.best_metric = metric
                self.best_epoch = epoch
                self._save(self.out_dir / "best.ckpt", epoch + 1)
            self._save(self.out_dir / "last.ckpt", epoch + 1)
            with open(times_path, "a", encoding="utf-8") as f:
                f.write(f"{epoch}\t{time.perf_counter() - t0:.3f}\n")

        summary = {"protocol": cfg.protocol, "best_epoch": self.best_epoch,
                   "epochs": cfg.epochs}
        if cfg.protocol == "A":
            summary["reported_accuracy"] = max(
                (rec["test_acc"] for rec in self.log_lines), default=0.0)
        else:
            # single test evaluation at the best-validation checkpoint
            meta, arrays = load_checkpoint(self.out_dir / "best.ckpt")
            self.net.load_state_arrays(arrays)
            summary["reported_accuracy"] = self.evaluate(ds.test_x, ds.test_y)
            summary["best_val_accuracy"] = self.best_metric
        with open(self.out_dir / "report.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
        return summary


def evaluate_checkpoint(config: TrainConfig, ckpt_path) -> dict:
    """Stand-alone test-set evaluation of a saved checkpoint."""
    trainer = Trainer(config)
    meta, arrays = load_checkpoint(ckpt_path)
    if meta["config_hash"] != config.config_hash():
        raise ConfigError(f"checkpoint {ckpt_path} does not match this config")
    trainer.net.load_state_arrays(arrays)
    acc = trainer.evaluate(trainer.dataset.test_x, trainer.dataset.test_y)
    return {"test_acc": acc, "epoch": meta["epoch"]}
