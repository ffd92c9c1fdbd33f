"""Diagnostics: single-neuron traces, firing-rate map export, run comparison."""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import TrainConfig
from .errors import ConfigError, DataError
from .layers import Context, SpikeNeuron


def analytic_trace(w_i: float, tau: float, times: np.ndarray) -> np.ndarray:
    """Closed-form subthreshold response to a constant input: wI(1 - e^(-t/tau))."""
    return w_i * (1.0 - np.exp(-np.asarray(times, dtype=np.float64) / tau))


def trace_neuron(mode: str, tau: float, w: float, duration: float, dt: float,
                 i_const: float = 1.0, spike_times=(), analytic: bool = False):
    """Subthreshold membrane trace as (t, V) columns.

    ``constant`` mode drives the neuron with X = w * I; ``impulses`` mode
    injects a unit-area impulse of weight w at each listed time, so the
    membrane jumps by w/tau regardless of dt. Analytic output is only
    available for constant input.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    times = np.arange(0.0, duration + 0.5 * dt, dt)
    if mode == "constant" and analytic:
        return times, analytic_trace(w * i_const, tau, times)
    if dt >= tau:
        warnings.warn(f"dt={dt} >= tau={tau}: the discrete map is not a valid "
                      "discretization at this resolution")
    if mode == "constant":
        drive = np.full(times.shape, w * i_const)
    elif mode == "impulses":
        drive = np.zeros(times.shape)
        for ts in spike_times:
            j = int(round(ts / dt))
            if 0 <= j < len(drive):
                drive[j] += w / dt
    else:
        raise ConfigError(f"unknown trace mode {mode!r}")
    v = np.zeros(times.shape)
    cur = 0.0
    for j, x in enumerate(drive):
        if j > 0:
            cur = cur + (dt / tau) * (-cur + x)
        v[j] = cur
    return times, v


def write_trace_csv(path, times: np.ndarray, v: np.ndarray):
    with open(path, "w", encoding="utf-8") as f:
        f.write("t,V\n")
        for t, val in zip(times, v):
            f.write(f"{t:.9g},{val:.12g}\n")


def write_pgm(path, image: np.ndarray):
    """8-bit binary portable graymap; input values expected in [0, 1]."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(img * 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def export_firing_maps(config: TrainConfig, ckpt_path, out_dir, *, layer_index: int,
                       channels, t_s: int | None = None, sample_indices=(0,)) -> list[str]:
    """Write per-step spike maps and cumulative firing-rate maps as PGM files."""
    from .trainer import Trainer

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(config)
    meta, arrays = load_checkpoint(ckpt_path)
    if meta["config_hash"] != config.config_hash():
        raise ConfigError(f"checkpoint {ckpt_path} does not match this config")
    trainer.net.load_state_arrays(arrays)

    layer = trainer.net.layers[layer_index] if 0 <= layer_index < len(trainer.net.layers) else None
    if not isinstance(layer, SpikeNeuron):
        raise ConfigError(f"layer {layer_index} is not a spiking-neuron layer")

    ds = trainer.dataset
    sample_indices = list(sample_indices)
    x = trainer._input_batch(ds.test_x[sample_indices], training=False)
    ctx = Context(training=False, rng=np.random.default_rng(config.seed),
                  tie_policy=config.tie_policy)
    trainer.net.forward(x, ctx)
    s_seq = layer._cache[2]  # [T, B, C, H, W]
    t_total = s_seq.shape[0]
    t_s = t_total if t_s is None else t_s
    if not 1 <= t_s <= t_total:
        raise ConfigError(f"T_s must be in [1, {t_total}], got {t_s}")
    written = []
    for bi, si in enumerate(sample_indices):
        for c in channels:
            if not 0 <= c < s_seq.shape[2]:
                raise ConfigError(f"channel {c} out of range (layer has {s_seq.shape[2]})")
            for t in range(t_s):
                p = out_dir / f"sample{si}_ch{c}_t{t}.pgm"
                write_pgm(p, s_seq[t, bi, c])
                written.append(str(p))
            rate = s_seq[:t_s, bi, c].mean(axis=0)
            p = out_dir / f"sample{si}_ch{c}_rate_Ts{t_s}.pgm"
            write_pgm(p, rate)
            written.append(str(p))
    return written


def load_runlog(run_dir) -> tuple[dict, list[dict]]:
    run_dir = Path(run_dir)
    try:
        with open(run_dir / "run_meta.json", "r", encoding="utf-8") as f:
            meta = json.load(f)
        with open(run_dir / "runlog.jsonl", "r", encoding="utf-8") as f:
            records = [json.loads(line) for line in f if line.strip()]
    except FileNotFoundError as e:
        raise DataError(f"{run_dir} is not a completed run directory: {e}")
    return meta, records


def compare_runs(run_dirs: list, out_path=None) -> dict:
    """Align per-epoch accuracy and tau trajectories across completed runs.

    For the first two runs, reports the per-layer tau gap
    max_i |tau_A(i) - tau_B(i)| at the first and last common epoch.
    """
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    runs = []
    for d in run_dirs:
        meta, records = load_runlog(d)
        if not records:
            raise DataError(f"{d}: empty run log")
        runs.append({"dir": str(d), "meta": meta, "records": records})
    ds0 = runs[0]["meta"]["config"]["dataset"]
    for r in runs[1:]:
        if r["meta"]["config"]["dataset"] != ds0:
            raise DataError(f"{r['dir']}: dataset differs from {runs[0]['dir']}")

    n = min(len(r["records"]) for r in runs)
    report = {
        "runs": [r["dir"] for r in runs],
        "epochs": n,
        "accuracy": {r["dir"]: [rec.get("test_acc", rec.get("val_acc"))
                                for rec in r["records"][:n]] for r in runs},
        "train_loss": {r["dir"]: [rec["train_loss"] for rec in r["records"][:n]]
                       for r in runs},
        "tau": {r["dir"]: [rec["tau"] for rec in r["records"][:n]] for r in runs},
    }

    tau_a = runs[0]["records"]
    tau_b = runs[1]["records"]
    shared = sorted(set(tau_a[0]["tau"]) & set(tau_b[0]["tau"]))
    if shared:
        def gap(rec_a, rec_b):
            return max(abs(rec_a["tau"][k] - rec_b["tau"][k]) for k in shared)
        report["tau_gap_start"] = gap(tau_a[0], tau_b[0])
        report["tau_gap_end"] = gap(tau_a[n - 1], tau_b[n - 1])
        report["tau_gathered"] = report["tau_gap_end"] < report["tau_gap_start"]
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
    return report
