"""Dataset ingestion: IDX images, AER event streams, and frame integration.

Event streams are carried in a documented CSV format (header ``t,x,y,p``,
microsecond integer timestamps) and integrated into [T, 2, H, W] count
frames by splitting the stream into T slices of nearly equal event count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


def load_idx(path) -> np.ndarray:
    """Read an IDX file: [N, H, W] float64 images or [N] int labels."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise DataError(f"{path}: truncated IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic == IDX_MAGIC_IMAGES:
        ndim = 3
    elif magic == IDX_MAGIC_LABELS:
        ndim = 1
    else:
        raise DataError(f"{path}: bad IDX magic 0x{magic:08x} at offset 0")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod([int(d) for d in dims], dtype=np.int64))
    if count < 0 or len(raw) - header < count:
        raise DataError(f"{path}: payload shorter than declared dimensions {dims}")
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header)
    if magic == IDX_MAGIC_LABELS:
        return data.astype(np.int64)
    return data.reshape(dims).astype(np.float64)


def write_idx(path, array: np.ndarray) -> None:
    """Write images [N,H,W] or labels [N] in the IDX byte format."""
    array = np.asarray(array)
    if array.ndim == 3:
        magic, dims = IDX_MAGIC_IMAGES, array.shape
    elif array.ndim == 1:
        magic, dims = IDX_MAGIC_LABELS, array.shape
    else:
        raise ShapeError(f"IDX supports [N,H,W] or [N], got {array.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{len(dims)}I", *dims))
        f.write(np.clip(np.round(array), 0, 255).astype(np.uint8).tobytes())


@dataclass
class EventStream:
    """Ordered AER events plus sensor geometry."""

    t: np.ndarray  # microseconds, non-decreasing
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray  # polarity in {0, 1}
    width: int
    height: int

    def __len__(self):
        return self.t.shape[0]


def parse_events_csv(path, width: int, height: int) -> EventStream:
    """Parse the ``t,x,y,p`` CSV container, validating bounds and ordering."""
    ts, xs, ys, ps = [], [], [], []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "t,x,y,p":
            raise DataError(f"{path}: expected header 't,x,y,p', got {header!r}")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                t, x, y, p = (int(v) for v in parts)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer field in {line!r}")
            if not 0 <= x < width:
                raise DataError(f"{path}:{lineno}: x={x} outside [0, {width})")
            if not 0 <= y < height:
                raise DataError(f"{path}:{lineno}: y={y} outside [0, {height})")
            if p not in (0, 1):
                raise DataError(f"{path}:{lineno}: polarity must be 0 or 1, got {p}")
            if ts and t < ts[-1]:
                raise DataError(f"{path}:{lineno}: timestamps decrease ({t} < {ts[-1]})")
            ts.append(t)
            xs.append(x)
            ys.append(y)
            ps.append(p)
    return EventStream(np.array(ts, dtype=np.int64), np.array(xs, dtype=np.int64),
                       np.array(ys, dtype=np.int64), np.array(ps, dtype=np.int64),
                       width, height)


def write_events_csv(path, ev: EventStream) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("t,x,y,p\n")
        for t, x, y, p in zip(ev.t, ev.x, ev.y, ev.p):
            f.write(f"{t},{x},{y},{p}\n")


def slice_bounds(n: int, t_steps: int) -> list[tuple[int, int]]:
    """Index ranges [j_l, j_r) of the T nearly-equal-count slices."""
    width = n // t_steps
    bounds = []
    for j in range(t_steps):
        jl = width * j
        jr = width * (j + 1) if j < t_steps - 1 else n
        bounds.append((jl, jr))
    return bounds


def integrate_frames(ev: EventStream, t_steps: int) -> np.ndarray:
    """Sum events into [T, 2, H, W] count frames, slicing by event index."""
    n = len(ev)
    if t_steps < 1 or n < t_steps:
        raise DataError(f"need at least T={t_steps} events, stream has {n}")
    frames = np.zeros((t_steps, 2, ev.height, ev.width), dtype=np.int64)
    for j, (jl, jr) in enumerate(slice_bounds(n, t_steps)):
        np.add.at(frames[j], (ev.p[jl:jr], ev.y[jl:jr], ev.x[jl:jr]), 1)
    return frames


FRAME_CACHE_MAGIC = b"PFC1"


def write_frame_cache(path, frames: np.ndarray) -> None:
    """Binary cache: magic, u32-LE header (T, 2, H, W), u32-LE counts row-major."""
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[1] != 2:
        raise ShapeError(f"frame tensor must be [T,2,H,W], got {frames.shape}")
    if np.any(frames < 0):
        raise DataError("frame counts must be non-negative")
    with open(path, "wb") as f:
        f.write(FRAME_CACHE_MAGIC)
        f.write(struct.pack("<4I", *frames.shape))
        f.write(frames.astype("<u4").tobytes())


def read_frame_cache(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != FRAME_CACHE_MAGIC:
        raise DataError(f"{path}: bad frame-cache magic {raw[:4]!r}")
    shape = struct.unpack("<4I", raw[4:20])
    count = int(np.prod(shape))
    if len(raw) - 20 < 4 * count:
        raise DataError(f"{path}: truncated frame cache")
    data = np.frombuffer(raw, dtype="<u4", count=count, offset=20)
    return data.reshape(shape).astype(np.int64)


def normalization_stats(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std over a [N, C, H, W] training set."""
    mean = images.mean(axis=(0, 2, 3))
    std = images.std(axis=(0, 2, 3))
    std = np.where(std == 0.0, 1.0, std)
    return mean, std


def normalize(images: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (images - mean.reshape(1, -1, 1, 1)) / std.reshape(1, -1, 1, 1)


def augment(image: np.ndarray, rng: np.random.Generator, pad: int = 4,
            flip: bool = True) -> np.ndarray:
    """Random horizontal flip then pad-and-random-crop back to input size."""
    c, h, w = image.shape
    out = image
    if flip and rng.random() < 0.5:
        out = out[:, :, ::-1]
    padded = np.pad(out, ((0, 0), (pad, pad), (pad, pad)))
    top = int(rng.integers(0, 2 * pad + 1))
    left = int(rng.integers(0, 2 * pad + 1))
    return padded[:, top:top + h, left:left + w].copy()
