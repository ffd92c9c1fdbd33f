"""Dense-array kernels: matmul, 2-D convolution and its gradients.

Tensors are plain float64 numpy arrays in row-major order. Every kernel
is pure: inputs are never mutated, outputs are freshly allocated.
Convolution uses cross-correlation semantics (no kernel flip) with zero
padding, matching the mainstream deep-learning convention.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def _as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of [M,K] x [K,N]."""
    a = _as_f64(a)
    b = _as_f64(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def conv2d_out_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    return oh, ow


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Extract sliding patches of a [B,C,H,W] input.

    Returns [B, C*kh*kw, OH*OW]; a copy, so writes to it never alias x.
    """
    b, c, h, w = x.shape
    oh, ow = conv2d_out_hw(h, w, kh, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    sb, sc, sh, sw = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, kh, kw, oh, ow),
        strides=(sb, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return view.reshape(b, c * kh * kw, oh * ow).copy()


def col2im(cols: np.ndarray, x_shape: tuple, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add patch columns back onto the input grid."""
    b, c, h, w = x_shape
    oh, ow = conv2d_out_hw(h, w, kh, kw, stride, padding)
    hp, wp = h + 2 * padding, w + 2 * padding
    out = np.zeros((b, c, hp, wp))
    cols = cols.reshape(b, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    if padding:
        out = out[:, :, padding:hp - padding, padding:wp - padding]
    return out


def conv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlate [B,Cin,H,W] with [Cout,Cin,kh,kw], zero padding."""
    x = _as_f64(x)
    kernel = _as_f64(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D operands, got {x.shape} and {kernel.shape}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    b, cin, h, w = x.shape
    cout, cin_k, kh, kw = kernel.shape
    if cin != cin_k:
        raise ShapeError(f"input has {cin} channels but kernel expects {cin_k}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    oh, ow = conv2d_out_hw(h, w, kh, kw, stride, padding)
    cols = im2col(x, kh, kw, stride, padding)
    out = kernel.reshape(cout, -1) @ cols  # [B, Cout, OH*OW] via broadcasting
    return out.reshape(b, cout, oh, ow)


def conv2d_grads(
    x: np.ndarray,
    kernel: np.ndarray,
    upstream: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of conv2d w.r.t. input and kernel given upstream dL/dout."""
    x = _as_f64(x)
    kernel = _as_f64(kernel)
    upstream = _as_f64(upstream)
    b, cin, h, w = x.shape
    cout, _, kh, kw = kernel.shape
    oh, ow = conv2d_out_hw(h, w, kh, kw, stride, padding)
    if upstream.shape != (b, cout, oh, ow):
        raise ShapeError(f"upstream shape {upstream.shape} != forward output {(b, cout, oh, ow)}")
    cols = im2col(x, kh, kw, stride, padding)  # [B, Cin*kh*kw, L]
    up = upstream.reshape(b, cout, oh * ow)
    grad_kernel = np.einsum("bol,bkl->ok", up, cols).reshape(kernel.shape)
    grad_cols = np.einsum("ok,bol->bkl", kernel.reshape(cout, -1), up)
    grad_input = col2im(grad_cols, x.shape, kh, kw, stride, padding)
    return grad_input, grad_kernel
