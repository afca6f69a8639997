"""NumPy implementations of the convolution kernels.

These are the fallback (and float64) code path; the compiled extension in
``_convkern`` provides the same operations for float32. Both operate on
NHWC activations and HWIO kernels with valid padding only.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Sliding-window view (N, Ho, Wo, kh, kw, C) of a contiguous NHWC array."""
    n, h, w, c = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    sn, sh, sw, sc = x.strides
    return as_strided(
        x,
        shape=(n, ho, wo, kh, kw, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )


def conv2d_forward(x: np.ndarray, k: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    win = _windows(x, k.shape[0], k.shape[1], stride)
    y = np.tensordot(win, k, axes=([3, 4, 5], [0, 1, 2]))
    y += b
    return np.ascontiguousarray(y)


def conv2d_backward(
    x: np.ndarray, k: np.ndarray, stride: int, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    kh, kw = k.shape[0], k.shape[1]
    ho, wo = gy.shape[1], gy.shape[2]
    win = _windows(x, kh, kw, stride)
    gb = gy.sum(axis=(0, 1, 2))
    gk = np.tensordot(win, gy, axes=([0, 1, 2], [0, 1, 2]))
    gx = np.zeros_like(x)
    for ky in range(kh):
        for kx in range(kw):
            patch = np.tensordot(gy, k[ky, kx], axes=([3], [1]))
            gx[:, ky : ky + ho * stride : stride, kx : kx + wo * stride : stride, :] += patch
    return gx, gk, gb
