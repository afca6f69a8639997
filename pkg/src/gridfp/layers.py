"""Network layers with explicit backward passes.

Layers cache their last forward inputs; ``backward`` consumes that cache,
accumulates parameter gradients, and returns the input gradient. Activations
are plain ndarrays (the layer owns only its parameter Tensors). Dense and
conv layers accept a single example or a leading batch dimension.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import ParameterStore, Tensor, he_init, zeros_init

LEAKY_SLOPE = 0.2


def leaky_relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(x, 0.2x)."""
    return np.maximum(x, LEAKY_SLOPE * x)


def leaky_relu_grad(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # subgradient at 0 is 1 (>= comparison), fixed for determinism
    return gy * np.where(x >= 0, x.dtype.type(1), x.dtype.type(LEAKY_SLOPE))


class LeakyReLU:
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return leaky_relu(x)

    def backward(self, gy: np.ndarray) -> np.ndarray:
        return leaky_relu_grad(self._x, gy)


class Dense:
    """Affine layer y = x @ w + b with w of shape (n_in, n_out)."""

    def __init__(self, store: ParameterStore, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.w = store.create(f"{name}.w", he_init((n_in, n_out), n_in, rng, dtype))
        self.b = store.create(f"{name}.b", zeros_init((n_out,), dtype))

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.w.shape[0]:
            raise ValueError(f"dense input width {x.shape[-1]} != {self.w.shape[0]}")
        self._x = x
        return x @ self.w.values + self.b.values

    def backward(self, gy: np.ndarray) -> np.ndarray:
        x = self._x
        if x.ndim == 1:
            self.w.accumulate(np.outer(x, gy))
            self.b.accumulate(gy)
        else:
            self.w.accumulate(x.T @ gy)
            self.b.accumulate(gy.sum(axis=0))
        return gy @ self.w.values.T


class Conv2d:
    """Valid-padding cross-correlation over NHWC (or single HWC) input."""

    def __init__(self, store: ParameterStore, name: str, in_channels: int, out_channels: int,
                 kernel: int, stride: int, rng: np.random.Generator, dtype=np.float32):
        fan_in = kernel * kernel * in_channels
        self.k = store.create(f"{name}.k", he_init((kernel, kernel, in_channels, out_channels),
                                                   fan_in, rng, dtype))
        self.b = store.create(f"{name}.b", zeros_init((out_channels,), dtype))
        self.stride = stride

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.k.shape[0], self.k.shape[1]
        return (h - kh) // self.stride + 1, (w - kw) // self.stride + 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        self._x = x
        self._squeeze = squeeze
        y = kernels.conv2d_forward(x, self.k.values, self.b.values, self.stride)
        return y[0] if squeeze else y

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if self._squeeze:
            gy = gy[None]
        gx, gk, gb = kernels.conv2d_backward(self._x, self.k.values, self.stride, gy)
        self.k.accumulate(gk)
        self.b.accumulate(gb)
        return gx[0] if self._squeeze else gx


def masked_mse_loss(
    prediction: np.ndarray, target: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean squared error over unmasked components.

    Returns (loss, d_loss/d_prediction). The sum of squared differences is
    divided by the number of unmasked components in the batch; an all-zero
    mask yields loss 0 with a zero gradient.
    """
    if prediction.shape != target.shape or prediction.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: prediction {prediction.shape}, target {target.shape}, mask {mask.shape}"
        )
    count = float(mask.sum())
    if count == 0:
        return 0.0, np.zeros_like(prediction)
    diff = (prediction - target) * mask
    loss = float(np.sum(np.square(diff), dtype=np.float64) / count)
    grad = diff * prediction.dtype.type(2.0 / count)
    return loss, grad
