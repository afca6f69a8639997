"""Dense tensors with explicit gradient slots, He initialization, and Adam.

All network state is float32; gradients are accumulated into a same-shape
``grad`` array by the explicit layer backward passes (there is no autodiff
graph). The ParameterStore owns every trainable tensor plus the Adam moment
arrays and step counter.
"""

from __future__ import annotations

import math

import numpy as np

ADAM_BETA1 = 0.95
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-4


class Tensor:
    """A shaped value array with an optional same-shape gradient array."""

    __slots__ = ("values", "grad")

    def __init__(self, values: np.ndarray):
        self.values = values
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def clear_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'})"


def he_init(shape, fan_in: int, rng: np.random.Generator, dtype=np.float32) -> Tensor:
    """Zero-mean Gaussian with variance 2/fan_in (no leaky-slope correction)."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    std = math.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype))


def zeros_init(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


class ParameterStore:
    """Named parameter tensors plus per-parameter Adam state.

    The step counter increments by exactly one per ``adam_step``. Moment
    arrays are created with each parameter and are not checkpointed.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def create(self, name: str, tensor: Tensor) -> Tensor:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already exists")
        self.params[name] = tensor
        self._m[name] = np.zeros_like(tensor.values)
        self._v[name] = np.zeros_like(tensor.values)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def clear_grads(self) -> None:
        for t in self.params.values():
            t.clear_grad()

    def copy_values(self) -> dict[str, np.ndarray]:
        """Snapshot of all parameter values (by value, for actor threads)."""
        return {name: t.values.copy() for name, t in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            src = values[name]
            if src.shape != t.values.shape:
                raise ValueError(f"shape mismatch for {name!r}: {src.shape} vs {t.values.shape}")
            np.copyto(t.values, src)

    def adam_step(
        self,
        learning_rate: float,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        eps: float = ADAM_EPS,
    ) -> None:
        """One Adam update with bias correction; clears all gradients."""
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        for name, t in self.params.items():
            if t.grad is None:
                raise RuntimeError(f"parameter {name!r} has no gradient; run a backward pass first")
        self.step_count += 1
        t_step = self.step_count
        bc1 = 1.0 - beta1**t_step
        bc2 = 1.0 - beta2**t_step
        for name, t in self.params.items():
            g = t.grad
            m = self._m[name]
            v = self._v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * np.square(g)
            t.values -= (learning_rate / bc1) * m / (np.sqrt(v / bc2) + eps)
            t.clear_grad()
