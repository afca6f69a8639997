"""Kernel backend selection.

The compiled Cython kernels are used for float32 when available; the NumPy
implementations serve as the fallback and as the float64 path (used by the
finite-difference test rig). Set GRIDFP_KERNELS=numpy|compiled to force a
backend; the default ``auto`` prefers the compiled one.
"""

from __future__ import annotations

import os

import numpy as np

from . import reference

try:
    from . import _convkern
except ImportError:  # extension not built
    _convkern = None

_choice = os.environ.get("GRIDFP_KERNELS", "auto")
if _choice not in ("auto", "compiled", "numpy"):
    raise ValueError(f"GRIDFP_KERNELS must be auto, compiled or numpy, got {_choice!r}")
if _choice == "compiled" and _convkern is None:
    raise ImportError("GRIDFP_KERNELS=compiled but the gridfp.kernels._convkern extension is not built")

_use_compiled = _convkern is not None and _choice != "numpy"

# In auto mode small batches go to the compiled kernels (per-call latency wins)
# and large batches to the BLAS-backed NumPy path (throughput wins).
_AUTO_MAX_COMPILED_BATCH = 2


def _compiled_for(x: np.ndarray) -> bool:
    if not _use_compiled or x.dtype != np.float32:
        return False
    if _choice == "compiled":
        return True
    return x.shape[0] <= _AUTO_MAX_COMPILED_BATCH


def backend() -> str:
    """Name of the active float32 kernel backend."""
    return "compiled" if _use_compiled else "numpy"


def compiled_available() -> bool:
    return _convkern is not None


def _check_conv_args(x: np.ndarray, k: np.ndarray, b: np.ndarray, stride: int) -> None:
    if x.ndim != 4 or k.ndim != 4 or b.ndim != 1:
        raise ValueError(f"conv2d expects NHWC input, HWIO kernels, 1-d bias; got {x.shape}, {k.shape}, {b.shape}")
    if k.shape[2] != x.shape[3]:
        raise ValueError(f"kernel input channels {k.shape[2]} != input channels {x.shape[3]}")
    if k.shape[3] != b.shape[0]:
        raise ValueError(f"kernel output channels {k.shape[3]} != bias length {b.shape[0]}")
    if k.shape[0] > x.shape[1] or k.shape[1] > x.shape[2]:
        raise ValueError(f"kernel {k.shape[:2]} larger than input extent {x.shape[1:3]}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")


def conv2d_forward(x: np.ndarray, k: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    """Valid-padding cross-correlation: (N,H,W,Ci) x (kh,kw,Ci,Co) -> (N,Ho,Wo,Co)."""
    _check_conv_args(x, k, b, stride)
    if _use_compiled and x.dtype == np.float32:
        return _convkern.conv2d_forward_f32(
            np.ascontiguousarray(x), np.ascontiguousarray(k), np.ascontiguousarray(b), stride
        )
    return reference.conv2d_forward(x, k, b, stride)


def conv2d_backward(
    x: np.ndarray, k: np.ndarray, stride: int, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (gx, gk, gb) of conv2d_forward given upstream gy."""
    if _use_compiled and x.dtype == np.float32:
        return _convkern.conv2d_backward_f32(
            np.ascontiguousarray(x), np.ascontiguousarray(k), stride, np.ascontiguousarray(gy)
        )
    return reference.conv2d_backward(x, k, stride, gy)
