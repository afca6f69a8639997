"""Binary checkpoint format plus the key=value text header.

Layout (all integers unsigned 32-bit little-endian unless noted):

    magic   4 bytes  b"DFP1"
    version 1 byte   currently 1
    count   u32      number of parameters
    then per parameter, in insertion order:
        name_len u32, name (UTF-8), rank u32, dims u32 x rank,
        values   float32 little-endian, row-major

Optimizer moments are not checkpointed. The network config travels in a
sidecar text file at ``<path>.cfg``, one ``key=value`` per line; the same
format is accepted for CLI config files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DFP1"
VERSION = 1


class CheckpointError(ValueError):
    """Corrupt or inconsistent checkpoint file."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint version byte not understood by this build."""


def save_params(path: str | Path, params: dict[str, np.ndarray]) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<B", VERSION)
    out += struct.pack("<I", len(params))
    for name, values in params.items():
        encoded = name.encode("utf-8")
        arr = np.ascontiguousarray(values, dtype=np.float32)
        out += struct.pack("<I", len(encoded))
        out += encoded
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f4", copy=False).tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint (needed {n} bytes at offset {self.pos})")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    r = _Reader(path.read_bytes(), str(path))
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes, not a checkpoint")
    version = r.take(1)[0]
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported checkpoint version {version}")
    count = r.u32()
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        n_values = int(np.prod(shape, dtype=np.int64)) if rank else 1
        raw = r.take(4 * n_values)
        params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: {len(r.data) - r.pos} trailing bytes after last parameter")
    return params


def config_path(path: str | Path) -> Path:
    return Path(str(path) + ".cfg")


def write_config_text(path: str | Path, entries: dict[str, str]) -> None:
    lines = [f"{k}={v}" for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_config_text(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CheckpointError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries
