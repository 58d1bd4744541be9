"""Versioned little-endian binary checkpoints: parameters plus optimizer state."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from monodream.nncore.optim import AdamState

MAGIC = b"MDCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_table(fh, table: dict[str, np.ndarray]) -> None:
    fh.write(struct.pack("<I", len(table)))
    for name in sorted(table):
        arr = np.ascontiguousarray(table[name], dtype="<f8")
        raw = name.encode()
        fh.write(struct.pack("<H", len(raw)) + raw)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes())


def _read_table(fh) -> dict[str, np.ndarray]:
    (n,) = struct.unpack("<I", fh.read(4))
    out = {}
    for _ in range(n):
        (ln,) = struct.unpack("<H", fh.read(2))
        name = fh.read(ln).decode()
        (nd,) = struct.unpack("<B", fh.read(1))
        shape = struct.unpack(f"<{nd}Q", fh.read(8 * nd))
        count = int(np.prod(shape)) if nd else 1
        buf = fh.read(8 * count)
        if len(buf) != 8 * count:
            raise CheckpointError(f"truncated tensor {name!r}")
        out[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
    return out


def save_checkpoint(path, params: dict[str, np.ndarray], state: AdamState | None = None, meta: str = "") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<H", VERSION))
        raw = meta.encode()
        fh.write(struct.pack("<I", len(raw)) + raw)
        _write_table(fh, params)
        fh.write(struct.pack("<B", state is not None))
        if state is not None:
            fh.write(struct.pack("<Q", state.step))
            _write_table(fh, state.m)
            _write_table(fh, state.v)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], AdamState | None, str]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (ln,) = struct.unpack("<I", fh.read(4))
        meta = fh.read(ln).decode()
        params = _read_table(fh)
        state = None
        if struct.unpack("<B", fh.read(1))[0]:
            (step,) = struct.unpack("<Q", fh.read(8))
            state = AdamState(step, _read_table(fh), _read_table(fh))
    return params, state, meta
