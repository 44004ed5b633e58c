"""Binary checkpoint container for tensor collections.

Layout (little-endian): magic ``b"PEPS1"``, tensor count (u32), then per
tensor: rank (u32), extents (u64 each), float64 payload in row-major order.
A JSON sidecar (same path + ``.json``) carries lattice metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PEPS1"

AXIS_CONVENTION = "up,left,down,right,physical[,ancilla]"


class CheckpointFormatError(RuntimeError):
    """Raised on bad magic bytes or an incompatible container layout."""


def save_tensors(path: str | Path, tensors: list[np.ndarray], sidecar: dict) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for t in tensors:
            t = np.ascontiguousarray(t, dtype=np.float64)
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
            fh.write(t.tobytes(order="C"))
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_tensors(path: str | Path) -> tuple[list[np.ndarray], dict]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic bytes (expected {MAGIC!r})")
    off = len(MAGIC)
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors = []
    for _ in range(count):
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}Q", raw, off)
        off += 8 * rank
        n = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(raw, dtype="<f8", count=n, offset=off)
        off += 8 * n
        tensors.append(data.reshape(shape).copy())
    if off != len(raw):
        raise CheckpointFormatError(f"{path}: trailing bytes after tensor payload")
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
    return tensors, sidecar
