"""Binary field files and their plain-text sidecars.

Layout of a field file (all little-endian)::

    b"TFLD1"                 5-byte magic
    uint8  ndim
    uint8  itemsize          4 (float32, the default) or 8 (float64)
    uint8  reserved (0)
    uint32 dims[ndim]
    float64 lower[ndim]
    float64 upper[ndim]
    values                   row-major, ``prod(dims)`` floats

Checkpoints use ``itemsize = 8`` so that a resumed run continues from the
exact bits it stopped at.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .grid import Grid

__all__ = ["MAGIC", "write_field", "read_field", "write_sidecar", "read_sidecar", "sidecar_path"]

MAGIC = b"TFLD1"
_DTYPES = {4: "<f4", 8: "<f8"}


def write_field(path, grid: Grid, values: np.ndarray, itemsize: int = 4) -> Path:
    path = Path(path)
    if itemsize not in _DTYPES:
        raise ValueError(f"itemsize must be 4 or 8, got {itemsize}")
    values = np.asarray(values)
    if values.shape != grid.dims:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.dims}")
    if not np.all(np.isfinite(values)):
        raise ValueError("refusing to write a field with non-finite values")
    head = MAGIC + struct.pack("<BBB", grid.ndim, itemsize, 0)
    head += struct.pack(f"<{grid.ndim}I", *grid.dims)
    head += struct.pack(f"<{2 * grid.ndim}d", *grid.lower, *grid.upper)
    data = np.ascontiguousarray(values, dtype=_DTYPES[itemsize]).tobytes(order="C")
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        fh.write(head)
        fh.write(data)
    os.replace(tmp, path)
    return path


def read_field(path) -> tuple[Grid, np.ndarray]:
    """Return ``(grid, values)``; values come back as float64."""
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise ValueError(f"{path}: not a field file (bad magic)")
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated header")
    ndim, itemsize, _ = struct.unpack_from("<BBB", raw, 5)
    if ndim not in (1, 2, 3) or itemsize not in _DTYPES:
        raise ValueError(f"{path}: unsupported header (ndim={ndim}, itemsize={itemsize})")
    off = 8
    dims = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    corners = struct.unpack_from(f"<{2 * ndim}d", raw, off)
    off += 16 * ndim
    count = int(np.prod(dims))
    if len(raw) - off != count * itemsize:
        raise ValueError(f"{path}: expected {count * itemsize} data bytes, found {len(raw) - off}")
    values = np.frombuffer(raw, dtype=_DTYPES[itemsize], count=count, offset=off)
    grid = Grid(tuple(int(n) for n in dims), tuple(corners[:ndim]), tuple(corners[ndim:]))
    return grid, values.astype(np.float64).reshape(grid.dims)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".txt")


def write_sidecar(path, entries: dict) -> Path:
    """``key = value`` lines next to a field file; values are written with ``repr``."""
    lines = [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in entries.items()]
    out = sidecar_path(path)
    out.write_text("\n".join(lines) + "\n")
    return out


def read_sidecar(path) -> dict[str, str]:
    out = {}
    for line in sidecar_path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed sidecar line {line!r}")
        out[key.strip()] = value.strip()
    return out
