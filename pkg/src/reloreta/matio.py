"""Bit-exact binary matrix format used by the CLI.

Layout: magic b"RLRT", u32 version (= 1), u64 rows, u64 cols, then
rows * cols little-endian float64 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"RLRT"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class MatrixFormatError(IOError):
    """Corrupt or unsupported matrix file."""


def write_matrix(path, a: np.ndarray) -> None:
    a = np.ascontiguousarray(np.asarray(a, dtype="<f8"))
    if a.ndim != 2:
        raise MatrixFormatError(f"only 2-D matrices are supported, got shape {a.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1]))
        fh.write(a.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise MatrixFormatError(f"{path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise MatrixFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + rows * cols * 8
    if len(raw) != expected:
        raise MatrixFormatError(
            f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=rows * cols)
    return data.reshape(rows, cols).astype(float)
