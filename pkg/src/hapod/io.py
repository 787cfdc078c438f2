"""On-disk formats.

Binary matrix container: magic "HPD1", version u16, rows u64, cols u64,
weight-flag u8, all little-endian, then (if flagged) the `rows` inner-product
weights and finally the payload, column-major float64.  Raw IEEE bytes round
trip exactly, signed zeros included.

Text sidecars use shortest round-trip float representation (repr), so reading
them back reproduces the doubles bit for bit.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .pod import InnerProductSpace, SnapshotBlock

__all__ = [
    "MatrixFormatError",
    "write_matrix",
    "read_matrix",
    "read_matrix_header",
    "iter_columns",
    "load_snapshots",
    "write_floats",
    "read_floats",
]

MAGIC = b"HPD1"
VERSION = 1
_HEADER = struct.Struct("<4sHQQB")


class MatrixFormatError(ValueError):
    """File does not parse as the binary matrix container."""


def write_matrix(path, values: np.ndarray, weights: np.ndarray | None = None) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got shape {values.shape}")
    rows, cols = values.shape
    flag = 0 if weights is None else 1
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols, flag))
        if weights is not None:
            w = np.asarray(weights, dtype="<f8")
            if w.shape != (rows,):
                raise ValueError(f"weights shape {w.shape} does not match {rows} rows")
            fh.write(w.tobytes())
        fh.write(values.astype("<f8", copy=False).tobytes(order="F"))


def _parse_header(raw: bytes, path) -> tuple[int, int, bool]:
    if len(raw) < _HEADER.size:
        raise MatrixFormatError(f"{path}: truncated header")
    magic, version, rows, cols, flag = _HEADER.unpack(raw[: _HEADER.size])
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}, not a matrix container")
    if version != VERSION:
        raise MatrixFormatError(f"{path}: unsupported container version {version}")
    if flag not in (0, 1):
        raise MatrixFormatError(f"{path}: bad weight flag {flag}")
    return int(rows), int(cols), bool(flag)


def read_matrix_header(path) -> tuple[int, int, bool]:
    """(rows, cols, weighted) without touching the payload."""
    with open(path, "rb") as fh:
        return _parse_header(fh.read(_HEADER.size), path)


def read_matrix(path) -> tuple[np.ndarray, np.ndarray | None]:
    with open(path, "rb") as fh:
        rows, cols, weighted = _parse_header(fh.read(_HEADER.size), path)
        weights = None
        if weighted:
            wbuf = fh.read(8 * rows)
            if len(wbuf) != 8 * rows:
                raise MatrixFormatError(f"{path}: truncated weight vector")
            weights = np.frombuffer(wbuf, dtype="<f8").copy()
        payload = fh.read()
    expected = 8 * rows * cols
    if len(payload) != expected:
        raise MatrixFormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected} for {rows}x{cols}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape((rows, cols), order="F").copy()
    return values, weights


def iter_columns(path, batch: int = 1):
    """Stream the payload column by column (or in small column batches)
    without loading the matrix; yields float64 arrays of shape (rows, <=batch)."""
    if batch < 1:
        raise ValueError("batch must be positive")
    with open(path, "rb") as fh:
        rows, cols, weighted = _parse_header(fh.read(_HEADER.size), path)
        if weighted:
            fh.seek(8 * rows, 1)
        done = 0
        while done < cols:
            take = min(batch, cols - done)
            buf = fh.read(8 * rows * take)
            if len(buf) != 8 * rows * take:
                raise MatrixFormatError(f"{path}: payload ends early at column {done}")
            yield np.frombuffer(buf, dtype="<f8").reshape((rows, take), order="F")
            done += take


def load_snapshots(path) -> SnapshotBlock:
    """Read a snapshot matrix as a SnapshotBlock.  `.csv` files are parsed as
    comma-separated text with one column per snapshot (interoperability path);
    anything else must be the binary container, which is canonical and may
    carry inner-product weights."""
    p = Path(path)
    if p.suffix.lower() == ".csv":
        values = np.loadtxt(p, delimiter=",", ndmin=2, dtype=np.float64)
        return SnapshotBlock(InnerProductSpace(values.shape[0]), values)
    values, weights = read_matrix(p)
    return SnapshotBlock(InnerProductSpace(values.shape[0], weights), values)


def write_floats(path, values) -> None:
    """One float per line, shortest round-trip text form."""
    with open(path, "w") as fh:
        for v in np.asarray(values, dtype=np.float64).reshape(-1):
            fh.write(repr(float(v)))
            fh.write("\n")


def read_floats(path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(float(line))
            except ValueError:
                raise ValueError(f"{path}:{ln}: not a float: {line!r}") from None
    return np.asarray(out, dtype=np.float64)
