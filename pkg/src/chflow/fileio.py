"""Binary field snapshots and the diagnostics CSV.

Snapshot layout (all little endian)::

    offset  size    content
    0       8       magic b"CHFIELD1"
    8       12      N1, N2, N3 as uint32
    20      8       L as float64
    28      8       t as float64
    36      8*N^3   samples as float64, x1 index varying fastest
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .diagnostics import CSV_COLUMNS, DiagnosticsRecord
from .flow import FlowState
from .spectral import RealField, forward, inverse, make_grid

MAGIC = b"CHFIELD1"
_HEADER = struct.Struct("<8s3I2d")


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class SnapshotHeader:
    magic: bytes
    N: tuple
    L: float
    t: float


def save_snapshot(obj, path, t=None):
    """Write a :class:`FlowState` or :class:`RealField` to ``path``."""
    if isinstance(obj, FlowState):
        field = inverse(obj.u_hat)
        t = obj.t if t is None else t
    else:
        field = obj
    t = 0.0 if t is None else float(t)
    grid = field.grid
    header = _HEADER.pack(MAGIC, grid.N, grid.N, grid.N, grid.L, t)
    payload = np.asarray(field.samples, dtype="<f8").ravel(order="F").tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def read_snapshot(path):
    """Return ``(header, field)`` with the samples exactly as stored."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise SnapshotError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, n1, n2, n3, L, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if not n1 == n2 == n3:
        raise SnapshotError(f"{path}: only cubic grids are supported, got {(n1, n2, n3)}")
    expected = 8 * n1 * n2 * n3
    payload = data[_HEADER.size:]
    if len(payload) < expected:
        raise SnapshotError(
            f"{path}: truncated payload, header declares {n1}x{n2}x{n3} "
            f"({expected} bytes) but only {len(payload)} bytes follow"
        )
    if len(payload) > expected:
        raise SnapshotError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    grid = make_grid(n1, L)
    samples = np.frombuffer(payload, dtype="<f8").reshape(grid.shape, order="F")
    header = SnapshotHeader(magic, (n1, n2, n3), L, t)
    return header, RealField(grid, samples.astype(np.float64))


def load_snapshot(path, grid=None):
    """Read a snapshot as a :class:`FlowState`, optionally checking the grid."""
    header, field = read_snapshot(path)
    if grid is not None and field.grid != grid:
        raise SnapshotError(f"{path}: snapshot grid {field.grid} disagrees with {grid}")
    return FlowState(header.t, forward(field), 0)


def format_value(x):
    return f"{x:.17g}"


def write_csv(records, path):
    """Write diagnostics records; values carry 17 significant digits."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    with_hs = records[0].hs is not None
    header = list(CSV_COLUMNS) + (["hs"] if with_hs else [])
    lines = [",".join(header)]
    for rec in records:
        if (rec.hs is not None) != with_hs:
            raise ValueError("records disagree on the presence of the hs column")
        lines.append(",".join(format_value(v) for v in rec.values()))
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_csv(path):
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        expected = list(CSV_COLUMNS)
        if header not in (expected, expected + ["hs"]):
            raise ValueError(f"{path}: unexpected header {header}")
        out = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            values = [float(v) for v in line.split(",")]
            if len(values) != len(header):
                raise ValueError(f"{path}: row has {len(values)} columns, expected {len(header)}")
            out.append(DiagnosticsRecord(**dict(zip(header, values))))
    return out
