"""Binary snapshots and the diagnostics CSV.

Snapshot layout (all little-endian)::

    b"MXS1"
    int64 dim, int64 M, int64 n_species, float64 time
    float64 rho[M^dim], u_0[M^dim] .. u_{dim-1}[M^dim], theta[M^dim], r_0[M^dim] .. r_{n-1}[M^dim]

Grid arrays are stored in row-major (C) order.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, DiagnosticsReport
from .solver import MixtureState

MAGIC = b"MXS1"
_HEADER = struct.Struct("<4sqqqd")
_F8 = np.dtype("<f8")


class SnapshotError(ValueError):
    """Base class for unreadable snapshots."""


class SnapshotMagicError(SnapshotError):
    pass


class SnapshotTruncatedError(SnapshotError):
    pass


class SnapshotDimensionError(SnapshotError):
    pass


def encode_snapshot(state: MixtureState) -> bytes:
    dim = state.u.shape[0]
    grid_shape = state.rho.shape
    if len(grid_shape) != dim or len(set(grid_shape)) != 1:
        raise SnapshotDimensionError(f"state arrays {grid_shape} do not form a {dim}-d square grid")
    M = grid_shape[0]
    n = state.r.shape[0]
    header = _HEADER.pack(MAGIC, dim, M, n, float(state.time))
    body = np.concatenate([state.rho[None], state.u, state.theta[None], state.r])
    return header + np.ascontiguousarray(body, dtype=_F8).tobytes()


def decode_snapshot(data: bytes) -> MixtureState:
    if len(data) < len(MAGIC):
        raise SnapshotTruncatedError(f"file holds {len(data)} bytes, too short for the magic")
    if data[:4] != MAGIC:
        raise SnapshotMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < _HEADER.size:
        raise SnapshotTruncatedError(f"header needs {_HEADER.size} bytes, file holds {len(data)}")
    _, dim, M, n, time = _HEADER.unpack_from(data)
    if dim not in (1, 2, 3) or M < 4 or M % 2 or n < 1:
        raise SnapshotDimensionError(f"implausible header dim={dim}, M={M}, n_species={n}")
    npts = M ** dim
    nfields = 1 + dim + 1 + n
    expected = _HEADER.size + 8 * nfields * npts
    if len(data) < expected:
        raise SnapshotTruncatedError(f"payload needs {expected} bytes, file holds {len(data)}")
    if len(data) > expected:
        raise SnapshotDimensionError(
            f"file holds {len(data)} bytes but the header (dim={dim}, M={M}, n={n}) implies {expected}")
    arr = np.frombuffer(data, dtype=_F8, offset=_HEADER.size).astype(float)
    arr = arr.reshape((nfields,) + (M,) * dim)
    return MixtureState(rho=arr[0].copy(), u=arr[1:1 + dim].copy(), theta=arr[1 + dim].copy(),
                        r=arr[2 + dim:].copy(), time=float(time))


def write_snapshot(state: MixtureState, path) -> None:
    Path(path).write_bytes(encode_snapshot(state))


def read_snapshot(path) -> MixtureState:
    return decode_snapshot(Path(path).read_bytes())


def format_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


class DiagnosticsWriter:
    """Append rows to a CSV; the header goes out with the first row only."""

    def __init__(self, sink):
        self._own = isinstance(sink, (str, Path))
        self._fh = open(sink, "w", newline="", encoding="utf-8") if self._own else sink
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._header_done = False

    def write(self, report: DiagnosticsReport) -> None:
        write_diagnostics_row(report, self)

    def close(self):
        if self._own:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_diagnostics_row(report: DiagnosticsReport, sink: DiagnosticsWriter) -> None:
    if not sink._header_done:
        sink._writer.writerow(CSV_COLUMNS)
        sink._header_done = True
    sink._writer.writerow([format_value(v) for v in report.row()])
    sink._fh.flush()


def read_diagnostics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
