"""Snapshot and density file formats."""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"JPSN"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQId")  # magic, version, N, d, time


def fmt(x: float) -> str:
    return "%.17g" % x


def write_snapshot_csv(path, positions: np.ndarray) -> None:
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    d = positions.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"x{j + 1}" for j in range(d)) + "\n")
        for row in positions:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_snapshot_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data


def write_snapshot_binary(path, positions: np.ndarray, time: float) -> None:
    positions = np.ascontiguousarray(np.atleast_2d(positions), dtype="<f8")
    n, d = positions.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, n, d, float(time)))
        fh.write(positions.tobytes(order="C"))


def read_snapshot_binary(path) -> tuple[np.ndarray, float]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, n, d, t = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a particle snapshot (magic {magic!r})")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * n * d:
        raise ValueError(f"{path}: expected {n}x{d} floats, found {len(body) // 8} values")
    return np.frombuffer(body, dtype="<f8").reshape(n, d).copy(), t


def write_density_csv(path, estimate, stderr=None) -> None:
    d = estimate.grid.shape[1]
    header = [f"x{j + 1}" for j in range(d)] + ["value", "method", "delta", "N"]
    if stderr is not None:
        header.append("stderr")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for g, x in enumerate(estimate.grid):
            row = [fmt(v) for v in x] + [fmt(estimate.values[g]), estimate.method,
                                         fmt(estimate.delta), str(estimate.n_particles)]
            if stderr is not None:
                row.append(fmt(stderr[g]))
            w.writerow(row)
