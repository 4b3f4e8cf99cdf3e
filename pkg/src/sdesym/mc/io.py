"""Ensemble export: CSV and a compact binary layout.

Binary layout (little endian)::

    magic   8 bytes  b"SDESYMPE"
    version uint32   1
    n       uint32   state dimension
    m       uint32   noise dimension
    dt      float64
    N       uint64   number of paths
    K       uint64   number of steps
    seed    uint64
    states  float64[N, K+1, n]
    dw      float64[N, K, m]
    exit    int64[N]
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .ensemble import PathEnsemble

MAGIC = b"SDESYMPE"
VERSION = 1
HEADER = struct.Struct("<8sIIIdQQQ")


def write_csv(e: PathEnsemble, path, every: int = 1) -> None:
    """One row per path per saved time: path, step, t, in_domain, states..."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "step", "t", "in_domain", *e.vars])
        steps = range(0, e.n_steps + 1, max(1, every))
        for p in range(e.n_paths):
            for k in steps:
                w.writerow([p, k, repr(float(e.times[k])), int(k <= e.exit_step[p]), *map(repr, e.states[p, k].tolist())])


def write_binary(e: PathEnsemble, path) -> None:
    with Path(path).open("wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, e.n, e.m, e.dt, e.n_paths, e.n_steps, e.seed & ((1 << 64) - 1)))
        fh.write(np.ascontiguousarray(e.states, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(e.dw, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(e.exit_step, dtype="<i8").tobytes())


def read_binary(path, vars=None) -> PathEnsemble:
    raw = Path(path).read_bytes()
    magic, version, n, m, dt, N, K, seed = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError("not an ensemble file")
    if version != VERSION:
        raise ValueError(f"unsupported ensemble version {version}")
    off = HEADER.size
    ns = N * (K + 1) * n
    states = np.frombuffer(raw, "<f8", ns, off).reshape(N, K + 1, n).copy()
    off += 8 * ns
    nw = N * K * m
    dw = np.frombuffer(raw, "<f8", nw, off).reshape(N, K, m).copy()
    off += 8 * nw
    exit_step = np.frombuffer(raw, "<i8", N, off).copy()
    names = tuple(vars) if vars is not None else tuple(f"x{i}" for i in range(n))
    return PathEnsemble(names, np.arange(K + 1) * dt, states, dw, exit_step, int(seed))
