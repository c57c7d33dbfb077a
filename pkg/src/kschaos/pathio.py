"""Binary path dumps.

Layout (all little-endian):

    magic        8 bytes   b"KSPATH01"
    n_particles  uint64
    n_steps      uint64
    dt           float64
    seed         uint64
    positions    n_particles x (n_steps + 1) float64, row-major

A plain-text sidecar manifest (<dump>.manifest.txt, key=value lines) records
the physical parameters and a checksum of the binary.
"""
from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import StateError
from .grids import TimeGrid
from .kernels import KernelParams
from .particles import PathEnsemble

__all__ = ["write_path_dump", "read_path_dump"]

MAGIC = b"KSPATH01"
_HEADER = struct.Struct("<8sQQdQ")


def write_path_dump(path: str | Path, ensemble: PathEnsemble, params: KernelParams,
                    extra: dict | None = None) -> Path:
    path = Path(path)
    if ensemble.n_filled != ensemble.grid.n_steps + 1:
        raise StateError("refusing to dump a partially filled ensemble")
    header = _HEADER.pack(MAGIC, ensemble.n_particles, ensemble.grid.n_steps,
                          ensemble.grid.dt, ensemble.seed % 2 ** 64)
    body = np.ascontiguousarray(ensemble.positions, dtype="<f8").tobytes()
    path.write_bytes(header + body)

    digest = hashlib.sha256(header + body).hexdigest()
    lines = {
        "format": MAGIC.decode(),
        "n_particles": ensemble.n_particles,
        "n_steps": ensemble.grid.n_steps,
        "dt": repr(ensemble.grid.dt),
        "seed": ensemble.seed,
        "n_driftless": ensemble.n_driftless,
        "lambda": repr(params.lam),
        "chi": repr(params.chi),
        "sha256": digest,
    }
    if extra:
        lines.update(extra)
    manifest = "".join(f"{k}={v}\n" for k, v in lines.items())
    path.with_suffix(path.suffix + ".manifest.txt").write_text(manifest)
    return path


def read_path_dump(path: str | Path) -> tuple[np.ndarray, dict]:
    """Return (positions, header dict); verifies magic and shape."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise StateError(f"{path}: truncated dump")
    magic, n, n_steps, dt, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise StateError(f"{path}: bad magic {magic!r}")
    expect = _HEADER.size + 8 * n * (n_steps + 1)
    if len(raw) != expect:
        raise StateError(f"{path}: expected {expect} bytes, found {len(raw)}")
    pos = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, n_steps + 1).copy()
    meta = {"n_particles": int(n), "n_steps": int(n_steps), "dt": float(dt), "seed": int(seed)}
    return pos, meta


def ensemble_from_dump(path: str | Path) -> PathEnsemble:
    """Rehydrate a dumped ensemble (positions only; increments are not stored)."""
    pos, meta = read_path_dump(path)
    grid = TimeGrid(meta["dt"], meta["n_steps"])
    return PathEnsemble(grid, pos, None, seed=meta["seed"], n_filled=meta["n_steps"] + 1)


# --- PDE snapshot dumps (same conventions: magic header + row-major float64) ---

PDE_MAGIC = b"KSPDE001"
_PDE_HEADER = struct.Struct("<8sQQddd")


def write_pde_dump(path: str | Path, space, times: TimeGrid, snapshots) -> Path:
    path = Path(path)
    n_snap = len(snapshots)
    header = _PDE_HEADER.pack(PDE_MAGIC, n_snap, space.n_cells, times.dt,
                              space.x_min, space.x_max)
    rho = np.ascontiguousarray(np.stack([s.rho.values for s in snapshots]), dtype="<f8")
    c = np.ascontiguousarray(np.stack([s.c for s in snapshots]), dtype="<f8")
    path.write_bytes(header + rho.tobytes() + c.tobytes())
    return path


def read_pde_dump(path: str | Path) -> tuple[np.ndarray, np.ndarray, dict]:
    raw = Path(path).read_bytes()
    magic, n_snap, n_cells, dt, x_min, x_max = _PDE_HEADER.unpack_from(raw)
    if magic != PDE_MAGIC:
        raise StateError(f"{path}: bad magic {magic!r}")
    count = n_snap * n_cells
    expect = _PDE_HEADER.size + 16 * count
    if len(raw) != expect:
        raise StateError(f"{path}: expected {expect} bytes, found {len(raw)}")
    rho = np.frombuffer(raw, dtype="<f8", offset=_PDE_HEADER.size, count=count)
    c = np.frombuffer(raw, dtype="<f8", offset=_PDE_HEADER.size + 8 * count, count=count)
    meta = {"n_snapshots": int(n_snap), "n_cells": int(n_cells), "dt": float(dt),
            "x_min": float(x_min), "x_max": float(x_max)}
    return rho.reshape(n_snap, n_cells).copy(), c.reshape(n_snap, n_cells).copy(), meta
