"""Counter-based random streams for reproducible, schedule-independent Monte Carlo.

Every particle/copy/replica owns a Philox stream keyed by (seed, index), so
the noise a particle sees never depends on how work is split across workers.
Sub-experiments derive child seeds through SeedSequence so that distinct
(replica, ensemble-size, ...) tags can never collide.
"""
from __future__ import annotations

import numpy as np

__all__ = ["stream", "child_seed", "normal_matrix", "uniform_normal_pairs"]


def stream(seed: int, index: int) -> np.random.Generator:
    """Generator for stream `index` of experiment `seed` (counter-based Philox)."""
    key = np.array([np.uint64(seed), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def child_seed(master: int, *tags: int) -> int:
    """Deterministically derive a sub-experiment seed from a master seed and tags."""
    ss = np.random.SeedSequence([int(master), *[int(t) for t in tags]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def uniform_normal_pairs(seed: int, indices: range | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One (uniform, standard normal) pair per stream; used for initial conditions.

    Each stream consumes exactly two variates here, so path noise drawn
    afterwards from the same stream stays aligned across law kinds.
    """
    u = np.empty(len(indices))
    z = np.empty(len(indices))
    for row, idx in enumerate(indices):
        g = stream(seed, int(idx))
        u[row] = g.random()
        z[row] = g.standard_normal()
    return u, z


def normal_matrix(seed: int, indices: range | np.ndarray, n_draws: int, skip_pairs: int = 1) -> np.ndarray:
    """Standard-normal noise, one row per stream, after skipping the initial-condition pair.

    Row `r` is reproducible from (seed, indices[r]) alone, independent of the
    other rows and of n_draws being requested in one call or many.
    """
    out = np.empty((len(indices), n_draws))
    for row, idx in enumerate(indices):
        g = stream(seed, int(idx))
        if skip_pairs:
            g.random(skip_pairs)
            g.standard_normal(skip_pairs)
        out[row] = g.standard_normal(n_draws)
    return out
