"""Euler scheme for the interacting particle system with time-integrated kernel drift.

The drift on particle i at grid time t_k integrates the kernel over the whole
history of every other particle:

    b_i(t_k) = (chi/N) * sum_{j != i} sum_{m<k} S(x_i(t_k) - x_j(t_m); t_k-t_{m+1}, t_k-t_m)

where S is the exact erf slab integral (kernels.slab_integral) and the history
argument is frozen at the slab's left endpoint.  Pairs that coincide exactly at
t_k contribute nothing (the coincidence indicator).  Cost is Theta(N^2 * k)
slab evaluations per step, so the inner loops are numba-compiled; a far-field
cutoff skips slabs whose erf difference underflows to zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

# portable threading layer; drift loops parallelize over the output index only,
# so results never depend on the schedule
_numba_config.THREADING_LAYER = "workqueue"

from . import rng
from .errors import DomainError, StateError
from .grids import TimeGrid
from .initial import InitialLaw
from .kernels import KernelParams, kernel_time_integral

__all__ = [
    "PathEnsemble",
    "drift_eval",
    "step",
    "simulate",
    "simulate_partial_driftless",
    "brownian_paths",
]

# erf saturates to 1.0 in float64 slightly below z = 6; slabs with both scaled
# arguments beyond that are exactly zero, so skipping them is bit-neutral.
_SAT_Z = 6.0
# documented far-field cutoff radius in units of sqrt(2 * slab age)
CUTOFF_Z = 8.0


@njit(cache=True, parallel=True)
def _drift_step(pos, k, dt, chi, j_lo, cutoff_on):
    """Drift vector at step k for particles j_lo..N-1, history restricted to the same block."""
    n = pos.shape[0]
    out = np.zeros(n)
    evals = np.zeros(n, dtype=np.int64)
    s2 = np.empty(k + 1)
    for m in range(k):
        s2[m] = math.sqrt(2.0 * (k - m) * dt)
    s2[k] = 0.0
    for i in prange(j_lo, n):
        xi = pos[i, k]
        acc = 0.0
        cnt = 0
        for j in range(j_lo, n):
            if pos[j, k] == xi:
                continue  # coincidence indicator; also excludes j == i
            for m in range(k):
                x = xi - pos[j, m]
                ax = -x if x < 0.0 else x
                if cutoff_on and ax >= _SAT_Z * s2[m]:
                    continue
                eb = math.erf(x / s2[m])
                if m == k - 1:
                    ea = 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)
                else:
                    ea = math.erf(x / s2[m + 1])
                acc += eb - ea
                cnt += 1
        out[i] = acc * (chi / n)
        evals[i] = cnt
    return out, evals.sum()


def _drift_step_damped(pos, k, dt, params: KernelParams, j_lo: int) -> np.ndarray:
    # lam > 0 falls back to per-slab quadrature; only usable at desk scale
    n = pos.shape[0]
    out = np.zeros(n)
    for i in range(j_lo, n):
        xi = pos[i, k]
        acc = 0.0
        for j in range(j_lo, n):
            if pos[j, k] == xi:
                continue
            for m in range(k):
                a = (k - m - 1) * dt
                b = (k - m) * dt
                x = xi - pos[j, m]
                if x != 0.0:
                    acc += kernel_time_integral(x, a, b, params)
        out[i] = acc * (params.chi / n)
    return out


@dataclass
class PathEnsemble:
    """Time-gridded history of N paths plus the Brownian increments that drove them.

    Row k of `positions` is immutable once step k has completed; `n_filled`
    counts the completed rows.  `n_driftless` records how many leading
    particles evolve without drift (partial-driftless systems).
    """

    grid: TimeGrid
    positions: np.ndarray = field(repr=False)
    increments: np.ndarray | None = field(repr=False)
    seed: int = 0
    n_driftless: int = 0
    n_filled: int = 1
    kernel_evals: int = 0

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    def __post_init__(self) -> None:
        n, cols = self.positions.shape
        if cols != self.grid.n_steps + 1:
            raise DomainError("positions must have n_steps + 1 columns")
        if self.increments is not None and self.increments.shape != (n, self.grid.n_steps):
            raise DomainError("increments must have shape (N, n_steps)")

    def require_filled(self, k: int) -> None:
        if k >= self.n_filled:
            raise StateError(f"row {k} not filled yet (filled through {self.n_filled - 1})")


def _draw_initial(seed: int, n: int, initial: InitialLaw) -> np.ndarray:
    u, z = rng.uniform_normal_pairs(seed, range(n))
    return initial.sample_from_pairs(u, z)


def _draw_increments(seed: int, n: int, grid: TimeGrid) -> np.ndarray:
    return math.sqrt(grid.dt) * rng.normal_matrix(seed, range(n), grid.n_steps)


def brownian_paths(n_particles: int, grid: TimeGrid, initial: InitialLaw, seed: int) -> PathEnsemble:
    """N independent Brownian paths from the initial law (chi = 0 reference)."""
    x0 = _draw_initial(seed, n_particles, initial)
    incr = _draw_increments(seed, n_particles, grid)
    pos = np.empty((n_particles, grid.n_steps + 1))
    pos[:, 0] = x0
    # same sequential accumulation as step(), so chi = 0 runs match bit-exactly
    for k in range(grid.n_steps):
        pos[:, k + 1] = pos[:, k] + incr[:, k]
    return PathEnsemble(grid, pos, incr, seed=seed, n_driftless=n_particles,
                        n_filled=grid.n_steps + 1)


def drift_eval(i: int, k: int, ensemble: PathEnsemble, params: KernelParams,
               cutoff: bool = True) -> float:
    """Memory drift felt by particle i at grid time t_k (0 for k = 0)."""
    ensemble.require_filled(k)
    n = ensemble.n_particles
    if not 0 <= i < n:
        raise DomainError(f"particle index {i} out of range")
    if k == 0 or n == 1 or params.chi == 0.0 or i < ensemble.n_driftless:
        return 0.0
    j_lo = ensemble.n_driftless
    if params.lam != 0.0:
        return float(_drift_step_damped(ensemble.positions, k, ensemble.grid.dt, params, j_lo)[i])
    out, _ = _drift_step(ensemble.positions, k, ensemble.grid.dt, params.chi, j_lo, cutoff)
    val = float(out[i])
    # discrete bound: each pair-slab lies in [-1, 1]
    assert abs(val) <= params.chi * (n - 1) / n * k + 1e-9
    return val


def step(ensemble: PathEnsemble, k: int, params: KernelParams, cutoff: bool = True) -> None:
    """Advance every particle from t_k to t_{k+1} (Euler-Maruyama, exact kernel slabs)."""
    ensemble.require_filled(k)
    if k + 1 > ensemble.grid.n_steps:
        raise StateError("grid horizon reached")
    if ensemble.increments is None:
        raise StateError("ensemble has no Brownian increments to step with")
    grid = ensemble.grid
    pos = ensemble.positions
    j_lo = ensemble.n_driftless
    if params.chi == 0.0 or k == 0 or ensemble.n_particles == 1 or j_lo >= ensemble.n_particles:
        drift = None  # pure Brownian step, bit-exact decoupling
    elif params.lam != 0.0:
        drift = _drift_step_damped(pos, k, grid.dt, params, j_lo)
    else:
        drift, nev = _drift_step(pos, k, grid.dt, params.chi, j_lo, cutoff)
        ensemble.kernel_evals += int(nev)
    if drift is None:
        pos[:, k + 1] = pos[:, k] + ensemble.increments[:, k]
    else:
        pos[:, k + 1] = pos[:, k] + drift * grid.dt + ensemble.increments[:, k]
    ensemble.n_filled = max(ensemble.n_filled, k + 2)


def _simulate(n_particles: int, grid: TimeGrid, initial: InitialLaw, params: KernelParams,
              seed: int, n_driftless: int, cutoff: bool,
              initial_positions=None, increments=None) -> PathEnsemble:
    if n_particles < 1:
        raise DomainError(f"need at least one particle, got {n_particles}")
    x0 = _draw_initial(seed, n_particles, initial) if initial_positions is None \
        else np.asarray(initial_positions, dtype=float).copy()
    incr = _draw_increments(seed, n_particles, grid) if increments is None \
        else np.asarray(increments, dtype=float).copy()
    pos = np.empty((n_particles, grid.n_steps + 1))
    pos[:, 0] = x0
    ens = PathEnsemble(grid, pos, incr, seed=seed, n_driftless=n_driftless)
    for k in range(grid.n_steps):
        step(ens, k, params, cutoff=cutoff)
    if not np.all(np.isfinite(ens.positions)):
        raise StateError("non-finite positions produced; reduce dt")
    return ens

def simulate(n_particles: int, grid: TimeGrid, initial: InitialLaw, params: KernelParams,
             seed: int, cutoff: bool = True, initial_positions=None, increments=None) -> PathEnsemble:
    """Simulate the fully interacting N-particle system; deterministic in (args, seed)."""
    return _simulate(n_particles, grid, initial, params, seed, 0, cutoff,
                     initial_positions, increments)


def simulate_partial_driftless(r: int, n_particles: int, grid: TimeGrid, initial: InitialLaw,
                               params: KernelParams, seed: int, cutoff: bool = True,
                               initial_positions=None, increments=None) -> PathEnsemble:
    """First r particles are pure Brownian; the rest interact only within the tail block."""
    if not 1 <= r < n_particles:
        raise DomainError(f"need 1 <= r < N, got r={r}, N={n_particles}")
    return _simulate(n_particles, grid, initial, params, seed, r, cutoff,
                     initial_positions, increments)
