"""Reference Keller-Segel PDE solver (1-D, both equations parabolic) and the
limit process driven by its density.

The density rho advects up the chemoattractant gradient while diffusing;
the chemoattractant c diffuses, decays and is sourced by rho:

    d_t rho = d_x( (1/2) d_x rho - chi * rho * d_x c )
    d_t c   = (1/2) d_xx c - lam * c + rho

Discretization: vertex-centered finite volumes on [x_min, x_max] with no-flux
walls, implicit diffusion (tridiagonal solves), explicit upwinded chemotaxis
flux, explicit source.  The flux form conserves the trapezoidal mass exactly
up to solver roundoff.

The nonlinear SDE copies read their drift from the PDE snapshots: per time
slab the density is frozen and the kernel is integrated exactly in time, so
the drift is a spatial convolution of erf slabs with past densities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.signal import fftconvolve

from . import rng
from .errors import ConfigError, DomainError, InstabilityError
from .grids import DensityGrid, SpatialGrid, TimeGrid
from .initial import InitialLaw
from .kernels import KernelParams, kernel_time_integral, slab_integral
from .particles import PathEnsemble

__all__ = ["PdeState", "pde_step", "pde_solve", "nl_drift_from_density", "nl_sde_simulate"]

BOUNDARY_DENSITY_INITIAL = 1e-10   # required of rho_0 at the walls
BOUNDARY_DENSITY_RUNTIME = 1e-6    # tripwire during time stepping
CLIP_MASS_TOL = 1e-10              # max mass removed by negativity clipping per step


@dataclass
class PdeState:
    """Coupled (rho, c) fields at one time; alpha is fixed at 1."""

    rho: DensityGrid
    c: np.ndarray
    time: float
    alpha: float = 1.0


def _banded_factor(diag: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    return ab


def _build_diffusion_matrix(n: int, h: float, dt: float, coef: float, decay: float = 0.0):
    """(w/dt + decay*w - coef*L) as a banded tridiagonal, L the no-flux Laplacian in flux form."""
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    main = w / dt + decay * w + np.zeros(n)
    lower = np.zeros(n - 1)
    upper = np.zeros(n - 1)
    # interior faces i+1/2 between node i and i+1 carry conductance coef/h
    cond = coef / h
    main[:-1] += cond
    main[1:] += cond
    lower -= cond
    upper -= cond
    return _banded_factor(main, lower, upper), w


def pde_step(state: PdeState, dt: float, params: KernelParams) -> PdeState:
    """One IMEX step; raises on CFL violation or instability."""
    grid = state.rho.grid
    h = grid.h
    if dt > h * h * (1.0 + 1e-12):
        raise ConfigError(f"time step {dt} violates the dt <= h^2 constraint (h={h})")
    n = grid.n_cells
    rho = state.rho.values
    c = state.c

    # chemoattractant: implicit diffusion and decay, explicit source rho
    ab_c, w = _build_diffusion_matrix(n, h, dt, 0.5, params.lam)
    c_new = solve_banded((1, 1), ab_c, w * (c / dt + rho))

    # upwinded chemotaxis flux at interior faces, velocity chi * d_x c
    v = params.chi * (c_new[1:] - c_new[:-1]) / h
    flux = np.where(v > 0.0, v * rho[:-1], v * rho[1:])
    rho_star = rho.copy()
    rho_star[:-1] -= dt * flux / w[:-1]
    rho_star[1:] += dt * flux / w[1:]

    # density: implicit diffusion
    ab_r, w = _build_diffusion_matrix(n, h, dt, 0.5)
    rho_new = solve_banded((1, 1), ab_r, w * rho_star / dt)

    neg = rho_new < 0.0
    if np.any(neg):
        clipped = -float(np.trapezoid(np.where(neg, rho_new, 0.0), dx=h))
        if np.min(rho_new) < -1e-12 or clipped > CLIP_MASS_TOL:
            raise InstabilityError(
                f"negative density beyond limiter tolerance (min {np.min(rho_new):.3e}, clipped mass {clipped:.3e})")
        rho_new = np.clip(rho_new, 0.0, None)
        rho_new /= np.trapezoid(rho_new, dx=h)

    if max(rho_new[0], rho_new[-1]) > BOUNDARY_DENSITY_RUNTIME:
        raise InstabilityError(
            f"density reached the domain wall (boundary value {max(rho_new[0], rho_new[-1]):.3e}); enlarge the domain")

    return PdeState(DensityGrid(grid, rho_new), c_new, state.time + dt, state.alpha)


def pde_solve(initial: InitialLaw, space: SpatialGrid, times: TimeGrid, params: KernelParams,
              pde_dt: float | None = None) -> list[PdeState]:
    """March the PDE to the horizon, returning snapshots at every particle-grid time.

    The internal step divides the snapshot spacing exactly, so snapshot times
    align with TimeGrid times with no interpolation.  c starts at zero (only
    its gradient enters the dynamics).
    """
    h = space.h
    limit = h * h
    if pde_dt is None:
        substeps = max(1, int(math.ceil(times.dt / limit - 1e-12)))
    else:
        if pde_dt > limit:
            raise ConfigError(f"pde_dt {pde_dt} violates dt <= h^2 = {limit}")
        substeps = max(1, int(round(times.dt / pde_dt)))
        if abs(substeps * pde_dt - times.dt) > 1e-12 * times.dt:
            raise ConfigError(f"pde_dt {pde_dt} does not divide the snapshot spacing {times.dt}")
    dt = times.dt / substeps

    rho0 = initial.density_on(space)
    if max(rho0.values[0], rho0.values[-1]) > BOUNDARY_DENSITY_INITIAL:
        raise ConfigError(
            f"initial density at the domain wall is {max(rho0.values[0], rho0.values[-1]):.3e} "
            f"(> {BOUNDARY_DENSITY_INITIAL}); enlarge [x_min, x_max]")
    state = PdeState(rho0, np.zeros(space.n_cells), 0.0)
    out = [state]
    for _ in range(times.n_steps):
        for _ in range(substeps):
            state = pde_step(state, dt, params)
        state = PdeState(state.rho, state.c, round(state.time / times.dt) * times.dt, state.alpha)
        out.append(state)
    return out


def _slab_kernel_on_offsets(space: SpatialGrid, age_steps: int, dt: float,
                            params: KernelParams) -> np.ndarray:
    """Kernel time-integral over one slab of given age, tabulated on grid offsets."""
    n = space.n_cells
    offsets = space.h * np.arange(-(n - 1), n)
    b = age_steps * dt
    a = b - dt
    if params.lam == 0.0:
        return slab_integral(offsets, a, b)
    out = np.array([0.0 if o == 0.0 else kernel_time_integral(o, a, b, params) for o in offsets])
    return out


def _history_drift_on_grid(rho_matrix: np.ndarray, k: int, space: SpatialGrid, dt: float,
                           params: KernelParams, cache: dict) -> np.ndarray:
    """chi * sum_{m<k} (G_{k-m} conv rho_m) evaluated on the grid nodes."""
    n = space.n_cells
    total = np.zeros(n)
    for m in range(k):
        age = k - m
        g = cache.get(age)
        if g is None:
            g = _slab_kernel_on_offsets(space, age, dt, params)
            cache[age] = g
        # valid-mode slice of the full convolution aligns g's offset table with
        # the node positions exactly (longer array first per scipy's contract)
        total += fftconvolve(g, rho_matrix[m], mode="valid")
    return params.chi * space.h * total


def nl_drift_from_density(snapshots: list[PdeState], k: int, x, params: KernelParams,
                          _cache: dict | None = None) -> float | np.ndarray:
    """Drift of the limit process at snapshot time t_k, position(s) x.

    Per slab the density is frozen at its left-endpoint snapshot and the kernel
    integrated exactly in time; the spatial convolution lives on the PDE grid
    and is linearly interpolated at x (density treated as 0 outside the grid).
    """
    if k < 0 or k >= len(snapshots):
        raise DomainError(f"snapshot index {k} out of range (have {len(snapshots)})")
    space = snapshots[0].rho.grid
    if k == 0:
        out = np.zeros_like(np.asarray(x, dtype=float))
        return float(out) if out.ndim == 0 else out
    dt = snapshots[1].time - snapshots[0].time
    rho_matrix = np.stack([s.rho.values for s in snapshots[:k]])
    cache = {} if _cache is None else _cache
    on_grid = _history_drift_on_grid(rho_matrix, k, space, dt, params, cache)
    out = np.interp(np.asarray(x, dtype=float), space.nodes(), on_grid, left=0.0, right=0.0)
    return float(out) if out.ndim == 0 else out


def nl_sde_simulate(n_copies: int, grid: TimeGrid, initial: InitialLaw,
                    snapshots: list[PdeState], params: KernelParams, seed: int) -> PathEnsemble:
    """Independent copies of the limit process; drift reads the fixed PDE density.

    Copies never interact, so the ensemble is embarrassingly parallel; the
    counter-based streams make any chunking/batching produce identical paths.
    """
    if len(snapshots) < grid.n_steps + 1:
        raise ConfigError(f"need {grid.n_steps + 1} snapshots, got {len(snapshots)}")
    snap_dt = snapshots[1].time - snapshots[0].time
    if abs(snap_dt - grid.dt) > 1e-12 * grid.dt:
        raise ConfigError(f"snapshot spacing {snap_dt} does not match grid dt {grid.dt}")
    space = snapshots[0].rho.grid
    nodes = space.nodes()
    rho_matrix = np.stack([s.rho.values for s in snapshots])

    u, z = rng.uniform_normal_pairs(seed, range(n_copies))
    x0 = initial.sample_from_pairs(u, z)
    incr = math.sqrt(grid.dt) * rng.normal_matrix(seed, range(n_copies), grid.n_steps)
    pos = np.empty((n_copies, grid.n_steps + 1))
    pos[:, 0] = x0
    cache: dict = {}
    for k in range(grid.n_steps):
        if k == 0 or params.chi == 0.0:
            pos[:, k + 1] = pos[:, k] + incr[:, k]
            continue
        on_grid = _history_drift_on_grid(rho_matrix, k, space, grid.dt, params, cache)
        drift = np.interp(pos[:, k], nodes, on_grid, left=0.0, right=0.0)
        pos[:, k + 1] = pos[:, k] + drift * grid.dt + incr[:, k]
    return PathEnsemble(grid, pos, incr, seed=seed, n_driftless=n_copies if params.chi == 0.0 else 0,
                        n_filled=grid.n_steps + 1)
