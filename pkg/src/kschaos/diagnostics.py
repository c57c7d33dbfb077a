"""Distances, density estimation and the particles-vs-PDE convergence study."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DomainError
from .grids import DensityGrid, SpatialGrid, TimeGrid
from .initial import InitialLaw
from .kernels import KernelParams
from .meanfield import PdeState, pde_solve
from .particles import simulate

__all__ = [
    "wasserstein1_1d",
    "density_estimate",
    "silverman_bandwidth",
    "l2_decay_series",
    "ChaosConfig",
    "ChaosReport",
    "chaos_study",
]


def _w1_sample_sample(a: np.ndarray, b: np.ndarray) -> float:
    """W1 between empirical measures: area between the two step CDFs."""
    a = np.sort(a)
    b = np.sort(b)
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    # merged-support CDF integral for unequal sample counts
    xs = np.concatenate([a, b])
    xs.sort(kind="mergesort")
    deltas = np.diff(xs)
    fa = np.searchsorted(a, xs[:-1], side="right") / a.size
    fb = np.searchsorted(b, xs[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * deltas))


def _w1_sample_density(samples: np.ndarray, density: DensityGrid) -> float:
    """W1 between an empirical measure and a grid density: exact piecewise integral
    of |step CDF - piecewise-linear CDF| over the union of breakpoints."""
    density.check()
    s = np.sort(samples)
    nodes = density.grid.nodes()
    gcdf = density.cdf()
    gcdf = gcdf / gcdf[-1]

    breaks = np.union1d(s, nodes)
    u, v = breaks[:-1], breaks[1:]
    widths = v - u
    # empirical CDF is constant on [u, v) since no sample lies strictly inside
    f = np.searchsorted(s, u, side="right") / s.size
    # density CDF is linear on each piece; clamp to 0/1 outside the grid
    gu = np.interp(u, nodes, gcdf, left=0.0, right=1.0)
    gv = np.interp(v, nodes, gcdf, left=0.0, right=1.0)
    du = gu - f
    dv = gv - f
    same_sign = du * dv >= 0.0
    area_nocross = 0.5 * np.abs(du + dv) * widths
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = np.where(du != dv, widths * du / (du - dv), 0.0)
    area_cross = 0.5 * (np.abs(du) * xi + np.abs(dv) * (widths - xi))
    return float(np.sum(np.where(same_sign, area_nocross, area_cross)))


def wasserstein1_1d(samples_a, other) -> float:
    """1-D Wasserstein-1 distance; `other` is a sample set or a DensityGrid."""
    a = np.asarray(samples_a, dtype=float).ravel()
    if a.size == 0:
        raise DomainError("empty sample set")
    if not np.all(np.isfinite(a)):
        raise DomainError("samples must be finite")
    if isinstance(other, DensityGrid):
        return _w1_sample_density(a, other)
    b = np.asarray(other, dtype=float).ravel()
    if b.size == 0:
        raise DomainError("empty sample set")
    if not np.all(np.isfinite(b)):
        raise DomainError("samples must be finite")
    return _w1_sample_sample(a, b)


def silverman_bandwidth(samples: np.ndarray) -> float:
    s = np.asarray(samples, dtype=float)
    sd = float(np.std(s, ddof=1)) if s.size > 1 else 0.0
    q75, q25 = np.percentile(s, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        spread = max(abs(float(np.mean(s))), 1.0) * 1e-3
    return 0.9 * spread * s.size ** -0.2


def density_estimate(samples, grid: SpatialGrid, bandwidth: float,
                     chunk: int = 4096) -> DensityGrid:
    """Gaussian-kernel density on the grid, renormalized to unit trapezoidal mass.

    Mass falling outside [x_min, x_max] is folded back by the renormalization
    (documented truncation); permutation-invariant by construction.
    """
    if bandwidth <= 0.0:
        raise DomainError(f"bandwidth must be > 0, got {bandwidth}")
    s = np.sort(np.asarray(samples, dtype=float).ravel())  # canonical order: permutation-invariant sums
    if s.size == 0:
        raise DomainError("empty sample set")
    nodes = grid.nodes()
    out = np.zeros(grid.n_cells)
    c = 1.0 / (bandwidth * math.sqrt(2.0 * math.pi))
    for lo in range(0, s.size, chunk):
        block = s[lo:lo + chunk]
        z = (nodes[:, None] - block[None, :]) / bandwidth
        out += c * np.exp(-0.5 * z * z).sum(axis=1)
    out /= s.size
    mass = np.trapezoid(out, dx=grid.h)
    if mass <= 0.0:
        raise DomainError("all samples fall outside the grid")
    return DensityGrid(grid, out / mass)


def l2_decay_series(source, times, grid: SpatialGrid | None = None,
                    bandwidth_scale: float = 1.0) -> list[dict]:
    """Series of t^{1/4} * ||rho_t||_2, one row per requested time.

    `source` is either a list of PdeState snapshots (density read directly) or
    a PathEnsemble (density estimated by KDE; each row also reports the value
    at half the bandwidth as a sensitivity check).
    """
    rows = []
    for t in times:
        if t <= 0.0:
            raise DomainError(f"L2 decay needs t > 0, got {t}")
    if isinstance(source, list) and source and isinstance(source[0], PdeState):
        snap_times = np.array([s.time for s in source])
        for t in times:
            idx = int(np.argmin(np.abs(snap_times - t)))
            if abs(snap_times[idx] - t) > 1e-9 + 1e-9 * abs(t):
                raise DomainError(f"no snapshot at time {t}")
            rows.append({"t": float(t), "bandwidth": 0.0,
                         "value": t ** 0.25 * source[idx].rho.l2_norm(),
                         "value_half_bw": t ** 0.25 * source[idx].rho.l2_norm()})
        return rows
    ensemble = source
    if grid is None:
        raise DomainError("a SpatialGrid is required for ensemble input")
    for t in times:
        k = ensemble.grid.index_of(t)
        samples = ensemble.positions[:, k]
        bw = silverman_bandwidth(samples) * bandwidth_scale
        full = density_estimate(samples, grid, bw)
        half = density_estimate(samples, grid, bw / 2.0)
        rows.append({"t": float(t), "bandwidth": bw,
                     "value": t ** 0.25 * full.l2_norm(),
                     "value_half_bw": t ** 0.25 * half.l2_norm()})
    return rows


# ---------------------------------------------------------------------------
# propagation-of-chaos study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChaosConfig:
    n_values: tuple[int, ...] = (32, 128, 512)
    n_replicas: int = 16
    eval_times: tuple[float, ...] = (0.25, 0.5)
    grid: TimeGrid = TimeGrid(5e-3, 100)
    initial: InitialLaw = InitialLaw.gaussian(0.0, 1.0)
    params: KernelParams = KernelParams(0.0, 1.0)
    space: SpatialGrid = SpatialGrid(-8.0, 8.0, 801)
    cutoff: bool = True
    workers: int = 1


@dataclass
class ChaosReport:
    n_values: list[int]
    times: list[float]
    w1_mean: np.ndarray = field(repr=False)  # (n_values, times)
    w1_se: np.ndarray = field(repr=False)
    slopes: list[float] = field(default_factory=list)  # per time: d log W1 / d log N
    l2_rows: list[dict] = field(default_factory=list)
    seed: int = 0
    w1_replicas: np.ndarray | None = field(default=None, repr=False)  # (n_values, replicas, times)

    def w1_table(self) -> list[dict]:
        rows = []
        for i, n in enumerate(self.n_values):
            for j, t in enumerate(self.times):
                rows.append({"n_particles": n, "t": t,
                             "w1_mean": float(self.w1_mean[i, j]),
                             "w1_se": float(self.w1_se[i, j])})
        return rows


def _chaos_replica(args) -> list[float]:
    """One (N, replica) run: W1 against the PDE density at each eval time."""
    (n, seed_r, grid, initial, params, cutoff, eval_times, ref_payload) = args
    ens = simulate(n, grid, initial, params, seed_r, cutoff=cutoff)
    out = []
    for t, dens in zip(eval_times, ref_payload):
        k = grid.index_of(t)
        out.append(wasserstein1_1d(ens.positions[:, k], dens))
    return out


def chaos_study(config: ChaosConfig, seed: int,
                precomputed: dict[tuple[int, int], list[float]] | None = None) -> ChaosReport:
    """Wasserstein-1 distance of the empirical measure to the PDE density, by N.

    Replicas are independent seeded runs; aggregation is an ordered
    deterministic reduction, so worker count never changes the report.
    `precomputed` maps (n_index, replica) to already-finished W1 rows
    (resumption from per-replica outputs).
    """
    snapshots = pde_solve(config.initial, config.space, config.grid, config.params)
    ref = []
    for t in config.eval_times:
        k = config.grid.index_of(t)
        ref.append(snapshots[k].rho)

    precomputed = precomputed or {}
    jobs, slots = [], []
    n_n, n_t = len(config.n_values), len(config.eval_times)
    results_by_slot: dict[tuple[int, int], list[float]] = dict(precomputed)
    for i_n, n in enumerate(config.n_values):
        for rep in range(config.n_replicas):
            if (i_n, rep) in results_by_slot:
                continue
            seed_r = rng.child_seed(seed, i_n, rep)
            slots.append((i_n, rep))
            jobs.append((n, seed_r, config.grid, config.initial, config.params,
                         config.cutoff, tuple(config.eval_times), tuple(ref)))

    if config.workers > 1 and jobs:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            fresh = list(pool.map(_chaos_replica, jobs, chunksize=1))
    else:
        fresh = [_chaos_replica(j) for j in jobs]
    results_by_slot.update(dict(zip(slots, fresh)))

    w1 = np.array([[results_by_slot[(i_n, rep)] for rep in range(config.n_replicas)]
                   for i_n in range(n_n)], dtype=float).reshape(n_n, config.n_replicas, n_t)
    w1_mean = w1.mean(axis=1)
    w1_se = w1.std(axis=1, ddof=1) / math.sqrt(config.n_replicas)

    slopes = []
    logn = np.log(np.asarray(config.n_values, dtype=float))
    design = np.vstack([logn, np.ones_like(logn)]).T
    for j in range(n_t):
        coef, *_ = np.linalg.lstsq(design, np.log(w1_mean[:, j]), rcond=None)
        slopes.append(float(coef[0]))

    l2_rows = l2_decay_series(snapshots, [t for t in config.eval_times if t > 0])
    return ChaosReport(list(config.n_values), list(config.eval_times),
                       w1_mean, w1_se, slopes, l2_rows, seed, w1)
