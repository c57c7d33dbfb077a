"""Monte Carlo probes of the well-posedness machinery.

Everything here is built on the squared memory functional

    F_t(x, y) = ( sum_{m<k} S(x_{t_k} - y_{t_m}; slab_m) )^2 * 1{x_{t_k} != y_{t_k}}

(the same slab discretization the particle drift uses, without the chi/N
prefactors): window integrals of E F for the scaling law, exponential moments
with and without the 1/N damping, and the exponential (local) martingales of
the full and partial drift-removing changes of measure.

Exponential-moment estimators are heavy-tailed by construction, so every
estimate carries its max sampled exponent and max single-sample weight
fraction; estimates dominated by one sample are flagged unstable rather than
trusted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange
from scipy.special import erf

from . import rng
from .errors import DomainError, StateError
from .grids import TimeGrid
from .initial import InitialLaw
from .kernels import KernelParams
from .particles import PathEnsemble

__all__ = [
    "PathPair",
    "GirsanovAccumulator",
    "functional_F",
    "lemma31_scaling_mc",
    "exp_moment_mc",
    "girsanov_accumulate",
    "girsanov_mean_z",
    "girsanov_mean_z_with_logs",
    "novikov_probe",
]

_SAT_Z = 6.0  # erf(z) == 1.0 in float64 beyond this; skipped slabs are exactly zero


@dataclass(frozen=True)
class PathPair:
    """Two discretized paths on a common grid."""

    grid: TimeGrid
    x: np.ndarray
    x_hat: np.ndarray

    def __post_init__(self) -> None:
        nx, nh = np.asarray(self.x).shape, np.asarray(self.x_hat).shape
        want = (self.grid.n_steps + 1,)
        if nx != want or nh != want:
            raise DomainError(f"paths must have shape {want}, got {nx} and {nh}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.x_hat))):
            raise DomainError("paths must be finite")


def functional_F(pair: PathPair, k: int, params: KernelParams = KernelParams()) -> float:
    """Squared slab-summed memory integral of pair.x against pair.x_hat's history at t_k."""
    if k < 1 or k > pair.grid.n_steps:
        raise DomainError(f"need 1 <= k <= n_steps, got {k}")
    if params.lam != 0.0:
        raise DomainError("functional probes are defined for the undamped kernel")
    xt = pair.x[k]
    if xt == pair.x_hat[k]:
        return 0.0
    dt = pair.grid.dt
    diffs = xt - pair.x_hat[:k]
    ages = np.arange(k, 0, -1)  # slab m covers kernel times ((age-1)dt, age*dt]
    eb = erf(diffs / np.sqrt(2.0 * ages * dt))
    ea = np.where(ages == 1, np.sign(diffs),
                  erf(diffs / np.sqrt(2.0 * np.maximum(ages - 1, 1) * dt)))
    total = float(np.sum(eb - ea))
    return total * total


@njit(cache=True, parallel=True)
def _window_f_integral(w_win, xpath, k1, dt):
    """Per-sample integral dt * sum_j F_{t_{k1+j}}(w, x) over the window times."""
    n_samp, nw = w_win.shape
    out = np.zeros(n_samp)
    kmax = k1 + nw
    sq = np.empty(kmax + 1)
    for d in range(1, kmax + 1):
        sq[d] = math.sqrt(2.0 * d * dt)
    sq[0] = 0.0
    for s in prange(n_samp):
        acc = 0.0
        for j in range(1, nw + 1):
            k = k1 + j
            wk = w_win[s, j - 1]
            if wk == xpath[k]:
                continue
            tot = 0.0
            for m in range(k):
                x = wk - xpath[m]
                ax = -x if x < 0.0 else x
                d = k - m
                if ax >= _SAT_Z * sq[d]:
                    continue
                eb = math.erf(x / sq[d])
                if d == 1:
                    ea = 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)
                else:
                    ea = math.erf(x / sq[d - 1])
                tot += eb - ea
            acc += tot * tot
        out[s] = acc * dt
    return out


def lemma31_scaling_mc(t1: float, t2: float, x_path: np.ndarray, n_samples: int,
                       grid: TimeGrid, seed: int, restart_point: float = 0.0) -> dict:
    """MC estimate of the window integral of E F_t(w, x) for fresh Brownian w.

    The conditioning at t1 is realized by restarting the Brownian motion at t1
    from `restart_point`; only w_t enters F, so the pre-window increments are
    irrelevant.  Window times are the grid times in (t1, t2].
    """
    if n_samples < 100:
        raise DomainError("n_samples < 100: standard error would be meaningless")
    x_path = np.asarray(x_path, dtype=float)
    if x_path.shape != (grid.n_steps + 1,):
        raise DomainError("x_path must be sampled on the full grid")
    k1 = grid.index_of(t1)
    k2 = grid.index_of(t2)
    if k2 < k1:
        raise DomainError(f"need t1 <= t2, got {t1} > {t2}")
    if k1 == k2:
        return {"estimate": 0.0, "std_error": 0.0, "n_samples": n_samples}
    nw = k2 - k1
    noise = rng.normal_matrix(seed, range(n_samples), nw, skip_pairs=0)
    w_win = restart_point + math.sqrt(grid.dt) * np.cumsum(noise, axis=1)
    vals = _window_f_integral(w_win, x_path, k1, grid.dt)
    return {
        "estimate": float(vals.mean()),
        "std_error": float(vals.std(ddof=1) / math.sqrt(n_samples)),
        "n_samples": n_samples,
    }


def _sample_paths(kind: str, value: float, n: int, grid: TimeGrid, seed: int) -> np.ndarray:
    """Path samples for the independent process in the exponential-moment probes."""
    if kind == "constant":
        return np.full((n, grid.n_steps + 1), float(value))
    if kind == "brownian":
        noise = rng.normal_matrix(seed, range(n), grid.n_steps, skip_pairs=0)
        paths = np.empty((n, grid.n_steps + 1))
        paths[:, 0] = value
        np.cumsum(math.sqrt(grid.dt) * noise, axis=1, out=paths[:, 1:])
        paths[:, 1:] += value
        return paths
    raise DomainError(f"unknown path law {kind!r} (use 'brownian' or 'constant')")


@njit(cache=True, parallel=True)
def _paired_f_integral(W, Y, dt):
    """Per-sample dt * sum_k F_{t_k}(w, y) over the whole grid (independent paths w, y)."""
    n_samp, n1 = W.shape
    n = n1 - 1
    out = np.zeros(n_samp)
    sq = np.empty(n + 1)
    for d in range(1, n + 1):
        sq[d] = math.sqrt(2.0 * d * dt)
    sq[0] = 0.0
    for s in prange(n_samp):
        acc = 0.0
        for k in range(1, n + 1):
            wk = W[s, k]
            if wk == Y[s, k]:
                continue
            tot = 0.0
            for m in range(k):
                x = wk - Y[s, m]
                ax = -x if x < 0.0 else x
                d = k - m
                if ax >= _SAT_Z * sq[d]:
                    continue
                eb = math.erf(x / sq[d])
                if d == 1:
                    ea = 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)
                else:
                    ea = math.erf(x / sq[d - 1])
                tot += eb - ea
            acc += tot * tot
        out[s] = acc * dt
    return out


def exp_moment_mc(alpha: float, grid: TimeGrid, law_of_y: tuple[str, float],
                  n_samples: int, seed: int, scale_inv_n: int | None = None,
                  w_start: float = 0.0) -> dict:
    """Estimate E exp{a' * integral_0^T F_t(w, Y) dt}, a' = alpha or alpha/N.

    w is Brownian from w_start; Y is drawn independently from law_of_y
    ("brownian"/"constant", parameter).  Returns the estimate with standard
    error, the max sampled exponent, and the max single-sample weight
    fraction; `stable` is False when one sample carries over half the weight.
    """
    if alpha <= 0.0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    if scale_inv_n is not None and scale_inv_n < 1:
        raise DomainError(f"scale_inv_n must be a positive integer, got {scale_inv_n}")
    eff = alpha / scale_inv_n if scale_inv_n else alpha
    W = _sample_paths("brownian", w_start, n_samples, grid, rng.child_seed(seed, 1))
    Y = _sample_paths(law_of_y[0], law_of_y[1], n_samples, grid, rng.child_seed(seed, 2))
    exponents = eff * _paired_f_integral(W, Y, grid.dt)
    m = float(exponents.max())
    shifted = np.exp(exponents - m)
    max_weight = float(1.0 / shifted.sum())  # largest sample's share of the total weight
    vals = np.exp(exponents)
    return {
        "estimate": float(vals.mean()),
        "std_error": float(vals.std(ddof=1) / math.sqrt(n_samples)),
        "max_exponent": m,
        "max_weight_fraction": max_weight,
        "stable": bool(max_weight <= 0.5),
        "n_samples": n_samples,
    }


# ---------------------------------------------------------------------------
# Girsanov bookkeeping
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _beta_step_batch(pos3, k, r, dt, chi):
    """Drift-difference vector beta at step k for a batch of ensembles.

    Components i < r (and all components when rem == 0) carry the full
    interaction drift; components i >= r sum only over the r driftless
    particles' histories.  Normalization is chi/N throughout.
    """
    n_rep, n = pos3.shape[0], pos3.shape[1]
    out = np.zeros((n_rep, n))
    if k == 0:
        return out
    sq = np.empty(k + 1)
    for d in range(1, k + 1):
        sq[d] = math.sqrt(2.0 * d * dt)
    sq[0] = 0.0
    for rep in prange(n_rep):
        for i in range(n):
            xi = pos3[rep, i, k]
            j_hi = n if (r == 0 or i < r) else r
            acc = 0.0
            for j in range(j_hi):
                if pos3[rep, j, k] == xi:
                    continue
                for m in range(k):
                    x = xi - pos3[rep, j, m]
                    ax = -x if x < 0.0 else x
                    d = k - m
                    if ax >= _SAT_Z * sq[d]:
                        continue
                    eb = math.erf(x / sq[d])
                    if d == 1:
                        ea = 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)
                    else:
                        ea = math.erf(x / sq[d - 1])
                    acc += eb - ea
            out[rep, i] = acc * (chi / n)
    return out


@dataclass
class GirsanovAccumulator:
    """Running pieces of the log exponential martingale: log_weight = ito - quad/2.

    For r >= 1 the Ito term is the signed integral -int beta . dW of the
    partial transform; for r == 0 it is +int B . dW of the full transform.
    quad_term is the nondecreasing quadratic variation integral.
    """

    times: np.ndarray
    ito_term: np.ndarray
    quad_term: np.ndarray
    r: int

    @property
    def log_weight(self) -> np.ndarray:
        return self.ito_term - 0.5 * self.quad_term

    @property
    def final_weight(self) -> float:
        return float(np.exp(self.log_weight[-1]))


def girsanov_accumulate(ensemble: PathEnsemble, r: int, params: KernelParams) -> GirsanovAccumulator:
    """Accumulate the discrete Ito and quadratic-variation sums along one ensemble."""
    if ensemble.increments is None:
        raise StateError("ensemble does not retain Brownian increments")
    n = ensemble.n_particles
    if not 0 <= r < n:
        raise DomainError(f"need 0 <= r < N, got r={r}, N={n}")
    ensemble.require_filled(ensemble.grid.n_steps)
    if params.lam != 0.0:
        raise DomainError("the change-of-measure probes are defined for the undamped kernel")
    grid = ensemble.grid
    pos3 = ensemble.positions[None, :, :]
    sign = 1.0 if r == 0 else -1.0
    ito = np.zeros(grid.n_steps + 1)
    quad = np.zeros(grid.n_steps + 1)
    for k in range(grid.n_steps):
        if params.chi == 0.0:
            beta = np.zeros((1, n))
        else:
            beta = _beta_step_batch(pos3, k, r, grid.dt, params.chi)
        ito[k + 1] = ito[k] + sign * float(beta[0] @ ensemble.increments[:, k])
        quad[k + 1] = quad[k] + float(beta[0] @ beta[0]) * grid.dt
    return GirsanovAccumulator(grid.times(), ito, quad, r)


def _batch_log_weights(pos: np.ndarray, incr: np.ndarray, r: int, dt: float, chi: float,
                       sign: float) -> tuple[np.ndarray, np.ndarray]:
    n_steps = incr.shape[2]
    ito = np.zeros(pos.shape[0])
    quad = np.zeros(pos.shape[0])
    for k in range(n_steps):
        beta = _beta_step_batch(pos, k, r, dt, chi)
        ito += sign * np.einsum("ri,ri->r", beta, incr[:, :, k])
        quad += np.einsum("ri,ri->r", beta, beta) * dt
    return ito, quad


def girsanov_mean_z_with_logs(r: int, n_replicas: int, n_particles: int, grid: TimeGrid,
                              initial: InitialLaw, params: KernelParams, seed: int,
                              chunk: int = 2048) -> tuple[dict, np.ndarray]:
    """Sample mean of the exponential martingale over independent driftless ensembles.

    Under the Wiener base measure E Z = 1 whenever the drift satisfies the
    Novikov bound, which is the computable shadow of the well-posedness
    argument.  Returns (summary, per-replica log weights).
    """
    if not 0 <= r < n_particles:
        raise DomainError(f"need 0 <= r < N, got r={r}, N={n_particles}")
    sign = 1.0 if r == 0 else -1.0
    zs = np.empty(n_replicas)
    logs = np.empty(n_replicas)
    done = 0
    while done < n_replicas:
        take = min(chunk, n_replicas - done)
        pos, incr = _brownian_batch_offset(take, done, n_particles, grid, initial, seed)
        ito, quad = _batch_log_weights(pos, incr, r, grid.dt, params.chi, sign)
        logs[done:done + take] = ito - 0.5 * quad
        zs[done:done + take] = np.exp(logs[done:done + take])
        done += take
    summary = {
        "mean": float(zs.mean()),
        "std_error": float(zs.std(ddof=1) / math.sqrt(n_replicas)),
        "mean_log": float(logs.mean()),
        "max_log": float(logs.max()),
        "n_replicas": n_replicas,
    }
    return summary, logs


def girsanov_mean_z(r: int, n_replicas: int, n_particles: int, grid: TimeGrid,
                    initial: InitialLaw, params: KernelParams, seed: int,
                    chunk: int = 2048) -> dict:
    summary, _ = girsanov_mean_z_with_logs(r, n_replicas, n_particles, grid, initial,
                                           params, seed, chunk)
    return summary


def _brownian_batch_offset(n_rep: int, offset: int, n_particles: int, grid: TimeGrid,
                           initial: InitialLaw, master_seed: int):
    pos = np.empty((n_rep, n_particles, grid.n_steps + 1))
    incr = np.empty((n_rep, n_particles, grid.n_steps))
    for row in range(n_rep):
        seed_r = rng.child_seed(master_seed, offset + row)
        u, z = rng.uniform_normal_pairs(seed_r, range(n_particles))
        pos[row, :, 0] = initial.sample_from_pairs(u, z)
        incr[row] = math.sqrt(grid.dt) * rng.normal_matrix(seed_r, range(n_particles), grid.n_steps)
    for k in range(grid.n_steps):
        pos[:, :, k + 1] = pos[:, :, k] + incr[:, :, k]
    return pos, incr


def novikov_probe(kappa: float, n_samples: int, n_particles: int, grid: TimeGrid,
                  initial: InitialLaw, params: KernelParams, seed: int,
                  chunk: int = 2048) -> dict:
    """Estimate E exp{kappa * int_0^T |B_t|^2 dt} with B the full drift along Brownian paths."""
    if kappa <= 0.0:
        raise DomainError(f"kappa must be > 0, got {kappa}")
    exps = np.empty(n_samples)
    done = 0
    while done < n_samples:
        take = min(chunk, n_samples - done)
        pos, _ = _brownian_batch_offset(take, done, n_particles, grid, initial, seed)
        quad = np.zeros(take)
        for k in range(grid.n_steps):
            beta = _beta_step_batch(pos, k, 0, grid.dt, params.chi)
            quad += np.einsum("ri,ri->r", beta, beta) * grid.dt
        exps[done:done + take] = kappa * quad
        done += take
    m = float(exps.max())
    shifted = np.exp(exps - m)
    max_weight = float(1.0 / shifted.sum())
    vals = np.exp(exps)
    return {
        "estimate": float(vals.mean()),
        "std_error": float(vals.std(ddof=1) / math.sqrt(n_samples)),
        "max_exponent": m,
        "max_weight_fraction": max_weight,
        "stable": bool(max_weight <= 0.5),
        "n_samples": n_samples,
    }
