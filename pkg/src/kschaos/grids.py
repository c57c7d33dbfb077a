"""Uniform time and space grids plus the nonnegative unit-mass density container."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = ["TimeGrid", "SpatialGrid", "DensityGrid"]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k*dt, k = 0..n_steps; horizon T = dt*n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise DomainError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Grid index of time t; t must sit on the grid to within tol."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > tol:
            raise DomainError(f"time {t} is not on the grid (dt={self.dt}, n={self.n_steps})")
        return k


@dataclass(frozen=True)
class SpatialGrid:
    """n_cells uniformly spaced sample points spanning [x_min, x_max] inclusive."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self) -> None:
        if not self.x_min < self.x_max:
            raise DomainError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.n_cells < 16:
            raise DomainError(f"need n_cells >= 16, got {self.n_cells}")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_cells - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_cells)


@dataclass
class DensityGrid:
    """Nonnegative density sampled on a SpatialGrid, trapezoidal mass ~ 1."""

    grid: SpatialGrid
    values: np.ndarray = field(repr=False)

    MASS_TOL = 1e-6

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_cells,):
            raise DomainError(f"density shape {self.values.shape} does not match grid ({self.grid.n_cells},)")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("density values must be finite")

    def mass(self) -> float:
        return float(np.trapezoid(self.values, dx=self.grid.h))

    def l2_norm(self) -> float:
        return math.sqrt(float(np.trapezoid(self.values ** 2, dx=self.grid.h)))

    def cdf(self) -> np.ndarray:
        """Piecewise-linear CDF sampled at the nodes (trapezoid accumulation)."""
        v = self.values
        h = self.grid.h
        out = np.concatenate([[0.0], np.cumsum(0.5 * h * (v[1:] + v[:-1]))])
        return out

    def check(self, mass_tol: float | None = None) -> "DensityGrid":
        tol = self.MASS_TOL if mass_tol is None else mass_tol
        if np.min(self.values) < -1e-12:
            raise DomainError(f"density has negative values (min {np.min(self.values):.3e})")
        m = self.mass()
        if abs(m - 1.0) > tol:
            raise DomainError(f"density mass {m} deviates from 1 by more than {tol}")
        return self
