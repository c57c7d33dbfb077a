"""Initial laws for particle positions: must integrate to 1 and admit a density."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, DomainError
from .grids import DensityGrid, SpatialGrid

__all__ = ["InitialLaw"]


@dataclass(frozen=True)
class InitialLaw:
    """One of gaussian(mean, std), uniform(lo, hi), two_bump(mixture of two gaussians)."""

    kind: str
    a: float = 0.0
    b: float = 1.0
    c: float = 0.0
    d: float = 1.0
    w: float = 0.5  # weight of the first bump (two_bump only)

    @classmethod
    def gaussian(cls, mean: float = 0.0, std: float = 1.0) -> "InitialLaw":
        if std <= 0:
            raise DomainError(f"gaussian std must be > 0, got {std}")
        return cls("gaussian", mean, std)

    @classmethod
    def uniform(cls, lo: float = -1.0, hi: float = 1.0) -> "InitialLaw":
        if not lo < hi:
            raise DomainError(f"uniform needs lo < hi, got [{lo}, {hi}]")
        return cls("uniform", lo, hi)

    @classmethod
    def two_bump(cls, m1: float = -1.5, s1: float = 0.5, m2: float = 1.5, s2: float = 0.5,
                 w1: float = 0.5) -> "InitialLaw":
        if s1 <= 0 or s2 <= 0:
            raise DomainError("two_bump needs positive stds")
        if not 0.0 < w1 < 1.0:
            raise DomainError(f"two_bump weight must be in (0, 1), got {w1}")
        return cls("two_bump", m1, s1, m2, s2, w1)

    @classmethod
    def from_spec(cls, spec: dict) -> "InitialLaw":
        """Build from a config mapping, e.g. {"kind": "gaussian", "mean": 0, "std": 1}."""
        kind = spec.get("kind")
        try:
            if kind == "gaussian":
                return cls.gaussian(float(spec.get("mean", 0.0)), float(spec.get("std", 1.0)))
            if kind == "uniform":
                return cls.uniform(float(spec.get("lo", -1.0)), float(spec.get("hi", 1.0)))
            if kind == "two_bump":
                return cls.two_bump(float(spec.get("m1", -1.5)), float(spec.get("s1", 0.5)),
                                    float(spec.get("m2", 1.5)), float(spec.get("s2", 0.5)),
                                    float(spec.get("w1", 0.5)))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"unknown initial law kind: {kind!r}")

    def to_spec(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mean": self.a, "std": self.b}
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.a, "hi": self.b}
        return {"kind": "two_bump", "m1": self.a, "s1": self.b, "m2": self.c,
                "s2": self.d, "w1": self.w}

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return _gauss_pdf(x, self.a, self.b)
        if self.kind == "uniform":
            lo, hi = self.a, self.b
            return np.where((x >= lo) & (x <= hi), 1.0 / (hi - lo), 0.0)
        return self.w * _gauss_pdf(x, self.a, self.b) + (1.0 - self.w) * _gauss_pdf(x, self.c, self.d)

    def density_on(self, grid: SpatialGrid) -> DensityGrid:
        """Discretized density, renormalized to unit trapezoidal mass on the grid."""
        vals = self.pdf(grid.nodes())
        mass = np.trapezoid(vals, dx=grid.h)
        if mass <= 0.9:
            raise DomainError(f"grid [{grid.x_min}, {grid.x_max}] truncates the initial law badly (mass {mass:.3f})")
        return DensityGrid(grid, vals / mass)

    def sample_from_pairs(self, u: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Map one (uniform, normal) pair per particle to an initial position.

        Every kind consumes exactly one pair, keeping downstream path noise
        aligned across laws for a fixed stream.
        """
        if self.kind == "gaussian":
            return self.a + self.b * z
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * u
        pick1 = u < self.w
        # reuse the uniform within its branch so the pair fully determines the draw
        return np.where(pick1, self.a + self.b * z, self.c + self.d * z)

    def mean(self) -> float:
        if self.kind == "gaussian":
            return self.a
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return self.w * self.a + (1.0 - self.w) * self.c

    def variance(self) -> float:
        if self.kind == "gaussian":
            return self.b ** 2
        if self.kind == "uniform":
            return (self.b - self.a) ** 2 / 12.0
        m = self.mean()
        return (self.w * (self.b ** 2 + self.a ** 2) + (1.0 - self.w) * (self.d ** 2 + self.c ** 2)) - m ** 2

    def quantile(self, q) -> np.ndarray:
        """Inverse CDF (two_bump via bisection); used by distribution oracles."""
        q = np.asarray(q, dtype=float)
        if self.kind == "gaussian":
            return self.a + self.b * ndtri(q)
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * q
        lo = np.full(q.shape, min(self.a - 10 * self.b, self.c - 10 * self.d))
        hi = np.full(q.shape, max(self.a + 10 * self.b, self.c + 10 * self.d))
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            cdf = self.w * _gauss_cdf(mid, self.a, self.b) + (1 - self.w) * _gauss_cdf(mid, self.c, self.d)
            lo = np.where(cdf < q, mid, lo)
            hi = np.where(cdf >= q, mid, hi)
        return 0.5 * (lo + hi)


def _gauss_pdf(x, mean, std):
    return np.exp(-((x - mean) ** 2) / (2.0 * std ** 2)) / (std * math.sqrt(2.0 * math.pi))


def _gauss_cdf(x, mean, std):
    from scipy.special import ndtr
    return ndtr((x - mean) / std)
