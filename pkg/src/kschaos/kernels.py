"""The singular interaction kernel: pointwise values, L^p norms, exact time slabs.

The kernel is the spatial derivative of the heat kernel, optionally damped:

    K_t(x) = e^{-lam*t} * (-x) / (sqrt(2*pi) * t^{3/2}) * exp(-x^2 / (2t))

Its time integral over a slab [a, b] at frozen spatial argument has an erf
closed form (lam = 0), which is what removes the t^{-3/2} singularity from
every drift computation downstream: no quadrature ever sees the singular
endpoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import erf

from .errors import DomainError

__all__ = [
    "KernelParams",
    "heat_kernel",
    "kernel_eval",
    "kernel_lp_norm",
    "kernel_time_integral",
    "slab_integral",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class KernelParams:
    """Physical parameters: decay rate lam >= 0 (1/time), coupling chi >= 0.

    chi = 0 switches the interaction off entirely (the Brownian control runs);
    the chemotaxis model itself has chi > 0.
    """

    lam: float = 0.0
    chi: float = 1.0

    def __post_init__(self) -> None:
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise DomainError(f"decay rate must be finite and >= 0, got {self.lam}")
        if not (self.chi >= 0.0 and math.isfinite(self.chi)):
            raise DomainError(f"coupling strength must be finite and >= 0, got {self.chi}")


def heat_kernel(t: float, x):
    """Gaussian density with variance t, the antiderivative family behind K."""
    if t <= 0.0:
        raise DomainError(f"heat kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    return np.exp(-(x * x) / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def kernel_eval(t: float, x, params: KernelParams = KernelParams()):
    """K_t(x); odd in x, vanishing at the origin and at infinity."""
    if not (t > 0.0 and math.isfinite(t)):
        raise DomainError(f"kernel_eval needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("kernel_eval needs finite x")
    damp = math.exp(-params.lam * t)
    out = damp * (-x) / (_SQRT_2PI * t ** 1.5) * np.exp(-(x * x) / (2.0 * t))
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _norm_constant(p: float) -> float:
    # C_p with ||K_t||_p = C_p * t^{-(1 - 1/(2p))} for lam = 0; evaluated once
    # per p by quadrature of the reduced one-dimensional Gaussian moment.
    val, _ = quad(lambda z: z ** p * math.exp(-p * z * z / 2.0), 0.0, np.inf,
                  epsabs=1e-14, epsrel=1e-12)
    return (2.0 * val / (2.0 * math.pi) ** (p / 2.0)) ** (1.0 / p)


def kernel_lp_norm(t: float, p: float, params: KernelParams = KernelParams()) -> float:
    """L^p(R) norm of K_t; scales exactly as t^{-(1 - 1/(2p))}."""
    if not (t > 0.0 and math.isfinite(t)):
        raise DomainError(f"kernel_lp_norm needs t > 0, got {t}")
    if not (p >= 1.0 and math.isfinite(p)):
        raise DomainError(f"kernel_lp_norm needs 1 <= p < inf, got {p}")
    return math.exp(-params.lam * t) * _norm_constant(float(p)) * t ** -(1.0 - 1.0 / (2.0 * p))


def slab_integral(x, a: float, b: float):
    """Integral of the undamped kernel over times [a, b] at frozen argument x.

    Equals erf(x / sqrt(2b)) - erf(x / sqrt(2a)) with the a = 0 limit taken as
    sign(x); always in [-1, 1].  Vectorized over x.
    """
    x = np.asarray(x, dtype=float)
    eb = erf(x / math.sqrt(2.0 * b))
    if a > 0.0:
        ea = erf(x / math.sqrt(2.0 * a))
    else:
        ea = np.sign(x)
    out = eb - ea
    return float(out) if out.ndim == 0 else out


def kernel_time_integral(x: float, a: float, b: float,
                         params: KernelParams = KernelParams()) -> float:
    """Integral of K_u(x) du over u in [a, b]; erf closed form, quadrature for lam > 0."""
    if not (0.0 <= a < b):
        raise DomainError(f"kernel_time_integral needs 0 <= a < b, got a={a}, b={b}")
    if not math.isfinite(x):
        raise DomainError("kernel_time_integral needs finite x")
    if x == 0.0:
        return 0.0
    if params.lam == 0.0:
        return float(slab_integral(x, a, b))
    # damped kernel: adaptive quadrature; the integrand vanishes exponentially
    # fast as u -> 0 for x != 0, so the open left endpoint is benign
    val, _ = quad(lambda u: kernel_eval(u, x, params), a, b,
                  epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(val)
