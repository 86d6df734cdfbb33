"""Compactly supported mollifier kernels for pairwise interaction fields.

The profile is the classic smooth bump

    B(r) = exp(-1 / (1 - r^2))   for |r| < 1,   0 otherwise,

so everything built from it is C-infinity, nonnegative, even, and supported
in the closed unit ball.  A :class:`KernelFamily` holds one interaction range
``eta`` and one matrix of pair masses ``a``; the (i, j) kernel is

    B_ij(x) = (a_ij / m_B) * eta^(-dim) * B(|x| / eta),

where ``m_B`` is the mass of the raw profile over R^dim.  The pair
normalization makes the mass identity exact at every range:
``integral of B_ij over R^dim == a_ij``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

__all__ = [
    "KernelFamily",
    "profile_eval",
    "profile_deriv",
    "kernel_mass",
    "scaled_kernel_eval",
    "scaled_kernel_grad",
]


def profile_eval(r):
    """Evaluate the raw bump profile at radius ``r`` (scalar or array)."""
    arr = np.asarray(r, dtype=float)
    out = np.zeros_like(arr)
    inside = np.abs(arr) < 1.0
    ri = arr[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ri * ri))
    return out if out.shape else float(out)


def profile_deriv(r):
    """Radial derivative dB/dr of the raw profile (scalar or array).

    On the support, dB/dr = -2 r / (1 - r^2)^2 * B(r); zero outside and at
    the support boundary (the bump is flat to all orders there).
    """
    arr = np.asarray(r, dtype=float)
    out = np.zeros_like(arr)
    inside = np.abs(arr) < 1.0
    ri = arr[inside]
    one_minus = 1.0 - ri * ri
    out[inside] = -2.0 * ri / (one_minus * one_minus) * np.exp(-1.0 / one_minus)
    return out if out.shape else float(out)


@lru_cache(maxsize=None)
def kernel_mass(dim: int = 1) -> float:
    """Mass of the raw profile over R^dim, by adaptive quadrature.

    Supported dimensions are 1, 2, 3 (radial reduction).  The quadrature is
    driven to relative tolerance 1e-12 and verified against 1e-10; failure to
    converge raises instead of returning a doubtful value.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2, or 3, got {dim!r}")

    def radial(r: float) -> float:
        return math.exp(-1.0 / (1.0 - r * r))

    if dim == 1:
        integrand = radial
    elif dim == 2:
        integrand = lambda r: 2.0 * math.pi * r * radial(r)
    else:
        integrand = lambda r: 4.0 * math.pi * r * r * radial(r)
    value, abserr = integrate.quad(integrand, -1.0 if dim == 1 else 0.0, 1.0,
                                   epsabs=0.0, epsrel=1e-12)
    if not math.isfinite(value) or value <= 0.0 or abserr > 1e-10 * value:
        raise RuntimeError(
            f"profile mass quadrature did not converge for dim={dim}: "
            f"value={value!r}, abserr={abserr!r}"
        )
    return value


@dataclass(frozen=True, eq=False)
class KernelFamily:
    """Interaction range plus pair-mass matrix for a multi-species system.

    ``pair_mass[i, j]`` is the prescribed total mass a_ij of the (i, j)
    kernel; a zero entry switches that interaction off entirely.
    """

    eta: float
    pair_mass: np.ndarray
    dim: int = 1
    profile_mass: float = field(init=False, repr=False)

    def __post_init__(self):
        a = np.asarray(self.pair_mass, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"pair_mass must be a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(a < 0.0):
            raise ValueError("pair_mass entries must be finite and nonnegative")
        if not (np.isfinite(self.eta) and self.eta > 0.0):
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2, or 3, got {self.dim!r}")
        object.__setattr__(self, "pair_mass", a)
        object.__setattr__(self, "profile_mass", kernel_mass(self.dim))

    @property
    def n_species(self) -> int:
        return self.pair_mass.shape[0]

    def scale(self, i: int, j: int) -> float:
        """Prefactor (a_ij / m_B) * eta^(-dim) of the (i, j) kernel."""
        return self.pair_mass[i, j] / self.profile_mass * self.eta ** (-self.dim)


def _radius(x, dim: int):
    if dim == 1:
        return np.abs(np.asarray(x, dtype=float))
    vec = np.asarray(x, dtype=float)
    if vec.shape != (dim,):
        raise ValueError(f"expected a length-{dim} displacement, got shape {vec.shape}")
    return float(np.sqrt(np.sum(vec * vec)))


def scaled_kernel_eval(x, i: int, j: int, family: KernelFamily):
    """Evaluate the scaled pair kernel B_ij at displacement ``x``.

    For ``family.dim == 1`` the displacement may be a scalar or an array
    (evaluated elementwise); for higher dimensions it is a single length-dim
    vector.
    """
    r = _radius(x, family.dim) / family.eta
    return family.scale(i, j) * profile_eval(r)


def scaled_kernel_grad(x, i: int, j: int, family: KernelFamily):
    """Gradient of the scaled pair kernel B_ij with respect to ``x``.

    Returns a scalar (or elementwise array) for dim 1 and a length-dim vector
    otherwise.  The gradient is odd and vanishes at the origin and outside
    the support.
    """
    coef = family.scale(i, j) / family.eta
    if family.dim == 1:
        s = np.asarray(x, dtype=float) / family.eta
        out = coef * profile_deriv(s)
        return out if out.shape else float(out)
    vec = np.asarray(x, dtype=float)
    r = _radius(vec, family.dim)
    if r == 0.0 or r >= family.eta:
        return np.zeros(family.dim)
    rr = r / family.eta
    return coef * profile_deriv(rr) * (vec / r)
