"""Nonlinear response functions and their range-dependent Lipschitz cutoffs.

The diffusion-interaction particle system and the PDE coefficients apply a
scalar function f to interaction fields (convolutions of nonnegative
kernels, so the arguments are always >= 0 in the pipelines).  The family is
selected by name:

* ``identity`` - the linear response f(s) = s (global Lipschitz constant 1;
  intended for nonnegative inputs),
* ``zero``     - f identically 0 (switches the interaction term off),
* ``power``    - f(s) = |s|^p with p > 1 (even, superlinear),
* custom       - any callable pair (value, derivative) via
  :class:`CustomNonlinearity`.

For a finite interaction range ``eta`` and exponent ``alpha`` in [0, 1) the
cutoff version f_eta must equal f on a band [-a_eta, a_eta] while keeping a
global Lipschitz constant at most ``eta**(-alpha)``.  When f is already
globally Lipschitz within that budget, f_eta is f itself.  Otherwise the
band edge is the largest ``a`` with ``sup_{|s| <= a+1} |f'(s)| <=
eta**(-alpha)`` and f_eta composes f with a C^1 soft clamp that is the
identity on the band, turns with derivative falling linearly from 1 to 0
across [a_eta, a_eta + 1], and is constant beyond.  The composition is C^1,
preserves nonnegativity, and meets the Lipschitz budget exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Nonlinearity",
    "CustomNonlinearity",
    "CutoffNonlinearity",
    "make_nonlinearity",
    "make_cutoff",
    "cutoff_eval",
    "cutoff_deriv",
]


@dataclass(frozen=True)
class Nonlinearity:
    """Named member of the response-function family."""

    name: str
    power: float = 2.0

    def __post_init__(self):
        if self.name not in ("identity", "zero", "power"):
            raise ValueError(f"unknown nonlinearity {self.name!r}")
        if self.name == "power" and not self.power > 1.0:
            raise ValueError(f"power exponent must exceed 1, got {self.power!r}")

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if self.name == "identity":
            out = s.copy()
        elif self.name == "zero":
            out = np.zeros_like(s)
        else:
            out = np.abs(s) ** self.power
        return out if out.shape else float(out)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        if self.name == "identity":
            out = np.ones_like(s)
        elif self.name == "zero":
            out = np.zeros_like(s)
        else:
            out = self.power * np.abs(s) ** (self.power - 1.0) * np.sign(s)
        return out if out.shape else float(out)

    def deriv_bound(self, radius: float) -> float:
        """sup of |f'| over [-radius, radius]."""
        if self.name == "identity":
            return 1.0
        if self.name == "zero":
            return 0.0
        return self.power * radius ** (self.power - 1.0)

    @property
    def lip_global(self) -> Optional[float]:
        """Global Lipschitz constant, or None when unbounded."""
        if self.name == "identity":
            return 1.0
        if self.name == "zero":
            return 0.0
        return None


@dataclass(frozen=True)
class CustomNonlinearity:
    """User-supplied response function given by callables.

    ``fn`` and ``dfn`` must be vectorized over numpy arrays.  If the global
    Lipschitz constant is known, pass it; otherwise derivative bounds are
    estimated on a dense grid (4097 samples), which is adequate for smooth
    monotone-derivative functions.
    """

    fn: Callable
    dfn: Callable
    name: str = "custom"
    lip_global: Optional[float] = None

    def value(self, s):
        out = np.asarray(self.fn(np.asarray(s, dtype=float)), dtype=float)
        return out if out.shape else float(out)

    def deriv(self, s):
        out = np.asarray(self.dfn(np.asarray(s, dtype=float)), dtype=float)
        return out if out.shape else float(out)

    def deriv_bound(self, radius: float) -> float:
        grid = np.linspace(-radius, radius, 4097)
        return float(np.max(np.abs(self.dfn(grid))))


def make_nonlinearity(name: str, power: float = 2.0) -> Nonlinearity:
    """Factory for the named family, as written in experiment configs."""
    return Nonlinearity(name=name, power=power)


def _soft_clamp(s, band):
    """Identity on [-band, band], C^1 turn over one unit, constant beyond."""
    a = np.abs(s)
    t = np.clip(a - band, 0.0, 1.0)
    inner = np.minimum(a, band) + (t - 0.5 * t * t)
    return np.sign(s) * inner


def _soft_clamp_deriv(s, band):
    t = np.clip(np.abs(s) - band, 0.0, 1.0)
    return 1.0 - t


@dataclass(frozen=True)
class CutoffNonlinearity:
    """Response function truncated to a global Lipschitz budget.

    ``band`` is the half-width a_eta of the interval where the raw function
    is used verbatim (``math.inf`` when no truncation was needed) and
    ``lip_bound`` is the budget ``eta**(-alpha)``.
    """

    base: Nonlinearity | CustomNonlinearity
    eta: float
    alpha: float
    band: float
    lip_bound: float

    def value(self, s):
        return cutoff_eval(self, s)

    def deriv(self, s):
        return cutoff_deriv(self, s)

    @property
    def is_zero(self) -> bool:
        return getattr(self.base, "name", "") == "zero"


def make_cutoff(base, eta: float, alpha: float) -> CutoffNonlinearity:
    """Build the cutoff version of ``base`` for range ``eta`` and exponent ``alpha``.

    Raises ValueError when no band exists, i.e. when already
    ``sup_{|s| <= 1} |f'| > eta**(-alpha)``; the message names the admissible
    range threshold when one exists.
    """
    if not (np.isfinite(eta) and eta > 0.0):
        raise ValueError(f"eta must be positive, got {eta!r}")
    if not (0.0 <= alpha < 1.0):
        raise ValueError(f"alpha must lie in [0, 1), got {alpha!r}")
    lip_bound = eta ** (-alpha)

    lip_global = base.lip_global
    if lip_global is not None and lip_global <= lip_bound:
        return CutoffNonlinearity(base=base, eta=eta, alpha=alpha,
                                  band=math.inf, lip_bound=lip_bound)

    if base.deriv_bound(1.0) > lip_bound:
        if alpha > 0.0:
            eta_max = base.deriv_bound(1.0) ** (-1.0 / alpha)
            raise ValueError(
                f"interaction range eta={eta!r} is too large for alpha={alpha!r}: "
                f"the Lipschitz budget eta**(-alpha)={lip_bound!r} cannot cover "
                f"|f'| near the origin; eta must be <= {eta_max!r}"
            )
        raise ValueError(
            f"alpha=0 gives Lipschitz budget 1, but |f'| reaches "
            f"{base.deriv_bound(1.0)!r} on [-1, 1]; choose alpha > 0 or a "
            f"function with smaller derivative"
        )

    # Largest band with deriv_bound(band + 1) <= lip_bound, by bisection on
    # the nondecreasing derivative bound.
    lo, hi = 0.0, 1.0
    while base.deriv_bound(hi + 1.0) <= lip_bound:
        lo = hi
        hi *= 2.0
        if hi > 1e12:
            # No violation at any practical scale: use the raw function.
            return CutoffNonlinearity(base=base, eta=eta, alpha=alpha,
                                      band=math.inf, lip_bound=lip_bound)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if base.deriv_bound(mid + 1.0) <= lip_bound:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return CutoffNonlinearity(base=base, eta=eta, alpha=alpha,
                              band=lo, lip_bound=lip_bound)


def cutoff_eval(cut: CutoffNonlinearity, s):
    """Evaluate f_eta; equals the raw function exactly on [-band, band]."""
    if math.isinf(cut.band):
        return cut.base.value(s)
    return cut.base.value(_soft_clamp(s, cut.band))


def cutoff_deriv(cut: CutoffNonlinearity, s):
    """Derivative of f_eta (continuous; |f_eta'| <= lip_bound everywhere)."""
    if math.isinf(cut.band):
        return cut.base.deriv(s)
    clamped = _soft_clamp(s, cut.band)
    out = cut.base.deriv(clamped) * _soft_clamp_deriv(s, cut.band)
    return out if np.asarray(out).shape else float(out)
