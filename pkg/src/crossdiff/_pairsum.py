"""Single-threaded numba cores for pairwise mollifier sums (1D).

Positions come in ascending order; each routine walks a two-pointer window
of half-width eta and evaluates every unordered in-range pair exactly once,
crediting both endpoints (the bump profile is even, its derivative odd).
Sums are UNSCALED profile values: callers apply the pair-mass prefactor,
the eta powers, and the 1/N normalization afterwards.

The bump formula here must stay in lockstep with ``kernels.profile_eval``;
the test suite pins the two against each other and against brute force.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "pair_values_cross",
    "pair_values_same",
    "pair_grads_cross",
    "pair_grads_same",
]


@njit(cache=True)
def pair_values_cross(xa, xb, inv_eta, out_a, out_b):
    """Add bump sums over all (a, b) pairs within eta to both sides."""
    eta = 1.0 / inv_eta
    na = xa.shape[0]
    nb = xb.shape[0]
    lo = 0
    hi = 0
    for k in range(na):
        x = xa[k]
        while lo < nb and xb[lo] <= x - eta:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < nb and xb[hi] < x + eta:
            hi += 1
        s = 0.0
        for l in range(lo, hi):
            dx = (x - xb[l]) * inv_eta
            r2 = dx * dx
            if r2 < 1.0:
                w = np.exp(-1.0 / (1.0 - r2))
                s += w
                out_b[l] += w
        out_a[k] += s


@njit(cache=True)
def pair_values_same(xs, inv_eta, out):
    """Same-species bump sums over unordered pairs; the self pair is skipped."""
    eta = 1.0 / inv_eta
    n = xs.shape[0]
    hi = 0
    for k in range(n):
        x = xs[k]
        if hi < k + 1:
            hi = k + 1
        while hi < n and xs[hi] < x + eta:
            hi += 1
        s = 0.0
        for l in range(k + 1, hi):
            dx = (x - xs[l]) * inv_eta
            r2 = dx * dx
            if r2 < 1.0:
                w = np.exp(-1.0 / (1.0 - r2))
                s += w
                out[l] += w
        out[k] += s


@njit(cache=True)
def pair_grads_cross(xa, xb, inv_eta, out_a, out_b):
    """Signed radial-derivative sums d/dr B at dx/eta; antisymmetric pair credit."""
    eta = 1.0 / inv_eta
    na = xa.shape[0]
    nb = xb.shape[0]
    lo = 0
    hi = 0
    for k in range(na):
        x = xa[k]
        while lo < nb and xb[lo] <= x - eta:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < nb and xb[hi] < x + eta:
            hi += 1
        s = 0.0
        for l in range(lo, hi):
            u = (x - xb[l]) * inv_eta
            r2 = u * u
            if r2 < 1.0:
                one = 1.0 - r2
                g = -2.0 * u / (one * one) * np.exp(-1.0 / one)
                s += g
                out_b[l] -= g
        out_a[k] += s


@njit(cache=True)
def pair_grads_same(xs, inv_eta, out):
    """Same-species signed derivative sums; the self pair contributes zero."""
    eta = 1.0 / inv_eta
    n = xs.shape[0]
    hi = 0
    for k in range(n):
        x = xs[k]
        if hi < k + 1:
            hi = k + 1
        while hi < n and xs[hi] < x + eta:
            hi += 1
        s = 0.0
        for l in range(k + 1, hi):
            u = (x - xs[l]) * inv_eta
            r2 = u * u
            if r2 < 1.0:
                one = 1.0 - r2
                g = -2.0 * u / (one * one) * np.exp(-1.0 / one)
                s += g
                out[l] -= g
        out[k] += s
