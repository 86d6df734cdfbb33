"""Explicit finite-volume solvers for 1D cross-diffusion systems.

The systems solved here have the conservative form

    d/dt u_i = d/dx ( u_i * dU/dx ) + d^2/dx^2 P_i,

on a symmetric truncated domain [-L, L] with no-flux boundaries, where the
scalar pressure is

    P_i = u_i * ( sigma_i + sum_j f(a_ij * u_j) )           (local), or
    P_i = u_i * ( sigma_i + sum_j f_eta((B_ij * u_j)(x)) )  (nonlocal),

and the optional environmental potential U(x) = -x^2/2 contributes the
outward advection velocity v(x) = x.  Fluxes use upwinding for advection
and centered differences of P for diffusion, so mass is conserved to
rounding and nonnegativity holds under the stability bound

    dt <= dx^2 / ( 2 * max_{cells,i} dP_i/du + dx * v_max ).

Violations raise; densities are never clamped.  The grid treats u as zero
outside the domain; a boundary-density guard per stored snapshot catches
domains truncated too tightly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .kernels import KernelFamily
from .particles import GaussianMixture

__all__ = [
    "FieldState",
    "make_initial_field",
    "grid_convolution",
    "interpolate_field",
    "inverse_cdf_sample",
    "stable_step_bound",
    "step_local",
    "step_nonlocal",
    "solve",
]

BOUNDARY_DENSITY_LIMIT = 1e-8
MASS_DRIFT_LIMIT = 1e-12
NEGATIVITY_LIMIT = -1e-10


@dataclass
class FieldState:
    """Gridded densities of n species on [-L, L] at one time.

    ``values`` has shape (n_species, n_cells); cell c is centered at
    -L + (c + 1/2) * dx with dx = 2L / n_cells.
    """

    values: np.ndarray
    half_width: float
    time: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] < 4:
            raise ValueError(f"values must be (species, cells >= 4), got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        if not (np.isfinite(self.half_width) and self.half_width > 0.0):
            raise ValueError(f"half_width must be positive, got {self.half_width!r}")
        self.values = vals

    @property
    def n_species(self) -> int:
        return self.values.shape[0]

    @property
    def n_cells(self) -> int:
        return self.values.shape[1]

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    def centers(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.n_cells) + 0.5) * self.dx

    def mass(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dx


def make_initial_field(mixtures: Sequence[GaussianMixture], half_width: float,
                       n_cells: int) -> FieldState:
    """Grid the mixture densities and renormalize each to exactly unit mass."""
    if n_cells < 4:
        raise ValueError(f"n_cells must be at least 4, got {n_cells}")
    dx = 2.0 * half_width / n_cells
    centers = -half_width + (np.arange(n_cells) + 0.5) * dx
    vals = np.empty((len(mixtures), n_cells))
    for i, mix in enumerate(mixtures):
        raw = mix.pdf(centers)
        vals[i] = raw / (raw.sum() * dx)
    return FieldState(values=vals, half_width=half_width, time=0.0)


@lru_cache(maxsize=64)
def _profile_taps(eta: float, dx: float) -> np.ndarray:
    """Raw bump samples at grid offsets inside the support (odd length)."""
    half = int(np.ceil(eta / dx)) - 1
    offsets = np.arange(-half, half + 1) * dx / eta
    return np.exp(-1.0 / (1.0 - offsets ** 2))


def _raw_convolution(values: np.ndarray, dx: float, eta: float) -> np.ndarray:
    """Convolution with the unscaled bump profile, u treated as 0 off-grid."""
    if eta < 2.0 * dx:
        raise ValueError(
            f"kernel under-resolved: eta={eta!r} < 2*dx={2.0 * dx!r}; "
            "refine the grid or enlarge the range"
        )
    return dx * np.convolve(values, _profile_taps(eta, dx), mode="same")


def grid_convolution(values: np.ndarray, dx: float, i: int, j: int,
                     family: KernelFamily) -> np.ndarray:
    """Sampled convolution (B_ij * u)(x_c) on the uniform grid.

    Plain Riemann sum (the bump vanishes with all derivatives at its
    support edge, so the rule converges fast).  The kernel must be
    resolved: eta >= 2 dx.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError("grid_convolution expects one species' values")
    return family.scale(i, j) * _raw_convolution(values, dx, family.eta)


def interpolate_field(field: FieldState, species: int, x) -> np.ndarray:
    """Piecewise-linear interpolation between cell centers; zero outside [-L, L].

    Ghost nodes at the walls make the interpolant continuous on the closed
    domain (boundary densities are guarded to be ~0 anyway).
    """
    centers = field.centers()
    xp = np.concatenate(([-field.half_width], centers, [field.half_width]))
    fp = np.concatenate(([0.0], field.values[species], [0.0]))
    return np.interp(np.asarray(x, dtype=float), xp, fp, left=0.0, right=0.0)


def inverse_cdf_sample(field: FieldState, species: int, count: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Draw iid samples from the gridded density by inverting its CDF.

    The density is treated as piecewise constant on cells, so the CDF is
    piecewise linear at cell edges and draws are uniform within a cell.
    """
    u = field.values[species]
    masses = u * field.dx
    total = masses.sum()
    if total <= 0.0:
        raise ValueError("cannot sample from a zero field")
    cdf = np.concatenate(([0.0], np.cumsum(masses / total)))
    cdf[-1] = 1.0
    edges = np.linspace(-field.half_width, field.half_width, field.n_cells + 1)
    draws = rng.random(count)
    cells = np.searchsorted(cdf, draws, side="right") - 1
    cells = np.clip(cells, 0, field.n_cells - 1)
    span = cdf[cells + 1] - cdf[cells]
    frac = np.where(span > 0.0, (draws - cdf[cells]) / np.where(span > 0.0, span, 1.0), 0.5)
    return edges[cells] + frac * field.dx


def _pressures_and_bound(field, family, response, sigma, potential_on, mode):
    """Pressure fields P_i plus the stability bound for the current state."""
    u = field.values
    n = field.n_species
    if mode == "local":
        args = family.pair_mass[:, :, None] * u[None, :, :]      # (i, j, c)
    elif mode == "nonlocal":
        raw = np.stack([_raw_convolution(u[j], field.dx, family.eta)
                        for j in range(n)])                      # (j, c)
        unit = family.eta ** family.dim * family.profile_mass
        args = (family.pair_mass[:, :, None] / unit) * raw[None, :, :]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    fvals = response.value(args)
    coeff = sigma[:, None] + fvals.sum(axis=1)                   # (i, c)
    pressures = u * coeff
    dP = coeff + u * (family.pair_mass[:, :, None] * response.deriv(args)).sum(axis=1)
    v_max = field.half_width if potential_on else 0.0
    denom = 2.0 * float(np.max(dP)) + field.dx * v_max
    bound = math.inf if denom <= 0.0 else field.dx ** 2 / denom
    return pressures, bound


def stable_step_bound(field, family, response, sigma, potential_on, mode) -> float:
    """Largest admissible explicit time step for the current field."""
    sigma = np.asarray(sigma, dtype=float)
    _, bound = _pressures_and_bound(field, family, response, sigma, potential_on, mode)
    return bound


def _advance(field, pressures, potential_on, dt) -> FieldState:
    u = field.values
    dx = field.dx
    flux = (pressures[:, :-1] - pressures[:, 1:]) / dx           # interior interfaces
    if potential_on:
        v = -field.half_width + (np.arange(field.n_cells - 1) + 1.0) * dx
        upwind = np.where(v > 0.0, u[:, :-1], u[:, 1:])
        flux = flux + v[None, :] * upwind
    new = u.copy()
    new[:, :-1] -= (dt / dx) * flux
    new[:, 1:] += (dt / dx) * flux
    out = FieldState(values=new, half_width=field.half_width, time=field.time + dt)
    drift = np.abs(out.mass() - field.mass())
    if np.any(drift > MASS_DRIFT_LIMIT * np.maximum(field.mass(), 1e-300)):
        raise RuntimeError(f"mass conservation violated: drift {drift.max()!r} in one step")
    if float(new.min()) < NEGATIVITY_LIMIT:
        raise RuntimeError(
            f"density became negative ({new.min()!r}); the step dt={dt!r} is too "
            "aggressive for the current field"
        )
    return out


def _check_args(field, family, sigma):
    if sigma.shape != (field.n_species,) or np.any(sigma <= 0.0):
        raise ValueError("sigma must be positive, one entry per species")
    if family.n_species != field.n_species:
        raise ValueError("kernel family and field disagree on species count")


def _step(field, family, response, sigma, potential_on, dt, mode) -> FieldState:
    sigma = np.asarray(sigma, dtype=float)
    _check_args(field, family, sigma)
    pressures, bound = _pressures_and_bound(field, family, response, sigma,
                                            potential_on, mode)
    if dt > bound * (1.0 + 1e-9):
        raise ValueError(
            f"dt={dt!r} violates the explicit stability bound; the largest "
            f"admissible step for the current field is {bound!r}"
        )
    return _advance(field, pressures, potential_on, dt)


def step_local(field, family, response, sigma, dt, potential_on=False) -> FieldState:
    """One explicit step of the local system (pointwise coefficients f(a_ij u_j))."""
    return _step(field, family, response, sigma, potential_on, dt, "local")


def step_nonlocal(field, family, response, sigma, dt, potential_on=False) -> FieldState:
    """One explicit step of the nonlocal system (convolved coefficients)."""
    return _step(field, family, response, sigma, potential_on, dt, "nonlocal")


def solve(field0: FieldState, family: KernelFamily, response, sigma,
          out_dt: float, n_out: int, mode: str, potential_on: bool = False,
          dt_pde: float | None = None, safety: float = 0.9) -> list[FieldState]:
    """March the field to n_out output times spaced out_dt apart.

    Returns the n_out + 1 states at times m * out_dt (the first is the
    input state restamped at time zero).  Sub-steps inside each output
    interval use ``dt_pde`` when given (validated against the stability
    bound every sub-step) or an adaptive fraction ``safety`` of the
    current bound.  Each stored state must keep its boundary cells
    essentially empty; otherwise the domain is too small and the run
    refuses to continue.
    """
    if out_dt <= 0.0 or n_out < 0:
        raise ValueError("need positive out_dt and nonnegative n_out")
    if mode not in ("local", "nonlocal"):
        raise ValueError(f"unknown mode {mode!r}")
    sigma = np.asarray(sigma, dtype=float)
    _check_args(field0, family, sigma)
    states = [FieldState(values=field0.values.copy(),
                         half_width=field0.half_width, time=0.0)]
    _check_boundary(states[0])
    current = states[0]
    for m in range(n_out):
        t_end = (m + 1) * out_dt
        remaining = t_end - current.time
        while remaining > 1e-14 * out_dt:
            pressures, bound = _pressures_and_bound(current, family, response,
                                                    sigma, potential_on, mode)
            if dt_pde is not None:
                n_sub = max(1, int(np.ceil(remaining / dt_pde - 1e-12)))
                h = remaining / n_sub
                if h > bound * (1.0 + 1e-9):
                    raise ValueError(
                        f"dt_pde={dt_pde!r} violates the stability bound at "
                        f"t={current.time!r}; the largest admissible step is {bound!r}"
                    )
            else:
                h = min(remaining, safety * bound)
                if h <= 1e-13 * out_dt:
                    raise RuntimeError(
                        f"stability bound collapsed to {bound!r} at t={current.time!r}"
                    )
            current = _advance(current, pressures, potential_on, h)
            remaining = t_end - current.time
        current = FieldState(values=current.values, half_width=current.half_width,
                             time=t_end)
        _check_boundary(current)
        states.append(current)
    return states


def _check_boundary(field: FieldState):
    edge = max(float(np.max(np.abs(field.values[:, 0]))),
               float(np.max(np.abs(field.values[:, -1]))))
    if edge >= BOUNDARY_DENSITY_LIMIT:
        raise RuntimeError(
            f"boundary density {edge!r} at t={field.time!r} exceeds "
            f"{BOUNDARY_DENSITY_LIMIT}; enlarge the domain half-width "
            f"(currently {field.half_width!r})"
        )
