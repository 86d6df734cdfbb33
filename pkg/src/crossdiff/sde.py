"""Euler time stepping for the interacting and mean-field particle systems.

Two interacting systems share one ensemble layout:

  * density-coupled: each particle diffuses with coefficient
    sqrt(2 sigma_i + 2 sum_j f_eta(empirical B_ij-convolution)), so the
    interaction enters through the noise amplitude;
  * gradient-coupled: each particle drifts down the empirical
    sum_j grad(B_ij)-convolution with constant diffusion sqrt(2 sigma_i).

Their mean-field counterparts replace the empirical measure with a gridded
density evolved by the matching PDE: the intermediate sampler keeps the
kernel convolution and the range cutoff, the macroscopic sampler uses the
pointwise coefficient f(a_ij u_j(x)).  The optional environmental potential
U(x) = -x^2/2 adds the outward drift +x everywhere.

Randomness is organized so that every (run, species, particle) triple owns
an independent counter-based stream, which makes runs reproducible under
any batching: drawing a path in blocks of steps is bit-identical to drawing
it in one call, and two systems stepped with the same draw arrays see
exactly the same Brownian increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .particles import ParticleEnsemble, sample_initial, interaction_sums, \
    interaction_grad_sums
from .pde import FieldState, grid_convolution, interpolate_field

__all__ = [
    "TimeGrid",
    "NoisePlan",
    "IncrementSource",
    "min_particles",
    "em_step_skt",
    "em_step_gradient",
    "em_step_meanfield",
    "CoupledResult",
    "run_coupled",
]

DOMAIN_INCREMENTS = 0
DOMAIN_INITIAL = 1
DOMAIN_AUXILIARY = 2

_RUN_BITS = 30
_SPECIES_BITS = 8
_PARTICLE_BITS = 24


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0, dt, 2 dt, ..., n_steps * dt."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be nonnegative, got {self.n_steps!r}")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class NoisePlan:
    """Deterministic map from (domain, run, species, particle) to an RNG.

    Each stream is a counter-based generator keyed by two 64-bit words: the
    master seed and a packed identifier

        domain << 62 | run << 32 | species << 24 | particle,

    with domain 0 for Brownian increments, 1 for initial positions, and 2
    for auxiliary draws (for example reference sampling inside metrics).
    Distinct triples therefore never share a stream, and recreating a
    stream always replays the same values.
    """

    master_seed: int

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ValueError("master_seed must fit in 64 bits")

    def _generator(self, domain: int, run: int, species: int,
                   particle: int) -> np.random.Generator:
        if not 0 <= run < 2 ** _RUN_BITS:
            raise ValueError(f"run index {run} out of range")
        if not 0 <= species < 2 ** _SPECIES_BITS:
            raise ValueError(f"species index {species} out of range")
        if not 0 <= particle < 2 ** _PARTICLE_BITS:
            raise ValueError(f"particle index {particle} out of range")
        packed = (domain << 62) | (run << 32) | (species << _PARTICLE_BITS) | particle
        key = np.array([self.master_seed, packed], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def initial_rng(self, run: int, species: int) -> np.random.Generator:
        """Stream for drawing the initial positions of one species."""
        return self._generator(DOMAIN_INITIAL, run, species, 0)

    def auxiliary_rng(self, run: int, tag: int = 0) -> np.random.Generator:
        """Stream for side draws that must not perturb the dynamics."""
        return self._generator(DOMAIN_AUXILIARY, run, 0, tag)

    def increment_source(self, run: int, species: int, count: int,
                         dim: int = 1) -> "IncrementSource":
        return IncrementSource(self, run, species, count, dim)

    def sample_initial(self, run: int, mixtures, count: int) -> ParticleEnsemble:
        rngs = [self.initial_rng(run, i) for i in range(len(mixtures))]
        return sample_initial(mixtures, count, rngs)


class IncrementSource:
    """Standard-normal increments for one run and species, one substream
    per particle.

    ``draw(k)`` returns a (count, k, dim) block and advances every
    particle's stream by k * dim values, so any partition of a path into
    blocks reproduces the same numbers.
    """

    def __init__(self, plan: NoisePlan, run: int, species: int, count: int,
                 dim: int = 1):
        if count < 1 or dim < 1:
            raise ValueError("count and dim must be positive")
        self._gens = [plan._generator(DOMAIN_INCREMENTS, run, species, p)
                      for p in range(count)]
        self._dim = dim

    def draw(self, n_steps: int) -> np.ndarray:
        out = np.empty((len(self._gens), n_steps, self._dim))
        for p, gen in enumerate(self._gens):
            out[p] = gen.standard_normal(n_steps * self._dim).reshape(
                n_steps, self._dim)
        return out


def min_particles(eta: float, delta: float, dim: int = 1,
                  alpha: float = 0.0) -> int:
    """Smallest particle count satisfying N >= exp(eta^-2(d+1+alpha) / delta).

    The requirement grows doubly fast as the interaction range shrinks; when
    the exponent passes the float range the function refuses and reports the
    required log N instead of overflowing.
    """
    if eta <= 0.0 or delta <= 0.0 or dim < 1:
        raise ValueError("need eta > 0, delta > 0, dim >= 1")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha!r}")
    exponent = eta ** (-2.0 * (dim + 1 + alpha)) / delta
    if exponent > 700.0:
        raise ValueError(
            f"particle requirement overflows: log N ~ {exponent:.6g} for "
            f"eta={eta!r}, delta={delta!r}; relax delta or enlarge eta"
        )
    return int(math.ceil(math.exp(exponent)))


def _check_step_inputs(ensemble, sigma, dt, noise):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (ensemble.n_species,) or np.any(sigma <= 0.0):
        raise ValueError("sigma must be positive, one entry per species")
    if not (np.isfinite(dt) and dt > 0.0):
        raise ValueError(f"dt must be positive, got {dt!r}")
    noise = np.asarray(noise, dtype=float)
    if noise.shape != ensemble.positions.shape:
        raise ValueError(
            f"noise shape {noise.shape} must match positions "
            f"{ensemble.positions.shape}"
        )
    return sigma, noise


def _diffusion_coefficient(sigma, response_sums):
    """sqrt(2 sigma_i + 2 * summed response), guarded against negatives."""
    arg = 2.0 * sigma[:, None] + 2.0 * response_sums
    floor = 2.0 * sigma.min() * (1.0 - 1e-12)
    if float(arg.min()) < floor:
        raise RuntimeError(
            f"diffusion argument dropped to {arg.min()!r}; the response "
            "must keep sigma_i + sum_j f(..) positive"
        )
    return np.sqrt(arg)


def em_step_skt(ensemble: ParticleEnsemble, family, response, sigma, dt,
                noise, potential_on: bool = False) -> ParticleEnsemble:
    """One Euler step of the density-coupled system.

    ``noise`` holds standard-normal draws shaped like the positions; the
    step scales them by sqrt(dt) internally.  When the response is
    identically zero the interaction sums are skipped outright, which is
    exact because their contribution would be zero anyway.
    """
    sigma, noise = _check_step_inputs(ensemble, sigma, dt, noise)
    x = ensemble.positions
    if response_is_zero(response) or (
            not family.pair_mass.any() and float(response.value(0.0)) == 0.0):
        coef = np.broadcast_to(np.sqrt(2.0 * sigma)[:, None], x.shape[:2])
    else:
        sums = interaction_sums(ensemble, family)          # (n, N, n)
        coef = _diffusion_coefficient(sigma, response.value(sums).sum(axis=2))
    new = x + coef[:, :, None] * math.sqrt(dt) * noise
    if potential_on:
        new = new + x * dt
    return ParticleEnsemble(positions=new, time=ensemble.time + dt)


def em_step_gradient(ensemble: ParticleEnsemble, family, sigma, dt, noise,
                     potential_on: bool = False) -> ParticleEnsemble:
    """One Euler step of the gradient-coupled system (drift interaction)."""
    sigma, noise = _check_step_inputs(ensemble, sigma, dt, noise)
    x = ensemble.positions
    if family.pair_mass.any():
        grads = interaction_grad_sums(ensemble, family)    # (n, N, n)
        drift = -grads.sum(axis=2)[:, :, None] * dt
    else:
        drift = 0.0
    new = x + drift + np.sqrt(2.0 * sigma)[:, None, None] * math.sqrt(dt) * noise
    if potential_on:
        new = new + x * dt
    return ParticleEnsemble(positions=new, time=ensemble.time + dt)


def em_step_meanfield(ensemble: ParticleEnsemble, field: FieldState, family,
                      response, sigma, dt, noise, mode: str,
                      potential_on: bool = False) -> ParticleEnsemble:
    """One Euler step driven by a gridded density instead of the ensemble.

    ``mode`` picks the coefficient: "intermediate" evaluates the cutoff
    response at kernel convolutions of the field, "macroscopic" evaluates
    the raw response at f(a_ij u_j(x)).  The field must be synchronized
    with the ensemble clock.
    """
    sigma, noise = _check_step_inputs(ensemble, sigma, dt, noise)
    if ensemble.dim != 1:
        raise ValueError("mean-field stepping is one-dimensional")
    if abs(field.time - ensemble.time) > 1e-9 * max(1.0, abs(ensemble.time)):
        raise ValueError(
            f"field time {field.time!r} does not match ensemble time "
            f"{ensemble.time!r}"
        )
    if field.n_species != ensemble.n_species:
        raise ValueError("field and ensemble disagree on species count")
    x = ensemble.positions
    n = ensemble.n_species
    if response_is_zero(response):
        coef = np.broadcast_to(np.sqrt(2.0 * sigma)[:, None], x.shape[:2])
    else:
        sums = np.zeros((n, ensemble.count))
        for i in range(n):
            pos = x[i, :, 0]
            for j in range(n):
                if mode == "intermediate":
                    conv = grid_convolution(field.values[j], field.dx, i, j,
                                            family)
                    probe = FieldState(values=conv[None, :],
                                       half_width=field.half_width,
                                       time=field.time)
                    arg = interpolate_field(probe, 0, pos)
                elif mode == "macroscopic":
                    arg = family.pair_mass[i, j] * interpolate_field(field, j, pos)
                else:
                    raise ValueError(f"unknown mode {mode!r}")
                sums[i] += response.value(arg)
        coef = _diffusion_coefficient(sigma, sums)
    new = x + coef[:, :, None] * math.sqrt(dt) * noise
    if potential_on:
        new = new + x * dt
    return ParticleEnsemble(positions=new, time=ensemble.time + dt)


def response_is_zero(response) -> bool:
    """True when the response object is the identically-zero map."""
    return bool(getattr(response, "is_zero", False)) or \
        getattr(response, "name", "") == "zero"


@dataclass
class CoupledResult:
    """Outcome of one coupled run: sup-square distances plus both endpoints."""

    supsq: np.ndarray
    interacting: ParticleEnsemble
    meanfield: ParticleEnsemble


def run_coupled(plan: NoisePlan, run: int, mixtures, family, response, sigma,
                grid: TimeGrid, field_states, count: int,
                potential_on: bool = False,
                block_steps: int = 64) -> CoupledResult:
    """Step the density-coupled system and its intermediate mean-field twin
    from shared initial positions with shared Brownian increments.

    ``field_states`` is the PDE solution on the same time grid (as produced
    by ``pde.solve`` with matching out_dt and n_out).  The result carries
    the running maximum over all grid times of the squared coupling
    distance, shaped (n_species, count); the starting time contributes zero
    because both systems share their initial positions exactly.
    """
    if len(field_states) != grid.n_steps + 1:
        raise ValueError(
            f"need {grid.n_steps + 1} field states, got {len(field_states)}"
        )
    interacting = plan.sample_initial(run, mixtures, count)
    meanfield = ParticleEnsemble(positions=interacting.positions.copy(), time=0.0)
    n = interacting.n_species
    sources = [plan.increment_source(run, i, count, dim=1) for i in range(n)]
    supsq = np.zeros((n, count))
    step = 0
    while step < grid.n_steps:
        block = min(block_steps, grid.n_steps - step)
        draws = np.stack([src.draw(block) for src in sources])
        for s in range(block):
            noise = draws[:, :, s, :]
            field = field_states[step]
            interacting = em_step_skt(interacting, family, response, sigma,
                                      grid.dt, noise, potential_on)
            meanfield = em_step_meanfield(meanfield, field, family, response,
                                          sigma, grid.dt, noise,
                                          "intermediate", potential_on)
            step += 1
            diff = interacting.positions - meanfield.positions
            np.maximum(supsq, (diff * diff).sum(axis=2), out=supsq)
    return CoupledResult(supsq=supsq, interacting=interacting,
                         meanfield=meanfield)
