"""Particle ensembles, initial sampling, cell index, empirical convolutions.

An ensemble holds the positions of n species with N particles each.  The
empirical convolution at a particle is the kernel-weighted average over the
other particles,

    S_j(x_ki) = (1/N) * sum_l B_ij((x_ki - x_lj) / eta),

which feeds the diffusion coefficient of the density-coupled system; the
own term (l, j) == (k, i) is excluded there.  Its gradient counterpart
drives the drift-coupled system and sums over all (l, j) (the own term
vanishes because the kernel gradient is zero at the origin).

Two access paths exist and agree to floating summation order: per-particle
queries through :class:`CellIndex` (cells of side eta; a 3-cell window is a
superset of the eta-ball) and whole-ensemble batch sums over sorted
positions (`interaction_sums`, `interaction_grad_sums`) used by the time
steppers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _pairsum
from .kernels import KernelFamily, scaled_kernel_eval, scaled_kernel_grad

__all__ = [
    "GaussianMixture",
    "ParticleEnsemble",
    "CellIndex",
    "sample_initial",
    "build_cells",
    "empirical_convolution",
    "empirical_grad_convolution",
    "interaction_sums",
    "interaction_grad_sums",
]


@dataclass(frozen=True)
class GaussianMixture:
    """1D Gaussian mixture: tuple of (mean, variance, weight) components."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(m), float(v), float(w)) for m, v, w in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        total = sum(w for _, _, w in comps)
        if not np.isfinite(total) or total <= 0.0:
            raise ValueError("mixture weights must have positive finite sum")
        if any(v <= 0.0 or not np.isfinite(v) or not np.isfinite(m) or w < 0.0
               for m, v, w in comps):
            raise ValueError("mixture needs finite means, positive variances, "
                             "nonnegative weights")
        comps = tuple((m, v, w / total) for m, v, w in comps)
        object.__setattr__(self, "components", comps)

    def pdf(self, x):
        """Mixture density (unit total mass) at points ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for mean, var, weight in self.components:
            out += weight / np.sqrt(2.0 * np.pi * var) * np.exp(-(x - mean) ** 2 / (2.0 * var))
        return out

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``count`` iid points; component choice then conditional normal."""
        weights = np.array([w for _, _, w in self.components])
        means = np.array([m for m, _, _ in self.components])
        stds = np.sqrt([v for _, v, _ in self.components])
        cum = np.cumsum(weights)
        cum[-1] = 1.0
        comp = np.searchsorted(cum, rng.random(count), side="right")
        return means[comp] + stds[comp] * rng.standard_normal(count)


@dataclass
class ParticleEnsemble:
    """Positions of n species with N particles each, at a common time.

    ``positions`` has shape (n_species, count, dim); the interacting systems
    implemented here are one-dimensional.
    """

    positions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 3:
            raise ValueError(f"positions must be (species, particle, dim), got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        self.positions = pos

    @property
    def n_species(self) -> int:
        return self.positions.shape[0]

    @property
    def count(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]


def sample_initial(mixtures: Sequence[GaussianMixture], count: int,
                   rngs: Sequence[np.random.Generator]) -> ParticleEnsemble:
    """Sample a fresh ensemble at time 0, one stream per species."""
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    if len(rngs) != len(mixtures):
        raise ValueError("need exactly one random stream per species")
    pos = np.empty((len(mixtures), count, 1))
    for i, (mix, rng) in enumerate(zip(mixtures, rngs)):
        pos[i, :, 0] = mix.sample(count, rng)
    return ParticleEnsemble(positions=pos, time=0.0)


class CellIndex:
    """Uniform 1D cells of side ``cell_size`` over each species' particles.

    Every particle belongs to exactly one cell (floor(x / cell_size)); a
    query returns the candidates from the 3-cell window around a point,
    which is a superset of all particles within ``cell_size``.  Candidates
    come out grouped by cell, ascending particle id within each cell.
    """

    def __init__(self, ensemble: ParticleEnsemble, cell_size: float):
        if not (np.isfinite(cell_size) and cell_size > 0.0):
            raise ValueError(f"cell_size must be positive, got {cell_size!r}")
        if ensemble.dim != 1:
            raise ValueError("cell index supports one-dimensional ensembles")
        self.cell_size = float(cell_size)
        self._order = []
        self._keys = []
        self._starts = []
        ids = np.arange(ensemble.count)
        for i in range(ensemble.n_species):
            cells = np.floor(ensemble.positions[i, :, 0] / self.cell_size).astype(np.int64)
            order = np.lexsort((ids, cells))
            sorted_cells = cells[order]
            keys, starts = np.unique(sorted_cells, return_index=True)
            self._order.append(order)
            self._keys.append(keys)
            self._starts.append(np.append(starts, len(order)))

    def cell_of(self, x: float) -> int:
        return int(np.floor(x / self.cell_size))

    def query(self, species: int, x: float) -> np.ndarray:
        """Candidate particle ids of ``species`` within the 3-cell window at x."""
        center = self.cell_of(x)
        keys = self._keys[species]
        starts = self._starts[species]
        order = self._order[species]
        chunks = []
        for cell in (center - 1, center, center + 1):
            pos = np.searchsorted(keys, cell)
            if pos < len(keys) and keys[pos] == cell:
                chunks.append(order[starts[pos]:starts[pos + 1]])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)

    def members(self, species: int, cell: int) -> np.ndarray:
        """Particle ids of ``species`` in one cell, ascending."""
        keys = self._keys[species]
        pos = np.searchsorted(keys, cell)
        if pos < len(keys) and keys[pos] == cell:
            starts = self._starts[species]
            return self._order[species][starts[pos]:starts[pos + 1]]
        return np.empty(0, dtype=np.int64)


def build_cells(ensemble: ParticleEnsemble, cell_size: float) -> CellIndex:
    """Index the ensemble with cells of side ``cell_size`` (usually eta)."""
    return CellIndex(ensemble, cell_size)


def empirical_convolution(ensemble: ParticleEnsemble, cells: CellIndex,
                          k: int, i: int, family: KernelFamily) -> np.ndarray:
    """Kernel averages S_j at particle (k, i), own term excluded.

    Returns a vector over source species j.  Normalization is 1/N with N the
    per-species particle count.
    """
    x = ensemble.positions[i, k, 0]
    n = ensemble.n_species
    out = np.zeros(n)
    for j in range(n):
        ids = cells.query(j, x)
        if j == i:
            ids = ids[ids != k]
        if ids.size:
            vals = scaled_kernel_eval(x - ensemble.positions[j, ids, 0], i, j, family)
            out[j] = np.sum(vals) / ensemble.count
    return out


def empirical_grad_convolution(ensemble: ParticleEnsemble, cells: CellIndex,
                               k: int, i: int, family: KernelFamily) -> np.ndarray:
    """Kernel-gradient averages at particle (k, i), all pairs included.

    The own term is kept (it is exactly zero).  Returns a vector over source
    species j (1D gradients).
    """
    x = ensemble.positions[i, k, 0]
    n = ensemble.n_species
    out = np.zeros(n)
    for j in range(n):
        ids = cells.query(j, x)
        if ids.size:
            vals = scaled_kernel_grad(x - ensemble.positions[j, ids, 0], i, j, family)
            out[j] = np.sum(vals) / ensemble.count
    return out


def _sorted_views(ensemble: ParticleEnsemble):
    orders = []
    sorted_pos = []
    for i in range(ensemble.n_species):
        x = ensemble.positions[i, :, 0]
        order = np.argsort(x, kind="stable")
        orders.append(order)
        sorted_pos.append(np.ascontiguousarray(x[order]))
    return orders, sorted_pos


def interaction_sums(ensemble: ParticleEnsemble, family: KernelFamily) -> np.ndarray:
    """Batch empirical convolutions: out[i, k, j] = S_j(x_ki), own term excluded.

    Equals per-particle :func:`empirical_convolution` up to floating
    summation order.  Species pairs with both masses zero are skipped (their
    kernels vanish identically).
    """
    if ensemble.dim != 1:
        raise ValueError("interaction sums support one-dimensional ensembles")
    n, count = ensemble.n_species, ensemble.count
    if family.n_species != n:
        raise ValueError("kernel family and ensemble disagree on species count")
    inv_eta = 1.0 / family.eta
    orders, xs = _sorted_views(ensemble)
    out = np.zeros((n, count, n))
    for i in range(n):
        for j in range(i, n):
            if family.pair_mass[i, j] == 0.0 and family.pair_mass[j, i] == 0.0:
                continue
            if i == j:
                acc = np.zeros(count)
                _pairsum.pair_values_same(xs[i], inv_eta, acc)
                out[i, orders[i], i] = acc * (family.scale(i, i) / count)
            else:
                acc_i = np.zeros(count)
                acc_j = np.zeros(count)
                _pairsum.pair_values_cross(xs[i], xs[j], inv_eta, acc_i, acc_j)
                out[i, orders[i], j] = acc_i * (family.scale(i, j) / count)
                out[j, orders[j], i] = acc_j * (family.scale(j, i) / count)
    return out


def interaction_grad_sums(ensemble: ParticleEnsemble, family: KernelFamily) -> np.ndarray:
    """Batch gradient convolutions: out[i, k, j] = (1/N) sum_l dB_ij(x_ki - x_lj).

    Matches per-particle :func:`empirical_grad_convolution` up to floating
    summation order.
    """
    if ensemble.dim != 1:
        raise ValueError("interaction sums support one-dimensional ensembles")
    n, count = ensemble.n_species, ensemble.count
    if family.n_species != n:
        raise ValueError("kernel family and ensemble disagree on species count")
    inv_eta = 1.0 / family.eta
    orders, xs = _sorted_views(ensemble)
    out = np.zeros((n, count, n))
    for i in range(n):
        for j in range(i, n):
            if family.pair_mass[i, j] == 0.0 and family.pair_mass[j, i] == 0.0:
                continue
            if i == j:
                acc = np.zeros(count)
                _pairsum.pair_grads_same(xs[i], inv_eta, acc)
                out[i, orders[i], i] = acc * (family.scale(i, i) / (family.eta * count))
            else:
                acc_i = np.zeros(count)
                acc_j = np.zeros(count)
                _pairsum.pair_grads_cross(xs[i], xs[j], inv_eta, acc_i, acc_j)
                out[i, orders[i], j] = acc_i * (family.scale(i, j) / (family.eta * count))
                out[j, orders[j], i] = acc_j * (family.scale(j, i) / (family.eta * count))
    return out
