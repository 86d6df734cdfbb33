"""Distances, summaries, and error statistics for particle and grid data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DensityEstimate",
    "histogram_density",
    "wasserstein2_1d",
    "lp_density_error",
    "segregation_overlap",
    "mode_count",
    "StrongError",
    "strong_error",
]


@dataclass
class DensityEstimate:
    """Histogram density on a fixed window, one row per species.

    ``values`` integrates (per species) to the fraction of samples that fell
    inside the window; ``out_of_range`` counts the rest, so silently clipped
    tails are visible to the caller.
    """

    edges: np.ndarray
    values: np.ndarray
    out_of_range: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])


def histogram_density(samples_per_species, lo: float, hi: float,
                      bins: int) -> DensityEstimate:
    """Bin samples into a density estimate on [lo, hi).

    ``samples_per_species`` is a sequence of 1D arrays, one per species;
    pooled data from several runs is passed as one concatenated array.
    Samples outside the window are counted, not clipped.
    """
    if not (hi > lo) or bins < 1:
        raise ValueError("need hi > lo and at least one bin")
    edges = np.linspace(lo, hi, bins + 1)
    width = (hi - lo) / bins
    values = np.empty((len(samples_per_species), bins))
    outside = np.empty(len(samples_per_species), dtype=np.int64)
    for i, raw in enumerate(samples_per_species):
        samples = np.asarray(raw, dtype=float).ravel()
        if samples.size == 0:
            raise ValueError(f"species {i} has no samples")
        counts, _ = np.histogram(samples, bins=bins, range=(lo, hi))
        values[i] = counts / (samples.size * width)
        outside[i] = samples.size - counts.sum()
    return DensityEstimate(edges=edges, values=values, out_of_range=outside)


def wasserstein2_1d(a, b) -> float:
    """Quadratic transport distance between two equal-size 1D samples.

    In one dimension the optimal coupling sorts both samples, so the
    distance is the root mean square gap between order statistics.  Unequal
    sizes are rejected rather than resampled.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size != b.size:
        raise ValueError(f"sample sizes differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("need nonempty samples")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def lp_density_error(values_a, values_b, dx: float, p: float = 2.0) -> float:
    """L^p grid distance between two densities on a common uniform grid."""
    values_a = np.asarray(values_a, dtype=float)
    values_b = np.asarray(values_b, dtype=float)
    if values_a.shape != values_b.shape:
        raise ValueError("density grids must have identical shape")
    diff = np.abs(values_a - values_b)
    if np.isinf(p):
        return float(diff.max())
    if p <= 0.0:
        raise ValueError(f"p must be positive, got {p!r}")
    return float((np.sum(diff ** p) * dx) ** (1.0 / p))


def segregation_overlap(values_i, values_j, dx: float) -> float:
    """Shared mass between two densities: the integral of their pointwise min.

    One for identical unit-mass profiles, zero for disjoint supports; lower
    values mean stronger spatial segregation.
    """
    values_i = np.asarray(values_i, dtype=float)
    values_j = np.asarray(values_j, dtype=float)
    if values_i.shape != values_j.shape:
        raise ValueError("density grids must have identical shape")
    return float(np.minimum(values_i, values_j).sum() * dx)


def mode_count(values, threshold: float = 0.1, window: int = 5) -> int:
    """Number of well-separated peaks in a gridded density.

    The profile is smoothed with a flat moving average of ``window`` bins,
    then interior local maxima above ``threshold`` times the global maximum
    are counted.  Maxima must be strict against their surroundings; a
    plateau of equal values counts once (so exactly symmetric profiles with
    a two-bin peak are one mode, matching the tie-free case).
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 3:
        raise ValueError("need at least three bins")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd bin count")
    kernel = np.full(window, 1.0 / window)
    smooth = np.convolve(values, kernel, mode="same")
    peak = smooth.max()
    if peak <= 0.0:
        return 0
    cut = threshold * peak
    modes = 0
    left = 0
    size = smooth.size
    while left < size:
        right = left
        while right + 1 < size and smooth[right + 1] == smooth[left]:
            right += 1
        level = smooth[left]
        interior = left > 0 and right < size - 1
        if interior and level > smooth[left - 1] and level > smooth[right + 1] \
                and level > cut:
            modes += 1
        left = right + 1
    return modes


@dataclass
class StrongError:
    """Worst-particle coupling error with its Monte Carlo uncertainty.

    ``value`` is the largest run-averaged squared sup-distance over particle
    indices, ``per_particle`` the run averages themselves, and ``std_error``
    the standard error of the mean at the maximizing index.
    """

    value: float
    per_particle: np.ndarray
    std_error: float


def strong_error(supsq_runs) -> StrongError:
    """Aggregate per-run sup-square arrays into the coupling error statistic.

    Each element of ``supsq_runs`` is an (n_species, count) array of squared
    sup-distances from one independent run (as produced by ``run_coupled``).
    Species are summed per particle, runs are averaged, and the maximum over
    particle indices is reported.
    """
    stacked = np.stack([np.asarray(r, dtype=float).sum(axis=0)
                        for r in supsq_runs])             # (runs, count)
    n_runs = stacked.shape[0]
    per_particle = stacked.mean(axis=0)
    k_star = int(np.argmax(per_particle))
    if n_runs > 1:
        se = float(stacked[:, k_star].std(ddof=1) / np.sqrt(n_runs))
    else:
        se = float("nan")
    return StrongError(value=float(per_particle[k_star]),
                       per_particle=per_particle, std_error=se)
