"""Experiment configuration: validated dataclass, INI round-trip, presets.

A configuration fully determines one experiment: which pipelines run, the
species coefficients, the interaction range, time grid, initial mixtures,
particle counts, and output layout.  The on-disk format is a plain INI file
(sections and key = value lines) so configs stay diffable and editable by
hand.  Floats are written with ``repr`` so that save -> load is lossless.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .kernels import KernelFamily
from .nonlinearity import make_cutoff, make_nonlinearity
from .particles import GaussianMixture
from .sde import TimeGrid, min_particles

__all__ = [
    "KNOWN_SYSTEMS",
    "PRESET_NAMES",
    "ExperimentConfig",
    "preset",
]

# Pipelines the runner knows how to execute.  A config may request several;
# they share the seed plan and output directory.
KNOWN_SYSTEMS = (
    "skt-particles",
    "gradient-particles",
    "intermediate",
    "macroscopic",
    "pde-local",
    "pde-nonlocal",
    "coupled-error",
    "eta-sweep",
)

_RESPONSE_NAMES = ("identity", "zero", "power")

# Tolerance for matching snapshot times to grid points m * dt.
_SNAP_TOL = 1e-9

Component = Tuple[float, float, float]


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, validated description of one experiment.

    ``initial`` holds one tuple of (mean, variance, weight) components per
    species.  Exactly one of ``count`` and ``delta`` must be given: an
    explicit particle count, or the accuracy parameter from which the
    minimal admissible count is derived.
    """

    label: str
    systems: Tuple[str, ...]
    n_species: int
    sigma: Tuple[float, ...]
    pair_mass: Tuple[Tuple[float, ...], ...]
    response: str
    alpha: float
    eta: float
    n_sim: int
    dt: float
    n_steps: int
    snapshots: Tuple[float, ...]
    initial: Tuple[Tuple[Component, ...], ...]
    seed: int
    out_dir: str
    power: float = 2.0
    count: Optional[int] = None
    delta: Optional[float] = None
    potential: bool = False
    histogram_lo: float = -15.0
    histogram_hi: float = 15.0
    histogram_bins: int = 100
    pde_half_width: float = 15.0
    pde_n_cells: int = 1500
    dt_pde: Optional[float] = None

    def __post_init__(self):
        if not self.label or any(ch in self.label for ch in "/\\ \t\n"):
            raise ValueError(f"label must be a nonempty token, got {self.label!r}")
        systems = tuple(self.systems)
        if not systems:
            raise ValueError("systems must name at least one pipeline")
        for name in systems:
            if name not in KNOWN_SYSTEMS:
                raise ValueError(
                    f"unknown system {name!r}; known: {', '.join(KNOWN_SYSTEMS)}"
                )
        if len(set(systems)) != len(systems):
            raise ValueError(f"duplicate systems in {systems!r}")
        n = self.n_species
        if n < 1:
            raise ValueError(f"n_species must be >= 1, got {n}")
        sigma = tuple(float(s) for s in self.sigma)
        if len(sigma) != n or any(not (math.isfinite(s) and s > 0.0) for s in sigma):
            raise ValueError(f"sigma must be {n} positive reals, got {self.sigma!r}")
        rows = tuple(tuple(float(v) for v in row) for row in self.pair_mass)
        if len(rows) != n or any(len(row) != n for row in rows):
            raise ValueError(f"pair_mass must be {n}x{n}, got {self.pair_mass!r}")
        for row in rows:
            for v in row:
                if not (math.isfinite(v) and v >= 0.0):
                    raise ValueError(f"pair_mass entries must be >= 0, got {v!r}")
        if self.response not in _RESPONSE_NAMES:
            raise ValueError(
                f"unknown response {self.response!r}; known: {', '.join(_RESPONSE_NAMES)}"
            )
        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ValueError(f"alpha must be >= 0, got {self.alpha!r}")
        if not (math.isfinite(self.eta) and self.eta > 0.0):
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if (self.count is None) == (self.delta is None):
            raise ValueError("exactly one of count and delta must be set")
        if self.count is not None and self.count < 2:
            raise ValueError(f"count must be >= 2, got {self.count!r}")
        if self.delta is not None and not (math.isfinite(self.delta) and self.delta > 0.0):
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        if self.n_sim < 1:
            raise ValueError(f"n_sim must be >= 1, got {self.n_sim!r}")
        grid = TimeGrid(self.dt, self.n_steps)  # validates dt, n_steps
        snaps = tuple(float(t) for t in self.snapshots)
        if not snaps:
            raise ValueError("snapshots must list at least one time")
        if any(b <= a for a, b in zip(snaps, snaps[1:])):
            raise ValueError(f"snapshots must be strictly increasing, got {snaps!r}")
        for t in snaps:
            step = round(t / self.dt)
            if not (0 <= step <= self.n_steps) or abs(step * self.dt - t) > _SNAP_TOL:
                raise ValueError(
                    f"snapshot {t!r} is not a grid time m*dt with 0 <= m <= "
                    f"{self.n_steps} (dt={self.dt!r}, horizon={grid.horizon!r})"
                )
        init = tuple(
            tuple((float(m), float(v), float(w)) for m, v, w in comps)
            for comps in self.initial
        )
        if len(init) != n:
            raise ValueError(
                f"initial must give one mixture per species ({n}), got {len(init)}"
            )
        for comps in init:
            GaussianMixture(components=comps)  # validates variance/weight
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must fit in 64 bits, got {self.seed!r}")
        if not self.out_dir:
            raise ValueError("out_dir must be nonempty")
        if not self.histogram_hi > self.histogram_lo:
            raise ValueError(
                f"histogram window is empty: [{self.histogram_lo!r}, {self.histogram_hi!r}]"
            )
        if self.histogram_bins < 2:
            raise ValueError(f"histogram_bins must be >= 2, got {self.histogram_bins!r}")
        if not (math.isfinite(self.pde_half_width) and self.pde_half_width > 0.0):
            raise ValueError(f"pde_half_width must be positive, got {self.pde_half_width!r}")
        if self.pde_n_cells < 2:
            raise ValueError(f"pde_n_cells must be >= 2, got {self.pde_n_cells!r}")
        if self.dt_pde is not None and not (math.isfinite(self.dt_pde) and self.dt_pde > 0.0):
            raise ValueError(f"dt_pde must be positive when given, got {self.dt_pde!r}")
        object.__setattr__(self, "systems", systems)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "pair_mass", rows)
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "seed", int(self.seed))

    # -- derived objects ---------------------------------------------------

    def mixtures(self) -> Tuple[GaussianMixture, ...]:
        return tuple(GaussianMixture(components=comps) for comps in self.initial)

    def family(self) -> KernelFamily:
        return KernelFamily(eta=self.eta, pair_mass=np.array(self.pair_mass), dim=1)

    def base_response(self):
        return make_nonlinearity(self.response, power=self.power)

    def cutoff_response(self):
        """Response with its Lipschitz budget enforced for this eta and alpha."""
        return make_cutoff(self.base_response(), eta=self.eta, alpha=self.alpha)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.dt, self.n_steps)

    def resolved_count(self) -> int:
        """Particle count: explicit, or the minimal admissible one for delta."""
        if self.count is not None:
            return self.count
        return min_particles(self.eta, self.delta, dim=1, alpha=self.alpha)

    def snapshot_steps(self) -> Tuple[int, ...]:
        return tuple(round(t / self.dt) for t in self.snapshots)

    # -- serialization -----------------------------------------------------

    def to_ini_text(self) -> str:
        parser = configparser.ConfigParser()
        parser["run"] = {
            "label": self.label,
            "systems": " ".join(self.systems),
            "n_sim": str(self.n_sim),
            "seed": str(self.seed),
            "out_dir": self.out_dir,
        }
        parser["model"] = {
            "n_species": str(self.n_species),
            "sigma": _floats(self.sigma),
            "pair_mass": " ; ".join(_floats(row) for row in self.pair_mass),
            "response": self.response,
            "power": repr(self.power),
            "alpha": repr(self.alpha),
            "eta": repr(self.eta),
            "potential": "true" if self.potential else "false",
        }
        particles = {}
        if self.count is not None:
            particles["count"] = str(self.count)
        else:
            particles["delta"] = repr(self.delta)
        parser["particles"] = particles
        parser["time"] = {
            "dt": repr(self.dt),
            "n_steps": str(self.n_steps),
            "snapshots": _floats(self.snapshots),
        }
        parser["initial"] = {
            f"species_{i}": " ; ".join(_floats(c) for c in comps)
            for i, comps in enumerate(self.initial)
        }
        pde = {
            "half_width": repr(self.pde_half_width),
            "n_cells": str(self.pde_n_cells),
        }
        if self.dt_pde is not None:
            pde["dt_pde"] = repr(self.dt_pde)
        parser["pde"] = pde
        parser["output"] = {
            "histogram_lo": repr(self.histogram_lo),
            "histogram_hi": repr(self.histogram_hi),
            "histogram_bins": str(self.histogram_bins),
        }
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini_text(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ValueError(f"malformed config: {exc}") from exc
        try:
            run = parser["run"]
            model = parser["model"]
            particles = parser["particles"]
            time_sec = parser["time"]
            initial_sec = parser["initial"]
            pde = parser["pde"]
            output = parser["output"]
        except KeyError as exc:
            raise ValueError(f"config is missing section {exc.args[0]!r}") from exc
        n_species = int(model["n_species"])
        initial = []
        for i in range(n_species):
            key = f"species_{i}"
            if key not in initial_sec:
                raise ValueError(f"config is missing [initial] {key}")
            comps = []
            for chunk in initial_sec[key].split(";"):
                vals = [float(tok) for tok in chunk.split()]
                if len(vals) != 3:
                    raise ValueError(
                        f"each initial component needs 'mean var weight', got {chunk!r}"
                    )
                comps.append(tuple(vals))
            initial.append(tuple(comps))
        count = int(particles["count"]) if "count" in particles else None
        delta = float(particles["delta"]) if "delta" in particles else None
        return cls(
            label=run["label"],
            systems=tuple(run["systems"].split()),
            n_sim=int(run["n_sim"]),
            seed=int(run["seed"]),
            out_dir=run["out_dir"],
            n_species=n_species,
            sigma=tuple(float(t) for t in model["sigma"].split()),
            pair_mass=tuple(
                tuple(float(t) for t in row.split())
                for row in model["pair_mass"].split(";")
            ),
            response=model["response"],
            power=float(model["power"]),
            alpha=float(model["alpha"]),
            eta=float(model["eta"]),
            potential=model.getboolean("potential"),
            count=count,
            delta=delta,
            dt=float(time_sec["dt"]),
            n_steps=int(time_sec["n_steps"]),
            snapshots=tuple(float(t) for t in time_sec["snapshots"].split()),
            initial=tuple(initial),
            pde_half_width=float(pde["half_width"]),
            pde_n_cells=int(pde["n_cells"]),
            dt_pde=float(pde["dt_pde"]) if "dt_pde" in pde else None,
            histogram_lo=float(output["histogram_lo"]),
            histogram_hi=float(output["histogram_hi"]),
            histogram_bins=int(output["histogram_bins"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_ini_text())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_ini_text(fh.read())

    def config_hash(self) -> str:
        """Stable content hash of the canonical serialized form."""
        return hashlib.sha256(self.to_ini_text().encode("utf-8")).hexdigest()

    def with_updates(self, **changes) -> "ExperimentConfig":
        """Return a copy with fields replaced (validation reruns)."""
        return replace(self, **changes)


def _floats(values: Sequence[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


# ---------------------------------------------------------------------------
# Presets

_TWO_SPECIES_INITIAL = (((-1.0, 2.0, 1.0),), ((1.0, 2.0, 1.0),))

_PRESETS = {
    # Nonsymmetric two-species run: species 0 diffuses strongly through
    # species 1 (355) but feels only a weak back-coupling (25).
    "nsymm": dict(
        systems=("skt-particles", "gradient-particles"),
        n_species=2,
        sigma=(1.0, 2.0),
        pair_mass=((0.0, 355.0), (25.0, 0.0)),
        initial=_TWO_SPECIES_INITIAL,
        dt=0.01,
        n_steps=200,
        snapshots=(2.0,),
        count=5000,
        n_sim=500,
    ),
    # Symmetric coupling, tracked at three times to watch segregation build.
    "symm": dict(
        systems=("skt-particles", "gradient-particles"),
        n_species=2,
        sigma=(1.0, 2.0),
        pair_mass=((0.0, 355.0), (355.0, 0.0)),
        initial=_TWO_SPECIES_INITIAL,
        dt=0.01,
        n_steps=200,
        snapshots=(0.01, 0.15, 2.0),
        count=5000,
        n_sim=500,
    ),
    # Three species with a cyclic, nonsymmetric coupling pattern.
    "3species": dict(
        systems=("skt-particles", "gradient-particles"),
        n_species=3,
        sigma=(1.0, 2.0, 3.0),
        pair_mass=((0.0, 355.0, 355.0), (25.0, 0.0, 25.0), (355.0, 0.0, 0.0)),
        initial=(((-1.0, 2.0, 1.0),), ((2.0, 2.0, 1.0),), ((-3.0, 2.0, 1.0),)),
        dt=0.01,
        n_steps=200,
        snapshots=(2.0,),
        count=5000,
        n_sim=500,
    ),
    # Weak-coupling configuration sized for quick convergence sweeps.
    "smalldata": dict(
        systems=("eta-sweep",),
        n_species=2,
        sigma=(1.0, 1.0),
        pair_mass=((0.0, 0.5), (0.25, 0.0)),
        initial=_TWO_SPECIES_INITIAL,
        dt=0.01,
        n_steps=100,
        snapshots=(1.0,),
        count=1000,
        n_sim=20,
    ),
}

PRESET_NAMES = tuple(_PRESETS)

# Reduced scale for quick runs on a single desk machine.  Only the three
# full-scale presets are shrunk; smalldata is already this small.
_DESK_COUNT = 2000
_DESK_N_SIM = 50


def preset(
    name: str,
    desk_scale: bool = False,
    seed: int = 0,
    out_dir: Optional[str] = None,
) -> ExperimentConfig:
    """Build a named preset configuration.

    ``desk_scale=True`` lowers count/n_sim to a quick profile and tags the
    label, so reduced runs are never mistaken for full-scale results.
    """
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")
    fields = dict(_PRESETS[name])
    label = name
    if desk_scale and fields["count"] > _DESK_COUNT:
        fields["count"] = _DESK_COUNT
        fields["n_sim"] = _DESK_N_SIM
        label = f"{name}-desk"
    return ExperimentConfig(
        label=label,
        response="identity",
        alpha=0.0,
        eta=2.0,
        potential=False,
        seed=seed,
        out_dir=out_dir if out_dir is not None else f"out/{label}",
        **fields,
    )
