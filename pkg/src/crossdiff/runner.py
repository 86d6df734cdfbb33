"""Experiment execution: pipelines, convergence studies, and output files.

``run`` executes every pipeline a config requests and writes densities
(CSV), metrics (JSON), and a manifest into the config's output directory.
``convergence_study`` sweeps the interaction range and reports the coupling
error between the interacting particle system and its mean-field twin.
``emit_plot_data`` turns a finished run into one tidy CSV per figure panel.

Reproducibility contract: all randomness derives from the config seed via
counter-based streams keyed by (domain, run, species, particle), so reruns
of the same config are bit-identical and results do not depend on worker
count or completion order.
"""

from __future__ import annotations

import json
import time as _time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .kernels import KernelFamily
from .metrics import mode_count, segregation_overlap, strong_error, wasserstein2_1d
from .nonlinearity import make_cutoff
from .pde import inverse_cdf_sample, make_initial_field, solve
from .sde import (
    NoisePlan,
    em_step_gradient,
    em_step_meanfield,
    em_step_skt,
    min_particles,
    run_coupled,
)

__all__ = [
    "DEFAULT_STUDY_ETAS",
    "DEFAULT_STUDY_COUNTS",
    "RunManifest",
    "StudyResult",
    "run",
    "convergence_study",
    "emit_plot_data",
]

# Default range ladder for convergence sweeps, with a pinned particle-count
# ladder sized so the default sweep finishes on a desk machine.  Deriving
# counts from an accuracy target instead is available through ``delta``.
DEFAULT_STUDY_ETAS = (2.0, 1.6, 1.3)
DEFAULT_STUDY_COUNTS = (519, 1133, 3341)

_SEED_SCHEME = (
    "counter-based streams: Philox key = [master_seed, domain<<62 | run<<32 | "
    "species<<24 | particle]; domains: 0 increments, 1 initial, 2 auxiliary"
)

# Pipelines that produce averaged snapshot densities from particle runs.
_PARTICLE_SYSTEMS = ("skt-particles", "gradient-particles", "intermediate", "macroscopic")
_PDE_SYSTEMS = ("pde-local", "pde-nonlocal")

_BLOCK_STEPS = 64


# ---------------------------------------------------------------------------
# Manifest


@dataclass
class RunManifest:
    """Inventory of one completed (or partially completed) run."""

    label: str
    config_hash: str
    version: str
    wall_time_s: float
    master_seed: int
    seed_scheme: str
    per_run_seeds: Tuple[Tuple[int, int], ...]
    histogram: dict
    outputs: Tuple[str, ...]
    incomplete: Tuple[str, ...]
    config_ini: str

    def config(self) -> ExperimentConfig:
        return ExperimentConfig.from_ini_text(self.config_ini)

    def to_json_text(self) -> str:
        doc = {
            "label": self.label,
            "config_hash": self.config_hash,
            "version": self.version,
            "wall_time_s": self.wall_time_s,
            "master_seed": self.master_seed,
            "seed_scheme": self.seed_scheme,
            "per_run_seeds": [list(pair) for pair in self.per_run_seeds],
            "histogram": self.histogram,
            "outputs": list(self.outputs),
            "incomplete": list(self.incomplete),
            "config_ini": self.config_ini,
        }
        return json.dumps(doc, indent=2) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            label=doc["label"],
            config_hash=doc["config_hash"],
            version=doc["version"],
            wall_time_s=doc["wall_time_s"],
            master_seed=doc["master_seed"],
            seed_scheme=doc["seed_scheme"],
            per_run_seeds=tuple((int(a), int(b)) for a, b in doc["per_run_seeds"]),
            histogram=doc["histogram"],
            outputs=tuple(doc["outputs"]),
            incomplete=tuple(doc["incomplete"]),
            config_ini=doc["config_ini"],
        )


# ---------------------------------------------------------------------------
# Shared per-run machinery.  A context bundles everything one run needs;
# with a worker pool the context is rebuilt once per worker process from the
# serialized config, so results cannot depend on how runs are scheduled.


def _build_context(config: ExperimentConfig, kind: str,
                   eta: Optional[float] = None,
                   count: Optional[int] = None) -> dict:
    eta = config.eta if eta is None else eta
    count = config.resolved_count() if count is None else count
    family = KernelFamily(eta=eta, pair_mass=np.array(config.pair_mass), dim=1)
    response = make_cutoff(config.base_response(), eta=eta, alpha=config.alpha)
    ctx = {
        "kind": kind,
        "plan": NoisePlan(config.seed),
        "family": family,
        "response": response,
        "sigma": np.array(config.sigma, dtype=float),
        "mixtures": config.mixtures(),
        "grid": config.time_grid(),
        "count": count,
        "potential": config.potential,
        "snap_steps": config.snapshot_steps(),
        "edges": np.linspace(config.histogram_lo, config.histogram_hi,
                             config.histogram_bins + 1),
        "histogram_lo": config.histogram_lo,
        "histogram_hi": config.histogram_hi,
        "histogram_bins": config.histogram_bins,
    }
    if kind in ("intermediate", "macroscopic", "coupled"):
        mode = "local" if kind == "macroscopic" else "nonlocal"
        field0 = make_initial_field(ctx["mixtures"], config.pde_half_width,
                                    config.pde_n_cells)
        ctx["field_states"] = solve(field0, family, response, ctx["sigma"],
                                    out_dt=config.dt, n_out=config.n_steps,
                                    mode=mode, potential_on=config.potential,
                                    dt_pde=config.dt_pde)
    return ctx


def _run_one(ctx: dict, run_index: int) -> dict:
    if ctx["kind"] == "coupled":
        return _run_one_coupled(ctx, run_index)
    return _run_one_density(ctx, run_index)


def _run_one_density(ctx: dict, run_index: int) -> dict:
    """One particle run; returns histogram counts at each snapshot step."""
    plan, grid, count = ctx["plan"], ctx["grid"], ctx["count"]
    kind = ctx["kind"]
    ens = plan.sample_initial(run_index, ctx["mixtures"], count)
    n = ens.n_species
    sources = [plan.increment_source(run_index, s, count) for s in range(n)]
    snap_steps = ctx["snap_steps"]
    bins = ctx["histogram_bins"]
    counts = np.zeros((len(snap_steps), n, bins), dtype=np.int64)

    def record(step):
        for k, snap in enumerate(snap_steps):
            if snap == step:
                for s in range(n):
                    hist, _ = np.histogram(ens.positions[s, :, 0], bins=bins,
                                           range=(ctx["histogram_lo"],
                                                  ctx["histogram_hi"]))
                    counts[k, s] += hist

    record(0)
    step = 0
    while step < grid.n_steps:
        block = min(_BLOCK_STEPS, grid.n_steps - step)
        draws = np.stack([src.draw(block) for src in sources])
        for b in range(block):
            noise = draws[:, :, b, :]
            if kind == "skt-particles":
                ens = em_step_skt(ens, ctx["family"], ctx["response"],
                                  ctx["sigma"], grid.dt, noise,
                                  ctx["potential"])
            elif kind == "gradient-particles":
                ens = em_step_gradient(ens, ctx["family"], ctx["sigma"],
                                       grid.dt, noise, ctx["potential"])
            else:
                field = ctx["field_states"][step]
                mode = kind
                ens = em_step_meanfield(ens, field, ctx["family"],
                                        ctx["response"], ctx["sigma"],
                                        grid.dt, noise, mode,
                                        ctx["potential"])
            step += 1
            record(step)
    return {"counts": counts}


def _run_one_coupled(ctx: dict, run_index: int) -> dict:
    """One coupled run; returns sup-square distances and per-species W2."""
    plan, count = ctx["plan"], ctx["count"]
    result = run_coupled(plan, run_index, ctx["mixtures"], ctx["family"],
                         ctx["response"], ctx["sigma"], ctx["grid"],
                         ctx["field_states"], count,
                         potential_on=ctx["potential"])
    final_field = ctx["field_states"][-1]
    n = result.interacting.n_species
    w2 = np.empty(n)
    for s in range(n):
        reference = inverse_cdf_sample(final_field, s, count,
                                       plan.auxiliary_rng(run_index, tag=s))
        w2[s] = wasserstein2_1d(result.interacting.positions[s, :, 0], reference)
    return {"supsq": result.supsq, "w2": w2}


_CTX: Optional[dict] = None


def _init_worker(config_text: str, kind: str, eta, count) -> None:
    global _CTX
    _CTX = _build_context(ExperimentConfig.from_ini_text(config_text), kind,
                          eta, count)


def _pool_task(run_index: int) -> dict:
    return _run_one(_CTX, run_index)


def _map_runs(config: ExperimentConfig, kind: str, workers: int,
              eta: Optional[float] = None,
              count: Optional[int] = None) -> list:
    """Execute all runs of one pipeline, inline or on a process pool.

    Results come back ordered by run index either way.
    """
    n_sim = config.n_sim
    if workers <= 1:
        ctx = _build_context(config, kind, eta, count)
        return [_run_one(ctx, r) for r in range(n_sim)]
    results: list = [None] * n_sim
    with ProcessPoolExecutor(
        max_workers=workers,
        initializer=_init_worker,
        initargs=(config.to_ini_text(), kind, eta, count),
    ) as pool:
        futures = {pool.submit(_pool_task, r): r for r in range(n_sim)}
        for fut in as_completed(futures):
            results[futures[fut]] = fut.result()
    return results


# ---------------------------------------------------------------------------
# Output writers


def _fmt_time(t: float) -> str:
    return f"{t:g}"


def _write_density_csv(path: Path, x: np.ndarray, values: np.ndarray) -> None:
    header = "x," + ",".join(f"species_{i}" for i in range(values.shape[0]))
    data = np.column_stack([x, values.T])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def _density_metrics(values: np.ndarray, dx: float) -> dict:
    n = values.shape[0]
    overlap = {
        f"{i}-{j}": float(segregation_overlap(values[i], values[j], dx))
        for i in range(n) for j in range(i + 1, n)
    }
    return {
        "mode_count": [int(mode_count(values[s])) for s in range(n)],
        "segregation_overlap": overlap,
    }


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _run_density_system(config: ExperimentConfig, system: str, workers: int,
                        out: Path) -> list[str]:
    results = _map_runs(config, system, workers)
    counts = sum(r["counts"] for r in results)
    n = config.n_species
    total = config.n_sim * config.resolved_count()
    width = (config.histogram_hi - config.histogram_lo) / config.histogram_bins
    edges = np.linspace(config.histogram_lo, config.histogram_hi,
                        config.histogram_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    written = []
    snapshots_doc = []
    for k, t in enumerate(config.snapshots):
        values = counts[k] / (total * width)
        name = f"{system}-t{_fmt_time(t)}.csv"
        _write_density_csv(out / name, centers, values)
        written.append(name)
        entry = {"time": float(t)}
        entry.update(_density_metrics(values, width))
        entry["out_of_range"] = [int(total - counts[k, s].sum()) for s in range(n)]
        snapshots_doc.append(entry)
    metrics_name = f"{system}-metrics.json"
    _write_json(out / metrics_name, {
        "label": config.label,
        "system": system,
        "count": config.resolved_count(),
        "n_sim": config.n_sim,
        "eta": config.eta,
        "histogram": {"lo": config.histogram_lo, "hi": config.histogram_hi,
                      "bins": config.histogram_bins},
        "snapshots": snapshots_doc,
    })
    written.append(metrics_name)
    return written


def _run_pde_system(config: ExperimentConfig, system: str, out: Path) -> list[str]:
    mode = "local" if system == "pde-local" else "nonlocal"
    family = config.family()
    response = config.cutoff_response()
    sigma = np.array(config.sigma, dtype=float)
    field0 = make_initial_field(config.mixtures(), config.pde_half_width,
                                config.pde_n_cells)
    states = solve(field0, family, response, sigma, out_dt=config.dt,
                   n_out=config.n_steps, mode=mode,
                   potential_on=config.potential, dt_pde=config.dt_pde)
    written = []
    snapshots_doc = []
    for t, step in zip(config.snapshots, config.snapshot_steps()):
        state = states[step]
        name = f"{system}-t{_fmt_time(t)}.csv"
        _write_density_csv(out / name, state.centers(), state.values)
        written.append(name)
        entry = {"time": float(t)}
        entry.update(_density_metrics(state.values, state.dx))
        entry["mass"] = [float(m) for m in state.mass()]
        snapshots_doc.append(entry)
    metrics_name = f"{system}-metrics.json"
    _write_json(out / metrics_name, {
        "label": config.label,
        "system": system,
        "half_width": config.pde_half_width,
        "n_cells": config.pde_n_cells,
        "eta": config.eta,
        "snapshots": snapshots_doc,
    })
    written.append(metrics_name)
    return written


def _run_coupled_error(config: ExperimentConfig, workers: int,
                       out: Path) -> list[str]:
    results = _map_runs(config, "coupled", workers)
    err = strong_error([r["supsq"] for r in results])
    w2_runs = np.array([float(np.mean(r["w2"])) for r in results])
    w2_se = (float(np.std(w2_runs, ddof=1) / np.sqrt(len(w2_runs)))
             if len(w2_runs) > 1 else float("nan"))
    name = "coupled-error.json"
    _write_json(out / name, {
        "label": config.label,
        "eta": config.eta,
        "count": config.resolved_count(),
        "n_sim": config.n_sim,
        "strong_error": float(err.value),
        "strong_error_se": float(err.std_error),
        "w2": float(np.mean(w2_runs)),
        "w2_se": w2_se,
    })
    return [name]


# ---------------------------------------------------------------------------
# Convergence study


@dataclass
class StudyResult:
    """Coupling error versus interaction range, with a fitted rate."""

    label: str
    n_sim: int
    etas: Tuple[float, ...]
    counts: Tuple[int, ...]
    strong_errors: Tuple[float, ...]
    strong_error_ses: Tuple[float, ...]
    w2_means: Tuple[float, ...]
    w2_ses: Tuple[float, ...]
    slope: float
    slope_se: float

    def to_csv_text(self) -> str:
        lines = ["eta,count,strong_error,strong_error_se,w2,w2_se"]
        for row in zip(self.etas, self.counts, self.strong_errors,
                       self.strong_error_ses, self.w2_means, self.w2_ses):
            lines.append(",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "n_sim": self.n_sim,
            "rows": [
                {"eta": e, "count": c, "strong_error": v, "strong_error_se": se,
                 "w2": w, "w2_se": wse}
                for e, c, v, se, w, wse in zip(
                    self.etas, self.counts, self.strong_errors,
                    self.strong_error_ses, self.w2_means, self.w2_ses)
            ],
            "slope": self.slope,
            "slope_se": self.slope_se,
        }


def _loglog_slope(etas, values, ses) -> Tuple[float, float]:
    """Weighted least-squares slope of log(value) against log(eta).

    Weights come from the delta-method variance of the log, se/value.  The
    returned uncertainty is the WLS standard error of the slope with those
    variances taken as known.  Degenerate inputs (a zero value, or fewer
    than two points) give nan.
    """
    values = np.asarray(values, dtype=float)
    ses = np.asarray(ses, dtype=float)
    if len(values) < 2 or np.any(values <= 0.0):
        return float("nan"), float("nan")
    x = np.log(np.asarray(etas, dtype=float))
    y = np.log(values)
    log_se = ses / values
    if np.any(~np.isfinite(log_se)) or np.any(log_se <= 0.0):
        weights = np.ones_like(y)
    else:
        weights = 1.0 / log_se**2
    design = np.column_stack([x, np.ones_like(x)])
    wd = design * weights[:, None]
    normal = design.T @ wd
    cov = np.linalg.inv(normal)
    beta = cov @ (wd.T @ y)
    return float(beta[0]), float(np.sqrt(cov[0, 0]))


def convergence_study(config: ExperimentConfig,
                      etas: Sequence[float] = DEFAULT_STUDY_ETAS,
                      counts: Optional[Sequence[int]] = DEFAULT_STUDY_COUNTS,
                      delta: Optional[float] = None,
                      workers: int = 1) -> StudyResult:
    """Sweep the interaction range and measure the coupling error.

    For each eta the particle count is taken from ``counts``, or derived
    from the accuracy parameter ``delta`` via ``min_particles`` (exactly one
    of the two must be given; infeasible combinations raise).  Each rung
    solves the nonlocal field equation once, then runs ``config.n_sim``
    coupled simulations against it.  Reported per rung: the worst-particle
    coupling error with its standard error, and the transport distance
    between final particle positions and samples of the field.  The fitted
    log-log slope of error against eta comes with a standard error derived
    from the Monte Carlo uncertainties.
    """
    if (counts is None) == (delta is None):
        raise ValueError("exactly one of counts and delta must be given")
    etas = tuple(float(e) for e in etas)
    if not etas:
        raise ValueError("need at least one eta")
    if counts is not None:
        counts = tuple(int(c) for c in counts)
        if len(counts) != len(etas):
            raise ValueError(
                f"counts has {len(counts)} entries for {len(etas)} etas"
            )
    else:
        counts = tuple(min_particles(e, delta, dim=1, alpha=config.alpha)
                       for e in etas)
    values, ses, w2m, w2s = [], [], [], []
    for eta, count in zip(etas, counts):
        results = _map_runs(config, "coupled", workers, eta=eta, count=count)
        err = strong_error([r["supsq"] for r in results])
        values.append(float(err.value))
        ses.append(float(err.std_error))
        w2_runs = np.array([float(np.mean(r["w2"])) for r in results])
        w2m.append(float(np.mean(w2_runs)))
        w2s.append(float(np.std(w2_runs, ddof=1) / np.sqrt(len(w2_runs)))
                   if len(w2_runs) > 1 else float("nan"))
    slope, slope_se = _loglog_slope(etas, values, ses)
    return StudyResult(
        label=config.label,
        n_sim=config.n_sim,
        etas=etas,
        counts=counts,
        strong_errors=tuple(values),
        strong_error_ses=tuple(ses),
        w2_means=tuple(w2m),
        w2_ses=tuple(w2s),
        slope=slope,
        slope_se=slope_se,
    )


# ---------------------------------------------------------------------------
# Top-level entry points


def run(config: ExperimentConfig, workers: int = 1) -> RunManifest:
    """Execute every pipeline the config requests and write all outputs.

    On a pipeline failure the manifest is still written, with the failed
    pipeline listed under ``incomplete``, and the error is re-raised with
    the config label attached.
    """
    start = _time.perf_counter()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[str] = []
    incomplete: list[str] = []

    def finish() -> RunManifest:
        manifest = RunManifest(
            label=config.label,
            config_hash=config.config_hash(),
            version=__version__,
            wall_time_s=_time.perf_counter() - start,
            master_seed=config.seed,
            seed_scheme=_SEED_SCHEME,
            per_run_seeds=tuple((config.seed, r) for r in range(config.n_sim)),
            histogram={"lo": config.histogram_lo, "hi": config.histogram_hi,
                       "bins": config.histogram_bins},
            outputs=tuple(outputs),
            incomplete=tuple(incomplete),
            config_ini=config.to_ini_text(),
        )
        manifest.write(out / "manifest.json")
        return manifest

    for system in config.systems:
        try:
            if system in _PARTICLE_SYSTEMS:
                outputs.extend(_run_density_system(config, system, workers, out))
            elif system in _PDE_SYSTEMS:
                outputs.extend(_run_pde_system(config, system, out))
            elif system == "coupled-error":
                outputs.extend(_run_coupled_error(config, workers, out))
            elif system == "eta-sweep":
                study = convergence_study(config, workers=workers)
                (out / "eta-sweep.csv").write_text(study.to_csv_text(),
                                                   encoding="utf-8")
                _write_json(out / "eta-sweep.json", study.to_json_dict())
                outputs.extend(["eta-sweep.csv", "eta-sweep.json"])
            else:  # pragma: no cover - config validation forbids this
                raise ValueError(f"unknown system {system!r}")
        except Exception as exc:
            incomplete.append(system)
            finish()
            raise RuntimeError(
                f"pipeline {system!r} failed for config {config.label!r}: {exc}"
            ) from exc
    return finish()


def emit_plot_data(manifest: RunManifest, out_dir: Optional[str] = None) -> list[str]:
    """Write one CSV per figure panel from a finished run.

    A panel is one density-producing pipeline at one snapshot time; panel
    files are numbered in config order and keep the x,species_* column
    schema.  Missing source files raise a single error naming every gap.
    """
    config = manifest.config()
    src_dir = Path(config.out_dir)
    dest = Path(out_dir) if out_dir is not None else src_dir
    dest.mkdir(parents=True, exist_ok=True)
    panels = []
    for system in config.systems:
        if system in _PARTICLE_SYSTEMS or system in _PDE_SYSTEMS:
            for t in config.snapshots:
                panels.append((system, t, f"{system}-t{_fmt_time(t)}.csv"))
    missing = [name for _, _, name in panels
               if name not in manifest.outputs or not (src_dir / name).exists()]
    if missing:
        raise FileNotFoundError(
            "missing panel sources: " + ", ".join(sorted(missing))
        )
    written = []
    for k, (system, t, name) in enumerate(panels, start=1):
        panel_name = f"panel-{k:02d}-{system}-t{_fmt_time(t)}.csv"
        (dest / panel_name).write_text(
            (src_dir / name).read_text(encoding="utf-8"), encoding="utf-8")
        written.append(panel_name)
    return written
