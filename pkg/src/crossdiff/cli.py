"""Command-line interface: run experiments, sweep ranges, emit plot data.

Verbs
-----
run         execute a config or preset and write densities, metrics, manifest
study       convergence sweep of the coupling error over the range ladder
presets     list the built-in experiment presets
emit-plots  turn a finished run into one tidy CSV per figure panel

Failures print a single JSON object ``{"error": ..., "message": ...}`` to
stderr and exit nonzero, so scripted callers never have to parse prose.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import NoReturn, Optional, Sequence

from .config import PRESET_NAMES, ExperimentConfig, preset
from .runner import RunManifest, convergence_study, emit_plot_data
from .runner import run as run_experiment

__all__ = ["main"]


def _fail(kind: str, message: str, code: int = 1) -> NoReturn:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    raise SystemExit(code)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors keep the JSON failure contract."""

    def error(self, message):
        _fail("usage", message, code=2)


def _add_selection(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", metavar="PATH", help="experiment config file")
    group.add_argument("--preset", metavar="NAME",
                       help=f"built-in preset: {', '.join(PRESET_NAMES)}")
    parser.add_argument("--seed", type=int, metavar="U64",
                        help="override the master seed")
    parser.add_argument("--out", metavar="DIR", help="override the output directory")
    parser.add_argument("--desk-scale", action="store_true",
                        help="reduced preset profile for quick desk runs")


def _resolve_config(args, apply_out: bool = True) -> ExperimentConfig:
    if args.preset is not None:
        cfg = preset(args.preset, desk_scale=args.desk_scale)
    else:
        if args.desk_scale:
            _fail("usage", "--desk-scale applies only to --preset runs", code=2)
        cfg = ExperimentConfig.load(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if apply_out and args.out is not None:
        updates["out_dir"] = args.out
    return cfg.with_updates(**updates) if updates else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crossdiff",
                     description="interacting-particle and cross-diffusion runs")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    _add_selection(p_run)
    p_run.add_argument("--workers", type=int, default=1, metavar="K",
                       help="process pool size (1 = inline)")

    p_study = sub.add_parser("study", help="range-ladder convergence sweep")
    _add_selection(p_study)
    p_study.add_argument("--workers", type=int, default=1, metavar="K",
                         help="process pool size (1 = inline)")

    sub.add_parser("presets", help="list built-in presets")

    p_emit = sub.add_parser("emit-plots", help="write per-panel CSVs from a run")
    _add_selection(p_emit)
    return parser


def _cmd_run(args) -> int:
    cfg = _resolve_config(args)
    manifest = run_experiment(cfg, workers=args.workers)
    out = Path(cfg.out_dir)
    for name in manifest.outputs:
        print(f"wrote {out / name}")
    print(f"manifest {out / 'manifest.json'}")
    return 0


def _cmd_study(args) -> int:
    cfg = _resolve_config(args)
    result = convergence_study(cfg, workers=args.workers)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eta-sweep.csv").write_text(result.to_csv_text(), encoding="utf-8")
    (out / "eta-sweep.json").write_text(
        json.dumps(result.to_json_dict(), indent=2) + "\n", encoding="utf-8")
    sys.stdout.write(result.to_csv_text())
    print(f"slope {result.slope:.6g} +- {result.slope_se:.6g}")
    print(f"wrote {out / 'eta-sweep.csv'}")
    return 0


def _cmd_presets(_args) -> int:
    for name in PRESET_NAMES:
        cfg = preset(name)
        print(f"{name}: {cfg.n_species} species, count {cfg.count}, "
              f"n_sim {cfg.n_sim}, horizon {cfg.time_grid().horizon:g}, "
              f"systems {' '.join(cfg.systems)}")
    return 0


def _cmd_emit_plots(args) -> int:
    # --out names the panel destination; the manifest stays with the run
    cfg = _resolve_config(args, apply_out=False)
    manifest_path = Path(cfg.out_dir) / "manifest.json"
    if not manifest_path.exists():
        _fail("missing-manifest",
              f"no manifest at {manifest_path}; run the config first")
    manifest = RunManifest.load(manifest_path)
    written = emit_plot_data(manifest, out_dir=args.out)
    dest = Path(args.out) if args.out is not None else Path(cfg.out_dir)
    for name in written:
        print(f"wrote {dest / name}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "study": _cmd_study,
        "presets": _cmd_presets,
        "emit-plots": _cmd_emit_plots,
    }
    try:
        return handlers[args.verb](args)
    except SystemExit:
        raise
    except (ValueError, FileNotFoundError, RuntimeError, OSError) as exc:
        _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
