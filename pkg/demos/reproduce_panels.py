"""Reproduce the bundled reference experiments at desk scale.

Each preset runs both particle systems (density-coupled and
drift-coupled) over many repetitions, pools the final positions into
histogram densities, writes one CSV per system and snapshot time plus a
metrics file, and finishes with ordered panel copies ready for plotting.

Desk scale means 2000 particles and 50 repetitions instead of the full
5000 x 500; expect roughly two minutes per preset on one core.  Pass a
different preset name (nsymm, symm, 3species, smalldata) or more workers
to explore.
"""

import argparse
from pathlib import Path

from crossdiff import emit_plot_data, preset, run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="nsymm")
    parser.add_argument("--out", default="out/panels-demo")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    config = preset(args.preset, desk_scale=True, seed=args.seed,
                    out_dir=args.out)
    print(f"running preset {args.preset!r} at desk scale "
          f"(N={config.resolved_count()}, n_sim={config.n_sim}, "
          f"systems={config.systems}) ...")
    manifest = run(config, workers=args.workers)
    print(f"finished in {manifest.wall_time_s:.0f}s; outputs:")
    for name in manifest.outputs:
        print(f"  {Path(config.out_dir) / name}")

    panels = emit_plot_data(manifest)
    print("panel copies for plotting, in presentation order:")
    for name in panels:
        print(f"  {Path(config.out_dir) / name}")


if __name__ == "__main__":
    main()
