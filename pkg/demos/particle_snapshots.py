"""Run a small density-coupled particle system and watch it spread.

Two species start as Gaussians centred at -1 and +1.  Species 0 diffuses
faster wherever species 1 is crowded (and vice versa), which pushes the
populations apart while keeping them in contact.  The drift-coupled
variant moves particles straight down the crowding gradient instead and
separates harder, ending with the smaller overlap of the two.

Runs in a few seconds at the demo size.  The seeded noise plan makes the
output bit-identical on every run.
"""

import numpy as np

from crossdiff import (
    GaussianMixture,
    KernelFamily,
    NoisePlan,
    em_step_gradient,
    em_step_skt,
    histogram_density,
    make_cutoff,
    make_nonlinearity,
    segregation_overlap,
)

COUNT = 400
DT = 0.01
N_STEPS = 100
SIGMA = np.array([1.0, 2.0])
PAIR_MASS = np.array([[0.0, 35.5], [2.5, 0.0]])


def sketch(values, width, height=8):
    """Tiny ASCII density sketch, one row per species."""
    for s, row in enumerate(values):
        peak = row.max()
        chars = "".join(
            " .:-=+*#"[min(int(v / peak * (height - 1)), height - 1)]
            for v in row
        )
        print(f"  species {s} |{chars}|")


def main():
    plan = NoisePlan(42)
    mixtures = (GaussianMixture(components=((-1.0, 2.0, 1.0),)),
                GaussianMixture(components=((1.0, 2.0, 1.0),)))
    family = KernelFamily(eta=2.0, pair_mass=PAIR_MASS, dim=1)
    response = make_cutoff(make_nonlinearity("identity"), eta=2.0, alpha=0.0)

    for name, stepper in (("density-coupled", em_step_skt),
                          ("drift-coupled", em_step_gradient)):
        ensemble = plan.sample_initial(0, mixtures, COUNT)
        sources = [plan.increment_source(0, s, COUNT) for s in range(2)]
        step = 0
        while step < N_STEPS:
            block = min(50, N_STEPS - step)
            draws = np.stack([src.draw(block) for src in sources])
            for b in range(block):
                noise = draws[:, :, b, :]
                if stepper is em_step_skt:
                    ensemble = em_step_skt(ensemble, family, response,
                                           SIGMA, DT, noise)
                else:
                    ensemble = em_step_gradient(ensemble, family, SIGMA,
                                                DT, noise)
                step += 1
        samples = [ensemble.positions[s, :, 0] for s in range(2)]
        density = histogram_density(samples, -12.0, 12.0, 60)
        overlap = segregation_overlap(density.values[0], density.values[1],
                                      density.bin_width)
        print(f"{name} system at t={ensemble.time:g} "
              f"(N={COUNT}, eta=2, seed 42):")
        sketch(density.values, density.bin_width)
        print(f"  species overlap: {overlap:.3f}"
              f"  (out of range: {density.out_of_range.tolist()})")
        print()


if __name__ == "__main__":
    main()
