"""End-to-end acceptance checks.

Each test exercises one verifiable claim about the package as a whole,
with explicitly pinned tolerances, and prints a single PASS/FAIL line
(visible in the -rP summary).  The heavy Monte Carlo checks pin their
seeds, so reruns are bit-identical.
"""

import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from crossdiff import (
    ExperimentConfig,
    GaussianMixture,
    KernelFamily,
    NoisePlan,
    convergence_study,
    em_step_skt,
    grid_convolution,
    inverse_cdf_sample,
    make_cutoff,
    make_initial_field,
    make_nonlinearity,
    mode_count,
    preset,
    run,
    scaled_kernel_eval,
    solve,
    wasserstein2_1d,
)


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}: {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _em_skt_run(plan, rep, mixtures, family, response, sigma, count,
                dt, n_steps, potential_on=False, block=100):
    """March one density-coupled ensemble to n_steps * dt."""
    ens = plan.sample_initial(rep, mixtures, count)
    sources = [plan.increment_source(rep, i, count)
               for i in range(len(mixtures))]
    step = 0
    while step < n_steps:
        chunk = min(block, n_steps - step)
        draws = np.stack([src.draw(chunk) for src in sources])
        for b in range(chunk):
            ens = em_step_skt(ens, family, response, sigma, dt,
                              draws[:, :, b, :], potential_on)
            step += 1
    return ens


# ----------------------------------------------------------------------
# 1. Pair kernels integrate to their prescribed masses.

def test_kernel_mass_quadrature():
    tables = (
        np.array([[0.0, 355.0], [25.0, 0.0]]),
        np.array([[0.0, 355.0], [355.0, 0.0]]),
        np.array([[0.0, 355.0, 355.0], [25.0, 0.0, 25.0], [355.0, 0.0, 0.0]]),
    )
    worst = 0.0
    for eta in (0.1, 0.5, 1.0, 2.0):
        for pair_mass in tables:
            family = KernelFamily(eta=eta, pair_mass=pair_mass, dim=1)
            n = family.n_species
            for i in range(n):
                for j in range(n):
                    val, _ = quad(
                        lambda x: scaled_kernel_eval(x, i, j, family),
                        -eta, eta, epsabs=1e-13, epsrel=1e-13, limit=200,
                    )
                    target = pair_mass[i, j]
                    if target == 0.0:
                        err = abs(val)
                    else:
                        err = abs(val - target) / target
                    worst = max(worst, err)
    _report("kernel mass quadrature", worst <= 1e-8,
            f"max relative error {worst:.3e} (limit 1e-08)")


# ----------------------------------------------------------------------
# 2. With interactions off and the confining drift on, the particle
#    scheme reproduces the moments of the exactly solvable linear SDE
#    dX = X dt + sqrt(2) dW:  m(t) = m0 e^t,  v(t) = v0 e^2t + e^2t - 1.

def test_independent_ou_moments():
    count, dt, n_steps = 100_000, 1e-3, 1000
    plan = NoisePlan(0)
    mixtures = (GaussianMixture(components=((0.0, 0.1, 1.0),)),)
    family = KernelFamily(eta=1.0, pair_mass=np.zeros((1, 1)), dim=1)
    response = make_cutoff(make_nonlinearity("zero"), eta=1.0, alpha=0.0)
    ens = _em_skt_run(plan, 0, mixtures, family, response, np.array([1.0]),
                      count, dt, n_steps, potential_on=True)
    x = ens.positions[0, :, 0]
    mean, var = float(x.mean()), float(x.var(ddof=1))
    target_mean = 0.0
    target_var = 0.1 * math.e ** 2 + (math.e ** 2 - 1.0)
    se_mean = float(x.std(ddof=1)) / math.sqrt(count)
    se_var = var * math.sqrt(2.0 / (count - 1))
    ok = (abs(mean - target_mean) <= 3 * se_mean
          and abs(var - target_var) <= 3 * se_var)
    _report("independent-particle moments", ok,
            f"mean {mean:.5f} vs {target_mean} (3se {3 * se_mean:.5f}), "
            f"var {var:.5f} vs {target_var:.5f} (3se {3 * se_var:.5f})")


# ----------------------------------------------------------------------
# 3. With interactions off the field solver is the heat semigroup:
#    a Gaussian stays Gaussian with variance v0 + 2t.

def test_heat_kernel_limit():
    mixtures = (GaussianMixture(components=((0.0, 1.0, 1.0),)),)
    family = KernelFamily(eta=1.0, pair_mass=np.zeros((1, 1)), dim=1)
    response = make_cutoff(make_nonlinearity("zero"), eta=1.0, alpha=0.0)
    field0 = make_initial_field(mixtures, 10.0, 2000)
    states = solve(field0, family, response, np.array([1.0]),
                   out_dt=0.5, n_out=1, mode="local")
    x = states[-1].centers()
    v = 1.0 + 2.0 * 0.5
    exact = np.exp(-x ** 2 / (2 * v)) / np.sqrt(2 * np.pi * v)
    err = float(np.max(np.abs(states[-1].values[0] - exact)))
    _report("heat kernel limit", err <= 1e-3,
            f"sup-norm error {err:.3e} at dx=0.01 (limit 1e-03)")


# ----------------------------------------------------------------------
# 4. The nonlocal field equation converges to the local one as the
#    interaction range shrinks: space-time L2 distance decreasing in
#    eta with a log-log rate of at least 0.8.

def test_vanishing_range_rate():
    mixtures = (GaussianMixture(components=((-1.0, 0.5, 1.0),)),
                GaussianMixture(components=((1.0, 0.5, 1.0),)))
    pair_mass = np.array([[0.0, 0.5], [0.25, 0.0]])
    sigma = np.array([1.0, 1.0])
    identity = make_nonlinearity("identity")
    field0 = make_initial_field(mixtures, 14.0, 2240)
    out_dt, n_out = 0.05, 20

    def distance(states_a, states_b):
        dx = states_a[0].dx
        total = 0.0
        last = len(states_a) - 1
        for m, (a, b) in enumerate(zip(states_a, states_b)):
            w = 0.5 if m in (0, last) else 1.0
            total += w * float(((a.values - b.values) ** 2).sum()) * dx * out_dt
        return math.sqrt(total)

    local_family = KernelFamily(eta=1.0, pair_mass=pair_mass, dim=1)
    local_resp = make_cutoff(identity, eta=1.0, alpha=0.0)
    local = solve(field0, local_family, local_resp, sigma,
                  out_dt=out_dt, n_out=n_out, mode="local")
    etas = (0.4, 0.2, 0.1)
    errors = []
    for eta in etas:
        family = KernelFamily(eta=eta, pair_mass=pair_mass, dim=1)
        resp = make_cutoff(identity, eta=eta, alpha=0.0)
        nonlocal_states = solve(field0, family, resp, sigma,
                                out_dt=out_dt, n_out=n_out, mode="nonlocal")
        errors.append(distance(nonlocal_states, local))
    slope = float(np.polyfit(np.log(etas), np.log(errors), 1)[0])
    decreasing = errors[0] > errors[1] > errors[2]
    _report("vanishing interaction range", decreasing and slope >= 0.8,
            f"L2 distances {[f'{e:.3e}' for e in errors]}, "
            f"slope {slope:.2f} (need decreasing, slope >= 0.8)")


# ----------------------------------------------------------------------
# 5. Empirical particle laws approach the local field solution as the
#    particle count grows: the transport distance drops monotonically
#    and each drop exceeds the pooled Monte Carlo standard error.

@pytest.mark.slow
def test_particle_field_transport_convergence():
    sigma = np.array([1.0, 2.0])
    pair_mass = np.array([[0.0, 3.55], [0.25, 0.0]])
    mixtures = (GaussianMixture(components=((-1.0, 2.0, 1.0),)),
                GaussianMixture(components=((1.0, 2.0, 1.0),)))
    family = KernelFamily(eta=2.0, pair_mass=pair_mass, dim=1)
    response = make_cutoff(make_nonlinearity("identity"), eta=2.0, alpha=0.0)
    dt, n_steps = 0.01, 100
    plan = NoisePlan(0)

    field0 = make_initial_field(mixtures, 16.0, 1600)
    final = solve(field0, family, response, sigma,
                  out_dt=dt * n_steps, n_out=1, mode="local")[-1]

    levels = (500, 2000, 8000)
    n_sim = 20
    means, ses = [], []
    for k, count in enumerate(levels):
        values = []
        for r in range(n_sim):
            rep = n_sim * k + r
            ens = _em_skt_run(plan, rep, mixtures, family, response, sigma,
                              count, dt, n_steps)
            per_species = [
                wasserstein2_1d(
                    ens.positions[s, :, 0],
                    inverse_cdf_sample(final, s, count,
                                       plan.auxiliary_rng(rep, tag=s)),
                )
                for s in range(2)
            ]
            values.append(float(np.mean(per_species)))
        values = np.asarray(values)
        means.append(float(values.mean()))
        ses.append(float(values.std(ddof=1) / math.sqrt(n_sim)))
    drops_ok = True
    for a in range(len(levels) - 1):
        pooled = math.hypot(ses[a], ses[a + 1])
        drops_ok = drops_ok and (means[a] - means[a + 1] > pooled)
    _report("particle-field transport convergence", drops_ok,
            f"W2 {[f'{m:.4f}+-{s:.4f}' for m, s in zip(means, ses)]} "
            f"over counts {levels} (each drop must exceed the pooled se)")


# ----------------------------------------------------------------------
# 6. Coupled-pair error shrinks with the interaction range when the
#    particle count grows alongside it.

@pytest.mark.slow
def test_coupling_error_sweep():
    config = ExperimentConfig(
        label="acceptance-sweep",
        systems=("eta-sweep",),
        n_species=2,
        sigma=(1.0, 2.0),
        pair_mass=((0.0, 3.55), (0.25, 0.0)),
        response="identity",
        alpha=0.0,
        eta=2.0,
        n_sim=20,
        dt=0.01,
        n_steps=100,
        snapshots=(1.0,),
        initial=(((-1.0, 2.0, 1.0),), ((1.0, 2.0, 1.0),)),
        seed=0,
        out_dir="unused",
        count=5000,
        pde_half_width=16.0,
        pde_n_cells=800,
    )
    study = convergence_study(config, etas=(2.0, 1.6, 1.3),
                              counts=(519, 1133, 3341))
    errs = study.strong_errors
    decreasing = errs[0] > errs[1] > errs[2]
    slope_ok = math.isfinite(study.slope) and study.slope > 0.0
    _report("coupling error sweep", decreasing and slope_ok,
            f"strong errors {[f'{e:.3e}' for e in errs]} at etas "
            f"{study.etas}, fitted slope {study.slope:.2f}"
            f"+-{study.slope_se:.2f} (need decreasing, slope > 0)")


# ----------------------------------------------------------------------
# 7. The bundled reference presets reproduce the qualitative picture at
#    desk scale.  Density coupling spreads the crowded species into two
#    side clusters while the other stays in one; the populations keep a
#    visible overlap.  Drift coupling pushes the species directly apart,
#    so each ends in one cluster with strictly smaller overlap.  Cluster
#    counts use a smoothing window wide enough to iron out Monte Carlo
#    wiggles at desk-scale particle numbers and are checked for stability
#    across neighbouring windows.

@pytest.mark.slow
def test_reference_presets_desk_scale(tmp_path):
    def density_columns(path):
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        return data[:, 1:].T

    def final_overlap(out_dir, system):
        doc = json.loads((out_dir / f"{system}-metrics.json").read_text())
        return doc["snapshots"][-1]["segregation_overlap"]["0-1"]

    results = {}
    for name in ("nsymm", "symm"):
        out = tmp_path / name
        config = preset(name, desk_scale=True, seed=0, out_dir=str(out))
        run(config)
        results[name] = {
            "skt": final_overlap(out, "skt-particles"),
            "gradient": final_overlap(out, "gradient-particles"),
        }

    skt_values = density_columns(tmp_path / "nsymm" / "skt-particles-t2.csv")
    grad_values = density_columns(
        tmp_path / "nsymm" / "gradient-particles-t2.csv")
    windows = (15, 17, 19, 21, 23, 25)
    skt_modes = {w: [mode_count(v, window=w) for v in skt_values]
                 for w in windows}
    grad_modes = {w: [mode_count(v, window=w) for v in grad_values]
                  for w in windows}
    modes_ok = (skt_modes[17] == [2, 1] and grad_modes[17] == [1, 1]
                and all(m == skt_modes[17] for m in skt_modes.values())
                and all(m == grad_modes[17] for m in grad_modes.values()))
    overlap_ok = all(res["gradient"] < res["skt"] for res in results.values())
    detail = (
        f"cluster counts coupled {skt_modes[17]} vs drift {grad_modes[17]} "
        f"(stable over windows {windows}); final overlaps "
        + ", ".join(
            f"{name}: drift {res['gradient']:.3f} < coupled {res['skt']:.3f}"
            for name, res in results.items()
        )
    )
    _report("reference presets desk scale", modes_ok and overlap_ok, detail)


# ----------------------------------------------------------------------
# 8. Structural invariants that every component must keep.

def test_invariant_suite():
    checks = []

    # (a) the gridded convolution equals the brute-force quadrature sum
    rng = np.random.default_rng(1)
    pair_mass = np.array([[0.0, 1.5], [0.7, 0.0]])
    family = KernelFamily(eta=0.8, pair_mass=pair_mass, dim=1)
    dx = 0.1
    values = rng.uniform(0.0, 2.0, size=(2, 64))
    x = (np.arange(64) + 0.5) * dx
    conv = grid_convolution(values[1], dx, 0, 1, family)
    brute = np.array([
        dx * float(np.sum(scaled_kernel_eval(xi - x, 0, 1, family)
                          * values[1]))
        for xi in x
    ])
    checks.append(("convolution", float(np.max(np.abs(conv - brute))) <= 1e-12))

    # (b) the transport distance is a metric on small same-size samples
    samples = [rng.normal(size=6) for _ in range(3)]
    a, b, c = samples
    metric_ok = (
        wasserstein2_1d(a, a) == 0.0
        and abs(wasserstein2_1d(a, b) - wasserstein2_1d(b, a)) <= 1e-15
        and wasserstein2_1d(a, c)
        <= wasserstein2_1d(a, b) + wasserstein2_1d(b, c) + 1e-12
    )
    checks.append(("transport metric", metric_ok))

    # (c) both field solvers conserve mass
    mixtures = (GaussianMixture(components=((-1.0, 1.0, 1.0),)),
                GaussianMixture(components=((1.0, 1.0, 1.0),)))
    field0 = make_initial_field(mixtures, 12.0, 240)
    response = make_cutoff(make_nonlinearity("identity"), eta=0.5, alpha=0.0)
    fam = KernelFamily(eta=0.5, pair_mass=pair_mass, dim=1)
    mass_ok = True
    for mode in ("local", "nonlocal"):
        states = solve(field0, fam, response, np.array([1.0, 1.0]),
                       out_dt=0.05, n_out=2, mode=mode)
        drift = float(np.max(np.abs(states[-1].mass() - states[0].mass())))
        mass_ok = mass_ok and drift <= 1e-10
    checks.append(("mass conservation", mass_ok))

    # (d) the cutoff response never exceeds its slope budget and agrees
    #     with the raw nonlinearity where the cutoff is inactive
    eta, alpha = 0.2, 0.5
    budget = eta ** (-alpha)
    resp = make_cutoff(make_nonlinearity("power", power=2.0),
                       eta=eta, alpha=alpha)
    grid = np.linspace(-6.0, 6.0, 20001)
    fx = resp.value(grid)
    quotients = np.abs(np.diff(fx) / np.diff(grid))
    small = np.linspace(-0.1, 0.1, 101)
    lipschitz_ok = (float(quotients.max()) <= budget * (1 + 1e-9)
                    and np.allclose(resp.value(small), small ** 2,
                                    rtol=0.0, atol=1e-14))
    ident = make_cutoff(make_nonlinearity("identity"), eta=0.3, alpha=0.0)
    lipschitz_ok = lipschitz_ok and np.array_equal(ident.value(grid), grid)
    checks.append(("lipschitz budget", lipschitz_ok))

    # (e) seeded noise streams are bit-reproducible and block-invariant
    plan = NoisePlan(7)
    one_shot = plan.increment_source(0, 0, 5).draw(9)
    blocked_src = plan.increment_source(0, 0, 5)
    blocked = np.concatenate(
        [blocked_src.draw(4), blocked_src.draw(5)], axis=1)
    again = NoisePlan(7).increment_source(0, 0, 5).draw(9)
    determinism_ok = (np.array_equal(one_shot, blocked)
                      and np.array_equal(one_shot, again))
    checks.append(("determinism", determinism_ok))

    failed = [name for name, ok in checks if not ok]
    _report("invariant suite", not failed,
            "all invariants hold" if not failed
            else f"violated: {', '.join(failed)}")
