"""Stepper and noise-plan checks against brute-force references."""

import math

import numpy as np
import pytest

from crossdiff.kernels import KernelFamily, kernel_mass, profile_eval, profile_deriv
from crossdiff.nonlinearity import CustomNonlinearity, make_cutoff, make_nonlinearity
from crossdiff.particles import GaussianMixture, ParticleEnsemble
from crossdiff.pde import make_initial_field, solve
from crossdiff.sde import (
    IncrementSource,
    NoisePlan,
    TimeGrid,
    em_step_gradient,
    em_step_meanfield,
    em_step_skt,
    min_particles,
    run_coupled,
)


def gm(*components):
    return GaussianMixture(components=tuple(components))


def brute_interaction_sums(ensemble, family):
    """Direct double-loop evaluation of the kernel sums, self pair excluded."""
    x = ensemble.positions[:, :, 0]
    n, count = x.shape
    out = np.zeros((n, count, n))
    for i in range(n):
        for j in range(n):
            diff = (x[i][:, None] - x[j][None, :]) / family.eta
            vals = profile_eval(diff)
            if i == j:
                np.fill_diagonal(vals, 0.0)
            out[i, :, j] = family.scale(i, j) * vals.sum(axis=1) / count
    return out


def brute_grad_sums(ensemble, family):
    x = ensemble.positions[:, :, 0]
    n, count = x.shape
    out = np.zeros((n, count, n))
    for i in range(n):
        for j in range(n):
            diff = (x[i][:, None] - x[j][None, :]) / family.eta
            vals = profile_deriv(diff)
            out[i, :, j] = family.scale(i, j) / family.eta * vals.sum(axis=1) / count
    return out


class TestMinParticles:
    def test_frozen_values(self):
        assert min_particles(2.0, 0.01) == 519
        assert min_particles(1.0, 1.0) == 3

    def test_overflow_reports_required_exponent(self):
        with pytest.raises(ValueError, match="1600"):
            min_particles(0.5, 0.01)

    def test_validation(self):
        with pytest.raises(ValueError):
            min_particles(0.0, 0.1)
        with pytest.raises(ValueError):
            min_particles(1.0, -0.1)
        with pytest.raises(ValueError):
            min_particles(1.0, 0.1, alpha=1.0)


class TestNoisePlan:
    def test_streams_are_reproducible(self):
        plan = NoisePlan(master_seed=123)
        a = plan.increment_source(run=4, species=1, count=3).draw(10)
        b = plan.increment_source(run=4, species=1, count=3).draw(10)
        assert np.array_equal(a, b)

    def test_streams_differ_across_indices(self):
        plan = NoisePlan(master_seed=123)
        base = plan.increment_source(0, 0, 2).draw(8)
        for other in [NoisePlan(master_seed=124).increment_source(0, 0, 2),
                      plan.increment_source(1, 0, 2),
                      plan.increment_source(0, 1, 2)]:
            assert not np.array_equal(base, other.draw(8))
        assert not np.array_equal(base[0], base[1])

    def test_block_draws_match_one_shot(self):
        plan = NoisePlan(master_seed=7)
        src = plan.increment_source(2, 0, 5)
        first = src.draw(6)
        second = src.draw(4)
        whole = plan.increment_source(2, 0, 5).draw(10)
        assert np.array_equal(np.concatenate([first, second], axis=1), whole)

    def test_initial_and_increment_domains_are_independent(self):
        plan = NoisePlan(master_seed=9)
        init = plan.initial_rng(0, 0).standard_normal(8)
        inc = plan.increment_source(0, 0, 1).draw(8)[0, :, 0]
        aux = plan.auxiliary_rng(0).standard_normal(8)
        assert not np.array_equal(init, inc)
        assert not np.array_equal(init, aux)

    def test_index_range_validation(self):
        plan = NoisePlan(master_seed=1)
        with pytest.raises(ValueError):
            plan.initial_rng(2 ** 30, 0)
        with pytest.raises(ValueError):
            plan.initial_rng(0, 256)
        with pytest.raises(ValueError):
            plan._generator(0, 0, 0, 2 ** 24)
        with pytest.raises(ValueError):
            NoisePlan(master_seed=2 ** 64)


class TestDensityCoupledStep:
    def test_zero_noise_potential_step_is_exact(self):
        ens = ParticleEnsemble(positions=np.array([[[0.5], [-1.25], [3.0]]]))
        family = KernelFamily(eta=1.0, pair_mass=np.zeros((1, 1)), dim=1)
        response = make_nonlinearity("zero")
        dt = 0.01
        out = em_step_skt(ens, family, response, np.array([1.0]), dt,
                          np.zeros_like(ens.positions), potential_on=True)
        assert np.array_equal(out.positions, ens.positions + ens.positions * dt)
        assert out.time == pytest.approx(dt)

    def test_frozen_coincident_coefficient(self):
        """Two species, eta 2, one in-range partner: the diffusion argument
        is 2 + 2 * exp(-1) / 4 and the step uses its square root."""
        m_b = kernel_mass(1)
        family = KernelFamily(eta=2.0, pair_mass=np.array([[0.0, m_b],
                                                           [m_b, 0.0]]), dim=1)
        pos = np.array([[[0.0], [10.0]],
                        [[0.0], [30.0]]])
        ens = ParticleEnsemble(positions=pos)
        noise = np.zeros_like(pos)
        noise[0, 0, 0] = 1.0
        dt = 0.25
        out = em_step_skt(ens, family, make_nonlinearity("identity"),
                          np.array([1.0, 1.0]), dt, noise)
        coef = out.positions[0, 0, 0] / math.sqrt(dt)
        assert coef == pytest.approx(1.4778158615286687, rel=1e-14)
        assert coef == pytest.approx(math.sqrt(2.0 + 2.0 * math.exp(-1.0) / 4.0),
                                     rel=1e-14)

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(3)
        pos = rng.normal(size=(2, 40, 1))
        ens = ParticleEnsemble(positions=pos)
        family = KernelFamily(eta=0.8, pair_mass=np.array([[0.2, 0.5],
                                                           [0.1, 0.0]]), dim=1)
        response = make_cutoff(make_nonlinearity("identity"), eta=0.8, alpha=0.0)
        sigma = np.array([1.0, 2.0])
        dt = 0.01
        noise = rng.standard_normal(pos.shape)
        out = em_step_skt(ens, family, response, sigma, dt, noise,
                          potential_on=True)
        sums = brute_interaction_sums(ens, family)
        coef = np.sqrt(2.0 * sigma[:, None] + 2.0 * response.value(sums).sum(axis=2))
        expected = pos + coef[:, :, None] * math.sqrt(dt) * noise + pos * dt
        np.testing.assert_allclose(out.positions, expected, atol=1e-12)

    def test_zero_response_shortcut_is_exact(self):
        rng = np.random.default_rng(5)
        pos = rng.normal(size=(2, 30, 1))
        ens = ParticleEnsemble(positions=pos)
        family = KernelFamily(eta=0.8, pair_mass=np.array([[0.2, 0.5],
                                                           [0.1, 0.3]]), dim=1)
        sigma = np.array([1.0, 2.0])
        noise = rng.standard_normal(pos.shape)
        out = em_step_skt(ens, family, make_nonlinearity("zero"), sigma, 0.01,
                          noise)
        expected = pos + np.sqrt(2.0 * sigma)[:, None, None] * math.sqrt(0.01) * noise
        assert np.array_equal(out.positions, expected)

    def test_negative_diffusion_argument_rejected(self):
        ens = ParticleEnsemble(positions=np.zeros((1, 4, 1)))
        family = KernelFamily(eta=2.0, pair_mass=np.array([[1.0]]), dim=1)
        bad = CustomNonlinearity(fn=lambda s: -10.0 * np.ones_like(np.asarray(s, dtype=float)),
                                 dfn=lambda s: np.zeros_like(np.asarray(s, dtype=float)))
        with pytest.raises(RuntimeError, match="diffusion argument"):
            em_step_skt(ens, family, bad, np.array([1.0]), 0.01,
                        np.zeros((1, 4, 1)))


class TestGradientStep:
    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(11)
        pos = rng.normal(size=(2, 35, 1))
        ens = ParticleEnsemble(positions=pos)
        family = KernelFamily(eta=0.7, pair_mass=np.array([[0.3, 0.2],
                                                           [0.4, 0.1]]), dim=1)
        sigma = np.array([0.5, 1.5])
        dt = 0.02
        noise = rng.standard_normal(pos.shape)
        out = em_step_gradient(ens, family, sigma, dt, noise, potential_on=True)
        grads = brute_grad_sums(ens, family)
        expected = (pos - grads.sum(axis=2)[:, :, None] * dt
                    + np.sqrt(2.0 * sigma)[:, None, None] * math.sqrt(dt) * noise
                    + pos * dt)
        np.testing.assert_allclose(out.positions, expected, atol=1e-12)

    def test_no_pairs_reduces_to_independent_diffusions(self):
        rng = np.random.default_rng(13)
        pos = rng.normal(size=(2, 20, 1))
        ens = ParticleEnsemble(positions=pos)
        family = KernelFamily(eta=0.7, pair_mass=np.zeros((2, 2)), dim=1)
        sigma = np.array([1.0, 2.0])
        noise = rng.standard_normal(pos.shape)
        out = em_step_gradient(ens, family, sigma, 0.01, noise)
        expected = pos + np.sqrt(2.0 * sigma)[:, None, None] * 0.1 * noise
        np.testing.assert_allclose(out.positions, expected, rtol=1e-15)


class TestMeanFieldStep:
    def make_uniform_field(self, level, half_width=5.0, n_cells=250, n=2):
        vals = np.full((n, n_cells), level)
        from crossdiff.pde import FieldState
        return FieldState(values=vals, half_width=half_width, time=0.0)

    def test_macroscopic_coefficient_on_flat_field(self):
        """On a constant field the coefficient is known in closed form."""
        level = 0.05
        field = self.make_uniform_field(level)
        a = 0.4
        family = KernelFamily(eta=1.0, pair_mass=np.array([[0.0, a],
                                                           [a, 0.0]]), dim=1)
        pos = np.array([[[0.0], [1.0]], [[-1.0], [0.5]]])
        ens = ParticleEnsemble(positions=pos)
        sigma = np.array([1.0, 2.0])
        noise = np.ones_like(pos)
        dt = 0.04
        out = em_step_meanfield(ens, field, family, make_nonlinearity("identity"),
                                sigma, dt, noise, mode="macroscopic")
        coef = (out.positions - pos)[:, :, 0] / math.sqrt(dt)
        expected = np.sqrt(2.0 * sigma + 2.0 * a * level)
        np.testing.assert_allclose(coef, np.broadcast_to(expected[:, None], coef.shape),
                                   rtol=1e-12)

    def test_intermediate_coefficient_on_flat_field(self):
        """Far from the walls the kernel convolution of a flat field is
        a_ij * level, up to superalgebraically small quadrature error."""
        level = 0.05
        field = self.make_uniform_field(level, half_width=6.0, n_cells=600)
        a = 0.4
        family = KernelFamily(eta=1.0, pair_mass=np.array([[0.0, a],
                                                           [a, 0.0]]), dim=1)
        response = make_cutoff(make_nonlinearity("identity"), eta=1.0, alpha=0.0)
        pos = np.array([[[0.0], [1.0]], [[-1.0], [0.5]]])
        ens = ParticleEnsemble(positions=pos)
        sigma = np.array([1.0, 2.0])
        noise = np.ones_like(pos)
        dt = 0.04
        out = em_step_meanfield(ens, field, family, response, sigma, dt, noise,
                                mode="intermediate")
        coef = (out.positions - pos)[:, :, 0] / math.sqrt(dt)
        expected = np.sqrt(2.0 * sigma + 2.0 * a * level)
        np.testing.assert_allclose(coef, np.broadcast_to(expected[:, None], coef.shape),
                                   rtol=1e-8)

    def test_time_mismatch_rejected(self):
        field = self.make_uniform_field(0.05)
        family = KernelFamily(eta=1.0, pair_mass=np.zeros((2, 2)), dim=1)
        ens = ParticleEnsemble(positions=np.zeros((2, 3, 1)), time=0.5)
        with pytest.raises(ValueError, match="time"):
            em_step_meanfield(ens, field, family, make_nonlinearity("identity"),
                              np.array([1.0, 1.0]), 0.01, np.zeros((2, 3, 1)),
                              mode="macroscopic")

    def test_unknown_mode_rejected(self):
        field = self.make_uniform_field(0.05)
        family = KernelFamily(eta=1.0, pair_mass=np.ones((2, 2)), dim=1)
        ens = ParticleEnsemble(positions=np.zeros((2, 3, 1)))
        with pytest.raises(ValueError, match="mode"):
            em_step_meanfield(ens, field, family, make_nonlinearity("identity"),
                              np.array([1.0, 1.0]), 0.01, np.zeros((2, 3, 1)),
                              mode="bogus")


class TestOrnsteinUhlenbeckMoments:
    def test_dispersal_moments_match_closed_form(self):
        """Single species, no interaction, potential on: dX = X dt + sqrt(2) dW
        has mean x0 e^t and variance e^{2t} v0 + sigma (e^{2t} - 1)."""
        plan = NoisePlan(master_seed=42)
        count, dt, n_steps = 20_000, 1e-2, 50
        sigma = np.array([1.0])
        family = KernelFamily(eta=1.0, pair_mass=np.zeros((1, 1)), dim=1)
        response = make_nonlinearity("zero")
        ens = plan.sample_initial(0, [gm((0.5, 1.0, 1.0))], count)
        src = plan.increment_source(0, 0, count)
        draws = src.draw(n_steps)
        for s in range(n_steps):
            ens = em_step_skt(ens, family, response, sigma, dt,
                              draws[None, :, s, :], potential_on=True)
        t = n_steps * dt
        x = ens.positions[0, :, 0]
        mean_exact = 0.5 * math.exp(t)
        var_exact = math.exp(2 * t) * 1.0 + 1.0 * (math.exp(2 * t) - 1.0)
        se_mean = x.std() / math.sqrt(count)
        assert abs(x.mean() - mean_exact) < 4.0 * se_mean + 2e-2 * dt * mean_exact
        se_var = x.var() * math.sqrt(2.0 / count)
        assert abs(x.var() - var_exact) < 4.0 * se_var + 2.0 * dt * var_exact


class TestRunCoupled:
    def test_supsq_shape_and_monotonicity(self):
        plan = NoisePlan(master_seed=5)
        mixtures = [gm((-0.5, 0.5, 1.0)), gm((0.5, 0.5, 1.0))]
        a = 0.3
        family = KernelFamily(eta=1.0, pair_mass=np.array([[0.0, a],
                                                           [a, 0.0]]), dim=1)
        response = make_cutoff(make_nonlinearity("identity"), eta=1.0, alpha=0.0)
        sigma = np.array([1.0, 1.0])
        grid = TimeGrid(dt=0.02, n_steps=10)
        field0 = make_initial_field(mixtures, half_width=8.0, n_cells=320)
        fields = solve(field0, family, response, sigma, out_dt=grid.dt,
                       n_out=grid.n_steps, mode="nonlocal")
        result = run_coupled(plan, 0, mixtures, family, response, sigma, grid,
                             fields, count=60, block_steps=4)
        supsq = result.supsq
        assert supsq.shape == (2, 60)
        assert np.all(supsq >= 0.0)
        assert np.all(np.isfinite(supsq))
        assert supsq.max() > 0.0
        assert result.interacting.time == pytest.approx(grid.horizon)
        assert result.meanfield.positions.shape == (2, 60, 1)
        again = run_coupled(plan, 0, mixtures, family, response, sigma, grid,
                            fields, count=60, block_steps=7)
        np.testing.assert_array_equal(supsq, again.supsq)
        np.testing.assert_array_equal(result.interacting.positions,
                                      again.interacting.positions)

    def test_field_count_validated(self):
        plan = NoisePlan(master_seed=5)
        grid = TimeGrid(dt=0.02, n_steps=10)
        with pytest.raises(ValueError, match="field states"):
            run_coupled(plan, 0, [gm((0.0, 1.0, 1.0))],
                        KernelFamily(eta=1.0, pair_mass=np.zeros((1, 1)), dim=1),
                        make_nonlinearity("zero"), np.array([1.0]), grid,
                        [None] * 3, count=10)


class TestTimeGrid:
    def test_times(self):
        grid = TimeGrid(dt=0.25, n_steps=4)
        np.testing.assert_allclose(grid.times(), [0.0, 0.25, 0.5, 0.75, 1.0])
        assert grid.horizon == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(dt=0.0, n_steps=3)
        with pytest.raises(ValueError):
            TimeGrid(dt=0.1, n_steps=-1)
