import math

import numpy as np
import pytest

from aggrestab import (
    Field,
    Grid1D,
    KernelSpec,
    SimConfig,
    SpectralBasis,
    assemble,
    auto_dt,
    constant_field,
    evolve,
    existence_time,
    heat_semigroup,
    initial_field,
    lp_norm,
    picard_mild_solve,
    semigroup_probe,
    step_imex,
)
from aggrestab.errors import (
    InvalidParameterError,
    NoExistenceTimeError,
    NonContractionError,
    RejectedStepError,
)


class TestInitialField:
    def test_constant(self):
        f = initial_field("constant:2.5", Grid1D(16))
        np.testing.assert_allclose(f.values, 2.5)

    def test_constant_plus_mode(self):
        grid = Grid1D(64)
        f = initial_field("constant_plus_mode:3,0.1,2", grid)
        basis = SpectralBasis(grid)
        np.testing.assert_allclose(f.values, 3.0 + 0.1 * basis.modes[:, 2])

    def test_random_zero_mean(self):
        f = initial_field("random_zero_mean:0.5,7", Grid1D(64))
        assert abs(f.mass) < 1e-14
        assert np.abs(f.values).max() == pytest.approx(0.5)

    def test_random_is_seeded(self):
        a = initial_field("random_zero_mean:0.5,7", Grid1D(64))
        b = initial_field("random_zero_mean:0.5,7", Grid1D(64))
        np.testing.assert_array_equal(a.values, b.values)

    def test_csv(self, tmp_path):
        path = tmp_path / "u0.csv"
        path.write_text("".join(f"{v}\n" for v in range(16)))
        f = initial_field(f"csv:{path}", Grid1D(16))
        np.testing.assert_allclose(f.values, np.arange(16.0))

    def test_bad_descriptor(self):
        with pytest.raises(InvalidParameterError):
            initial_field("sawtooth:1", Grid1D(16))
        with pytest.raises(InvalidParameterError):
            initial_field("constant:abc", Grid1D(16))


class TestStepImex:
    def test_conserves_mass(self, km128, grid128):
        u = initial_field("constant_plus_mode:2,0.5,1", grid128)
        out = step_imex(u, 1e-4, "nonlinear", 0.0, km128)
        assert out.mass == pytest.approx(u.mass, rel=1e-14)

    def test_preserves_positivity(self, km128, grid128, rng):
        u = Field(grid128, rng.random(128) + 1e-6)
        dt = auto_dt(u, km128, "nonlinear", 0.0)
        out = step_imex(u, dt, "nonlinear", 0.0, km128)
        assert out.values.min() >= -1e-14

    def test_rejects_cfl_violation(self, km128, grid128):
        u = initial_field("constant_plus_mode:10,2,1", grid128)
        with pytest.raises(RejectedStepError) as exc:
            step_imex(u, 1.0, "nonlinear", 0.0, km128)
        assert exc.value.admissible < 1.0

    def test_invalid_arguments(self, km128, grid128):
        u = constant_field(grid128, 1.0)
        with pytest.raises(InvalidParameterError):
            step_imex(u, -0.1, "nonlinear", 0.0, km128)
        with pytest.raises(InvalidParameterError):
            step_imex(u, 0.1, "hyperbolic", 0.0, km128)

    def test_pure_diffusion_decays_modes(self, grid128):
        km = assemble(KernelSpec.zero(128), grid128)
        basis = SpectralBasis(grid128)
        u = Field(grid128, 1.0 + 0.1 * basis.modes[:, 1])
        dt = 1e-3
        out = step_imex(u, dt, "linearized", 0.0, km)
        lam = basis.eigenvalues_discrete[1]
        expected = 1.0 + 0.1 * basis.modes[:, 1] / (1.0 + dt * lam)
        np.testing.assert_allclose(out.values, expected, atol=1e-12)


class TestEvolve:
    def test_validates_initial_data(self, green):
        bad = SimConfig(n=64, kernel=green, mode="nonlinear", initial="constant:-1")
        with pytest.raises(InvalidParameterError):
            evolve(bad)
        nonzero_mean = SimConfig(n=64, kernel=green, mode="perturbed", initial="constant:1")
        with pytest.raises(InvalidParameterError):
            evolve(nonzero_mean)

    def test_records_requested_stride(self, green):
        config = SimConfig(
            n=64,
            kernel=green,
            mode="nonlinear",
            t_end=0.01,
            dt=1e-3,
            initial="constant:1",
            output_stride=5,
        )
        traj = evolve(config)
        assert traj.times[0] == 0.0
        assert traj.times[-1] == pytest.approx(0.01)
        assert len(traj.snapshots) == len(traj.times)

    def test_stable_perturbation_decays_at_spectral_rate(self, green):
        config = SimConfig(
            n=128,
            kernel=green,
            mode="perturbed",
            mass_level=5.0,
            t_end=0.5,
            initial="constant_plus_mode:0,0.01,1",
            output_stride=20,
        )
        traj = evolve(config)
        rate = -math.log(traj.l2[-1] / traj.l2[0]) / traj.times[-1]
        expected = math.pi**2 * (1.0 - 5.0 / (1.0 + math.pi**2))
        assert rate == pytest.approx(expected, rel=0.02)

    def test_mass_and_positivity_guarantees(self, green):
        config = SimConfig(
            n=64,
            kernel=green,
            mode="nonlinear",
            mass_level=12.0,
            t_end=1.0,
            initial="constant_plus_mode:12,0.12,1",
            output_stride=10,
        )
        traj = evolve(config)
        assert np.abs(traj.mass - traj.mass[0]).max() <= 1e-12 * traj.mass[0]
        assert traj.min_value.min() >= -1e-12


class TestHeatSemigroup:
    def test_identity_at_time_zero(self, grid128, rng):
        f = Field(grid128, rng.standard_normal(128))
        np.testing.assert_allclose(heat_semigroup(f, 0.0).values, f.values, atol=1e-12)

    def test_mode_decay_is_exact(self, grid256):
        basis = SpectralBasis(grid256)
        f = basis.mode(3)
        t = 0.01
        out = heat_semigroup(f, t, basis)
        np.testing.assert_allclose(
            out.values, math.exp(-basis.eigenvalues_discrete[3] * t) * f.values, atol=1e-12
        )

    def test_semigroup_property(self, grid128, rng):
        f = Field(grid128, rng.standard_normal(128))
        one = heat_semigroup(f, 0.3)
        two = heat_semigroup(heat_semigroup(f, 0.1), 0.2)
        np.testing.assert_allclose(one.values, two.values, atol=1e-12)

    def test_negative_time_rejected(self, grid128):
        with pytest.raises(InvalidParameterError):
            heat_semigroup(constant_field(grid128, 1.0), -0.1)


class TestSemigroupProbe:
    def test_constants_finite_and_positive(self, grid128, rng):
        basis = SpectralBasis(grid128)
        z = rng.standard_normal(128)
        probes = [basis.mode(1), Field(grid128, z - z.mean())]
        report = semigroup_probe(probes, p=np.inf, q=1, times=np.geomspace(1e-3, 2.0, 20))
        assert 0 < report.smoothing_constant < np.inf
        assert 0 < report.gradient_constant < np.inf

    def test_invalid_exponent_order(self, grid128):
        with pytest.raises(InvalidParameterError):
            semigroup_probe([constant_field(grid128, 1.0)], p=1, q=2, times=[0.1])

    def test_nonpositive_times_rejected(self, grid128):
        with pytest.raises(InvalidParameterError):
            semigroup_probe([constant_field(grid128, 1.0)], p=2, q=2, times=[0.0, 0.1])


class TestExistenceTime:
    def test_scaling_in_initial_size(self, grid128):
        small = existence_time(constant_field(grid128, 1.0), 0.3, np.inf, 1.0)
        large = existence_time(constant_field(grid128, 2.0), 0.3, np.inf, 1.0)
        # gamma = 1/2 at q' = inf, so doubling u0 quarters the horizon
        assert large == pytest.approx(small / 4.0, rel=1e-12)

    def test_infinite_norm_estimate_rejected(self, grid128):
        with pytest.raises(NoExistenceTimeError):
            existence_time(constant_field(grid128, 1.0), math.inf, np.inf, 1.0)

    def test_zero_interaction_gives_infinite_horizon(self, grid128):
        assert existence_time(constant_field(grid128, 1.0), 0.0, np.inf, 1.0) == math.inf

    def test_strongly_singular_branch(self, grid128):
        u0 = constant_field(grid128, 1.0)
        t = existence_time(u0, 0.5, 1.0, 1.0)
        assert t == pytest.approx((4.0 * 0.5 * 2.0) ** -2.0)


class TestPicardMildSolve:
    def test_contracts_within_existence_horizon(self, green, grid128, km128):
        u0 = initial_field("constant_plus_mode:1,0.1,1", grid128)
        diag = picard_mild_solve(u0, km128, 0.2, n_time=64)
        assert diag.contraction_ratio < 1.0
        d = diag.picard_distances
        assert all(b < a for a, b in zip(d, d[1:]))

    def test_pure_diffusion_converges_immediately(self, grid128):
        km = assemble(KernelSpec.zero(128), grid128)
        u0 = initial_field("constant_plus_mode:1,0.1,1", grid128)
        diag = picard_mild_solve(u0, km, 0.5, n_time=32)
        # the drift vanishes, so the free flow is already the fixed point
        assert len(diag.picard_distances) <= 2

    def test_conserves_mass(self, km128, grid128):
        u0 = initial_field("constant_plus_mode:1,0.1,1", grid128)
        diag = picard_mild_solve(u0, km128, 0.2, n_time=64)
        drift = np.abs(diag.trajectory.mass - u0.mass).max()
        assert drift <= 1e-10 * u0.mass

    def test_warns_beyond_existence_estimate(self, km128, grid128):
        u0 = initial_field("constant_plus_mode:1,0.1,1", grid128)
        with pytest.warns(UserWarning, match="contraction estimate"):
            picard_mild_solve(u0, km128, 0.2, n_time=32, existence_estimate=0.1)

    def test_non_contraction_raises(self, green, grid128, km128):
        # far beyond the horizon with few iterations the residual cannot reach tol
        u0 = initial_field("constant_plus_mode:40,4,1", grid128)
        with pytest.raises(NonContractionError) as exc:
            picard_mild_solve(u0, km128, 5.0, n_time=32, max_iter=3, tol=1e-14)
        assert len(exc.value.distances) == 3

    def test_argument_validation(self, km128, grid128):
        u0 = constant_field(grid128, 1.0)
        with pytest.raises(InvalidParameterError):
            picard_mild_solve(u0, km128, -1.0)
        with pytest.raises(InvalidParameterError):
            picard_mild_solve(u0, km128, 1.0, n_time=1)
