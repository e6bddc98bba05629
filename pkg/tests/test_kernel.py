import math

import numpy as np
import pytest

from aggrestab import (
    Field,
    Grid1D,
    KernelSpec,
    apply,
    apply_grad,
    assemble,
    classify,
    constant_field,
    eval_grad_x,
    eval_kernel,
    hilbert_schmidt_grad_norm,
    l2_operator_norm,
    load_tabulated_csv,
    norm_inf_qprime,
    save_tabulated_csv,
    validate_assumptions,
)
from aggrestab.errors import (
    GridMismatchError,
    InvalidParameterError,
    KernelLoadError,
    SingularityError,
)


class TestKernelSpec:
    def test_invalid_variant(self):
        with pytest.raises(InvalidParameterError):
            KernelSpec("pyramid")

    def test_power_law_needs_regularization_for_large_alpha(self):
        with pytest.raises(InvalidParameterError):
            KernelSpec.power_law(1.5, delta=0.0)
        KernelSpec.power_law(1.5, delta=0.01)  # regularized is fine

    def test_series_parameter_validation(self):
        with pytest.raises(InvalidParameterError):
            KernelSpec.green_series(a=-1.0)
        with pytest.raises(InvalidParameterError):
            KernelSpec.green_series(a=1.0, m=4)

    def test_tabulated_shape_validation(self):
        with pytest.raises(InvalidParameterError):
            KernelSpec.tabulated(np.zeros((8, 8)), np.zeros((8, 8)))


class TestGreenKernel:
    """The closed form solves -K'' + K = delta_y with zero-flux boundaries."""

    def test_symmetry(self, green):
        x = np.linspace(0.05, 0.95, 7)
        np.testing.assert_allclose(
            eval_kernel(green, x[:, None], x[None, :]),
            eval_kernel(green, x[None, :], x[:, None]).T,
            rtol=1e-13,
        )

    def test_matches_series(self):
        series = KernelSpec.green_series(a=1.0, m=20000)
        grid = Grid1D(32)
        closed = assemble(KernelSpec.green_closed_form(), grid)
        approx = assemble(series, grid)
        # coefficient decay 1/k^2 bounds the truncation error near the diagonal
        np.testing.assert_allclose(approx.k_centers, closed.k_centers, atol=2e-5)
        np.testing.assert_allclose(approx.gradk_faces, closed.gradk_faces, atol=1e-5)

    def test_ode_residual_off_diagonal(self, green):
        # -K_xx + K = 0 away from x = y
        y = 0.3
        x = np.linspace(0.5, 0.9, 41)
        h = x[1] - x[0]
        k = eval_kernel(green, x, y)
        kxx = (k[2:] - 2 * k[1:-1] + k[:-2]) / h**2
        np.testing.assert_allclose(-kxx + k[1:-1], 0.0, atol=1e-3)

    def test_zero_boundary_flux(self, km128):
        assert np.abs(km128.gradk_faces[[0, -1], :]).max() < 1e-12

    def test_constant_in_constant_out(self, green, km128, grid128):
        # h-weighted row sums of K equal 1/a, so K maps constants to constants
        out = apply(km128, constant_field(grid128, 3.0))
        np.testing.assert_allclose(out.values, 3.0, rtol=1e-3)
        # ... and the drift of a constant vanishes identically
        v = apply_grad(km128, constant_field(grid128, 3.0))
        assert np.abs(v).max() < 1e-13


class TestOperators:
    def test_grid_mismatch_rejected(self, km128):
        with pytest.raises(GridMismatchError):
            apply(km128, constant_field(Grid1D(64), 1.0))

    def test_mode_map_eigenvalues(self, green, km256, basis256):
        # K w_k = w_k / (a + (k pi)^2)
        for k in (1, 2, 5):
            w = basis256.mode(k)
            out = apply(km256, w)
            np.testing.assert_allclose(
                out.values, w.values / (1.0 + (k * math.pi) ** 2), atol=1e-4
            )

    def test_operator_norm_matches_dense_svd(self, green):
        grid = Grid1D(64)
        km = assemble(green, grid)
        dense = float(np.linalg.svd(grid.h * km.gradk_faces, compute_uv=False)[0])
        assert l2_operator_norm(km) == pytest.approx(dense, abs=1e-6)

    def test_operator_norm_zero_kernel(self):
        km = assemble(KernelSpec.zero(16), Grid1D(16))
        assert l2_operator_norm(km) == 0.0
        assert hilbert_schmidt_grad_norm(km) == 0.0

    def test_hs_norm_dominates_operator_norm(self, km128):
        assert l2_operator_norm(km128) <= hilbert_schmidt_grad_norm(km128) + 1e-12


class TestSingularity:
    def test_power_law_diagonal_raises(self):
        spec = KernelSpec.power_law(0.5)
        with pytest.raises(SingularityError):
            eval_grad_x(spec, 0.25, 0.25)

    def test_regularized_diagonal_is_finite(self):
        spec = KernelSpec.power_law(0.5, delta=0.01)
        assert np.isfinite(eval_grad_x(spec, 0.25, 0.25))


class TestNormEstimates:
    def test_invalid_exponent(self, green):
        with pytest.raises(InvalidParameterError):
            norm_inf_qprime(green, 0.5)

    def test_green_sup_norm_finite(self, green):
        est = norm_inf_qprime(green, np.inf, levels=(64, 128, 256))
        assert est.verdict == "finite"
        # |d/dx K| is bounded by its jump size ~ 1 on each side
        assert 1.5 < est.value < 2.5

    def test_power_law_divergence_pattern(self):
        spec = KernelSpec.power_law(0.5)
        levels = (64, 128, 256, 512, 1024, 2048)
        assert norm_inf_qprime(spec, 4.0, levels).verdict == "divergent"
        assert norm_inf_qprime(spec, 1.5, levels).verdict == "finite"

    def test_classification_green(self, green):
        cls = classify(green, levels=(64, 128, 256, 512))
        assert cls.category == "mildly_singular"
        assert cls.critical_q_prime == np.inf

    def test_classification_gaussian(self):
        cls = classify(KernelSpec.gaussian(0.2), levels=(64, 128, 256))
        assert cls.category == "mildly_singular"


class TestValidation:
    def test_green_passes(self, green, grid128):
        report = validate_assumptions(green, grid128, tol=1e-6)
        assert report.passed
        assert report.neumann_residual < 1e-12
        assert report.mean_gradient_residual < 1e-12
        assert report.symmetry_residual < 1e-12

    def test_gaussian_fails_boundary_assumption(self, grid128):
        report = validate_assumptions(KernelSpec.gaussian(0.1), grid128, tol=1e-6)
        assert not report.neumann_ok
        assert not report.passed


class TestTabulatedRoundTrip:
    def test_save_load_round_trip(self, green, tmp_path):
        grid = Grid1D(16)
        km = assemble(green, grid)
        path = tmp_path / "kernel.csv"
        save_tabulated_csv(path, grid, km)
        spec = load_tabulated_csv(path, grid)
        back = assemble(spec, grid)
        np.testing.assert_allclose(back.k_centers, km.k_centers, rtol=1e-15)
        np.testing.assert_allclose(back.gradk_faces, km.gradk_faces, rtol=1e-15)

    def test_load_rejects_wrong_grid(self, green, tmp_path):
        grid = Grid1D(16)
        path = tmp_path / "kernel.csv"
        save_tabulated_csv(path, grid, assemble(green, grid))
        with pytest.raises(KernelLoadError):
            load_tabulated_csv(path, Grid1D(32))

    def test_load_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(KernelLoadError):
            load_tabulated_csv(path, Grid1D(16))

    def test_load_rejects_missing_file(self, tmp_path):
        with pytest.raises(KernelLoadError):
            load_tabulated_csv(tmp_path / "nope.csv", Grid1D(16))
