from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg as sla
import pytest

from app.core.exceptions import ConfigError
from app.services.fem import (
    AffineDiffusion,
    FeFunction,
    assemble,
    assemble_sample,
    build_space,
    estimate_constants,
    laplace_spectrum,
    norm_energy,
    norm_H,
    norm_V,
    sample_bounds,
)
from app.services.initialization import heat_coefficient
from app.services.stochastic import DiscreteMeasure, gauss_legendre_measure


def point_measure() -> DiscreteMeasure:
    return DiscreteMeasure(np.zeros((1, 1)), np.ones(1))


def sine_bump(x: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


class TestMesh:
    def test_seven_cells(self):
        space = build_space(7)
        assert space.dof_count == 36
        assert space.mesh.spacing == pytest.approx(1.0 / 7.0)
        assert space.h == pytest.approx(np.sqrt(2.0) / 7.0)

    def test_ten_cells_match_reported_element_size(self):
        assert build_space(10).h == pytest.approx(0.1414, abs=1e-3)
        assert build_space(20).h == pytest.approx(0.1414 / 2.0, abs=1e-3)

    def test_single_interior_dof(self):
        space = build_space(2)
        assert space.dof_count == 1
        np.testing.assert_allclose(space.dof_coordinates, [[0.5, 0.5]])

    def test_too_coarse(self):
        with pytest.raises(ConfigError):
            build_space(1)

    def test_areas_cover_the_square(self):
        space = build_space(6)
        assert space.mesh.areas.sum() == pytest.approx(1.0)
        assert space.full_mass.sum() == pytest.approx(1.0)

    def test_fe_function_shape_check(self):
        space = build_space(3)
        with pytest.raises(ConfigError):
            FeFunction(space, np.zeros(5))


class TestNorms:
    def test_h_norm_of_sine_bump(self):
        space = build_space(32)
        u = space.interpolate(sine_bump)
        assert norm_H(space, point_measure(), u.coeffs) == pytest.approx(0.5, rel=0.02)

    def test_v_norm_of_sine_bump(self):
        space = build_space(32)
        u = space.interpolate(sine_bump)
        assert norm_V(space, point_measure(), u.coeffs) == pytest.approx(np.pi / np.sqrt(2.0), rel=0.02)

    def test_zero_field(self, small_space, gl_measure):
        zero = np.zeros((small_space.dof_count, gl_measure.size))
        assert norm_H(small_space, gl_measure, zero) == 0.0
        assert norm_V(small_space, gl_measure, zero) == 0.0

    def test_energy_norm_of_constant_coefficient(self, small_space, gl_measure):
        diff = AffineDiffusion.constant(2.0, M=2)
        u = small_space.interpolate(sine_bump).coeffs
        expected = np.sqrt(2.0) * norm_V(small_space, point_measure(), u)
        assert norm_energy(small_space, gl_measure, diff, u) == pytest.approx(expected, rel=1e-12)


class TestAssembly:
    def test_matrices_are_symmetric(self, small_space):
        ops = assemble(small_space, heat_coefficient(0.3, 2))
        for matrix in (ops.mass, ops.stiff_mean, ops.stiff_laplace, *ops.stiff_terms):
            assert abs(matrix - matrix.T).max() < 1e-14

    def test_constant_coefficient_gives_laplace(self, small_space):
        ops = assemble(small_space, AffineDiffusion.constant(1.0))
        assert abs(ops.stiff_mean - ops.stiff_laplace).max() < 1e-12
        assert abs(ops.stiff_terms[0]).max() == 0.0

    def test_affine_stiffness_matches_direct_assembly(self, small_space):
        diff = heat_coefficient(0.3, 2)
        ops = assemble(small_space, diff)
        rng = np.random.default_rng(3)
        for omega in rng.uniform(-1.0, 1.0, size=(25, 2)):
            direct = assemble_sample(small_space, diff, omega)
            assert abs(ops.stiffness_at(omega) - direct).max() < 1e-12

    def test_mass_and_mean_stiffness_are_positive_definite(self, small_space):
        ops = assemble(small_space, heat_coefficient(0.3, 2))
        for matrix in (ops.mass, ops.stiff_mean):
            dense = matrix.toarray()
            sla.cholesky(dense, lower=False)
            assert np.linalg.eigvalsh(dense)[0] > 0.0

    def test_apply_full_uses_each_sample(self, small_space, gl_measure):
        diff = heat_coefficient(0.3, 2)
        ops = assemble(small_space, diff)
        rng = np.random.default_rng(0)
        field = rng.standard_normal((small_space.dof_count, gl_measure.size))
        applied = ops.apply_full(field, gl_measure.points)
        for k in (0, 4, 8):
            expected = ops.stiffness_at(gl_measure.points[k]) @ field[:, k]
            np.testing.assert_allclose(applied[:, k], expected, atol=1e-12)

    def test_shifted_factorization_is_cached(self, small_space):
        ops = assemble(small_space, heat_coefficient(0.3, 2))
        assert ops.shifted_lu(0.5) is ops.shifted_lu(0.5)

    def test_shifted_factorization_is_shared_across_threads(self, small_space):
        ops = assemble(small_space, heat_coefficient(0.3, 2))
        with ThreadPoolExecutor(max_workers=8) as pool:
            factors = list(pool.map(lambda _: ops.shifted_lu(0.25), range(32)))
        assert all(f is factors[0] for f in factors)
        assert ops._shifted[0.25] is factors[0]


class TestConstants:
    def test_laplace_spectrum(self):
        lam_min, lam_max = laplace_spectrum(build_space(16))
        assert lam_min == pytest.approx(2.0 * np.pi ** 2, rel=0.05)
        assert lam_max > lam_min

    def test_inverse_constant_is_mesh_independent(self):
        mu = point_measure()
        diff = AffineDiffusion.constant(1.0)
        coarse = estimate_constants(build_space(8), mu, diff)
        fine = estimate_constants(build_space(16), mu, diff)
        assert fine.C_I == pytest.approx(coarse.C_I, rel=0.1)

    def test_explicit_bound_of_heat_model(self):
        mu = gauss_legendre_measure(2, 9)
        diff = heat_coefficient(0.3, 2)
        report = estimate_constants(build_space(10), mu, diff)
        assert 0.06 <= report.K_explicit <= 0.11
        assert 0.0 < report.C_L <= 0.3 <= report.C_B
        assert report.a_min_envelope <= report.C_L
        assert report.C_B <= report.a_max_envelope
        assert 0.0 < report.C_det <= 1.0
        assert report.C_P == pytest.approx(1.0 / (np.sqrt(2.0) * np.pi), rel=0.05)

    def test_inverse_inequality_on_random_vectors(self):
        space = build_space(10)
        report = estimate_constants(space, point_measure(), AffineDiffusion.constant(1.0))
        bound = (report.C_I / space.h) ** 2
        rng = np.random.default_rng(4)
        for _ in range(100):
            v = rng.standard_normal(space.dof_count)
            gradient = v @ (space.stiff_laplace @ v)
            value = v @ (space.mass @ v)
            assert gradient <= bound * value * (1.0 + 1e-10)

    def test_mean_operator_dominates_every_sample(self):
        space = build_space(10)
        mu = gauss_legendre_measure(2, 9)
        diff = heat_coefficient(0.3, 2)
        ops = assemble(space, diff)
        C_det = estimate_constants(space, mu, diff).C_det
        rng = np.random.default_rng(5)
        for _ in range(100):
            k = rng.integers(mu.size)
            u = rng.standard_normal(space.dof_count)
            mean_part = u @ (ops.stiff_mean @ u)
            sample_part = u @ (ops.stiffness_at(mu.points[k]) @ u)
            assert mean_part >= C_det * sample_part * (1.0 - 1e-12)

    def test_sampled_bounds(self, small_space, gl_measure):
        a_min, a_max = sample_bounds(small_space, gl_measure, heat_coefficient(0.3, 2))
        assert 0.0 < a_min < 0.3 < a_max

    def test_non_positive_coefficient(self, small_space):
        with pytest.raises(ConfigError):
            estimate_constants(small_space, point_measure(), AffineDiffusion.constant(-1.0))
