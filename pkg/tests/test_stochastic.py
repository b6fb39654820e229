import numpy as np
import pytest

from app.core.exceptions import (
    ConfigError,
    MeasureMismatchError,
    NonOrthonormalBasisError,
    TensorGridTooLargeError,
)
from app.services.stochastic import (
    DiscreteMeasure,
    as_basis,
    center,
    check_basis,
    expect,
    gauss_legendre_measure,
    inner,
    monte_carlo_measure,
    orthonormal_completion,
    project_complement,
    project_span,
    weighted_gram,
)


class TestGaussLegendre:
    def test_tensor_grid_size_and_weights(self):
        mu = gauss_legendre_measure(2, 9)
        assert mu.size == 81
        assert mu.dim == 2
        assert mu.weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(mu.weights > 0.0)

    def test_single_point_rule(self):
        mu = gauss_legendre_measure(1, 1)
        np.testing.assert_allclose(mu.points, [[0.0]], atol=1e-15)
        np.testing.assert_allclose(mu.weights, [1.0])

    def test_second_moment_is_exact(self):
        mu = gauss_legendre_measure(1, 3)
        xi2 = mu.random_scalar(mu.points[:, 0] ** 2)
        assert expect(mu, xi2) == pytest.approx(1.0 / 3.0, abs=1e-14)

    def test_grid_cap(self):
        with pytest.raises(TensorGridTooLargeError):
            gauss_legendre_measure(10, 9)
        with pytest.raises(TensorGridTooLargeError):
            gauss_legendre_measure(2, 5, max_points=10)

    def test_invalid_arguments(self):
        with pytest.raises(ConfigError):
            gauss_legendre_measure(0, 3)


class TestMonteCarlo:
    def test_equal_weights(self):
        mu = monte_carlo_measure(10, 50, seed=3)
        assert mu.points.shape == (50, 10)
        np.testing.assert_allclose(mu.weights, 0.02)
        assert np.all(np.abs(mu.points) <= 1.0)

    def test_seed_reproducible(self):
        a = monte_carlo_measure(3, 20, seed=11)
        b = monte_carlo_measure(3, 20, seed=11)
        c = monte_carlo_measure(3, 20, seed=12)
        np.testing.assert_array_equal(a.points, b.points)
        assert a.measure_id == b.measure_id
        assert a.measure_id != c.measure_id

    def test_single_sample(self):
        mu = monte_carlo_measure(1, 1, seed=0)
        np.testing.assert_allclose(mu.weights, [1.0])

    def test_sample_mean(self):
        mu = monte_carlo_measure(2, 10_000, seed=5)
        assert abs(expect(mu, mu.random_scalar(mu.points[:, 0]))) <= 0.05


class TestDiscreteMeasure:
    def test_rejects_bad_weights(self):
        with pytest.raises(ConfigError):
            DiscreteMeasure(np.zeros((2, 1)), np.array([1.5, -0.5]))
        with pytest.raises(ConfigError):
            DiscreteMeasure(np.zeros((2, 1)), np.array([0.3, 0.3]))
        with pytest.raises(ConfigError):
            DiscreteMeasure(np.zeros((3, 1)), np.array([0.5, 0.5]))
        with pytest.raises(ConfigError):
            DiscreteMeasure(np.zeros((2, 1)), np.array([0.5, 0.5 + 5e-13]))

    def test_builders_sum_to_one(self):
        for mu in (gauss_legendre_measure(2, 9), gauss_legendre_measure(3, 5), monte_carlo_measure(10, 50, seed=2017)):
            assert abs(mu.weights.sum() - 1.0) <= 1e-14 + mu.size * np.finfo(float).eps

    def test_arrays_are_read_only(self, gl_measure):
        with pytest.raises(ValueError):
            gl_measure.weights[0] = 1.0


class TestRandomVariables:
    def test_expect_center_inner(self):
        mu = DiscreteMeasure(np.array([[-1.0], [1.0]]), np.array([0.25, 0.75]))
        v = mu.random_scalar([2.0, 6.0])
        assert expect(mu, v) == pytest.approx(5.0)
        assert expect(mu, center(mu, v)) == pytest.approx(0.0, abs=1e-15)
        assert inner(mu, v, v) == pytest.approx(0.25 * 4.0 + 0.75 * 36.0)

    def test_measure_mismatch(self, gl_measure):
        other = monte_carlo_measure(2, 9, seed=1)
        v = other.random_scalar(np.ones(9))
        with pytest.raises(MeasureMismatchError):
            expect(gl_measure, v)
        with pytest.raises(MeasureMismatchError):
            inner(gl_measure, gl_measure.random_scalar(np.ones(9)), v)


class TestProjections:
    def test_completion_is_orthonormal_and_zero_mean(self, gl_measure):
        Y = orthonormal_completion(gl_measure, np.zeros((gl_measure.size, 0)), 4, seed=1)
        np.testing.assert_allclose(weighted_gram(gl_measure, Y), np.eye(4), atol=1e-12)
        np.testing.assert_allclose(gl_measure.weights @ Y, 0.0, atol=1e-12)

    def test_completion_extends_existing(self, gl_measure):
        first = orthonormal_completion(gl_measure, np.zeros((gl_measure.size, 0)), 2, seed=1)
        more = orthonormal_completion(gl_measure, first, 3, seed=2)
        both = np.hstack([first, more])
        np.testing.assert_allclose(weighted_gram(gl_measure, both), np.eye(5), atol=1e-12)

    def test_completion_is_seeded(self, gl_measure):
        a = orthonormal_completion(gl_measure, np.zeros((gl_measure.size, 0)), 2, seed=9)
        b = orthonormal_completion(gl_measure, np.zeros((gl_measure.size, 0)), 2, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_completion_needs_room(self, gl_measure):
        with pytest.raises(ConfigError):
            orthonormal_completion(gl_measure, np.zeros((gl_measure.size, 0)), gl_measure.size)

    def test_span_plus_complement(self, gl_measure):
        Y = as_basis(gl_measure, orthonormal_completion(gl_measure, np.zeros((9, 0)), 3, seed=4))
        v = gl_measure.random_scalar(np.arange(9.0) ** 2)
        span = project_span(gl_measure, Y, v)
        rest = project_complement(gl_measure, Y, v)
        np.testing.assert_allclose(span.values + rest.values, v.values, atol=1e-12)
        for y in Y.columns():
            assert inner(gl_measure, rest, y) == pytest.approx(0.0, abs=1e-12)

    def test_projection_onto_own_basis_is_identity(self, gl_measure):
        Y = as_basis(gl_measure, orthonormal_completion(gl_measure, np.zeros((9, 0)), 2, seed=4))
        y = Y.columns()[1]
        np.testing.assert_allclose(project_span(gl_measure, Y, y).values, y.values, atol=1e-12)

    def test_check_basis_rejects_non_orthonormal(self, gl_measure):
        values = orthonormal_completion(gl_measure, np.zeros((9, 0)), 2, seed=4) * 2.0
        with pytest.raises(NonOrthonormalBasisError):
            check_basis(gl_measure, as_basis(gl_measure, values))
        with pytest.raises(NonOrthonormalBasisError):
            check_basis(gl_measure, as_basis(gl_measure, values / 2.0, orthonormal=False))

    @pytest.fixture
    def mc_basis(self):
        mu = monte_carlo_measure(3, 40, seed=3)
        Y = as_basis(mu, orthonormal_completion(mu, np.zeros((40, 0)), 4, seed=11))
        return mu, Y

    def test_span_projection_is_idempotent(self, mc_basis):
        mu, Y = mc_basis
        rng = np.random.default_rng(21)
        for _ in range(20):
            v = mu.random_scalar(rng.standard_normal(mu.size))
            once = project_span(mu, Y, v)
            twice = project_span(mu, Y, once)
            np.testing.assert_allclose(twice.values, once.values, atol=1e-12)

    def test_span_projection_is_self_adjoint(self, mc_basis):
        mu, Y = mc_basis
        rng = np.random.default_rng(22)
        for _ in range(20):
            u = mu.random_scalar(rng.standard_normal(mu.size))
            v = mu.random_scalar(rng.standard_normal(mu.size))
            left = inner(mu, project_span(mu, Y, u), v)
            right = inner(mu, u, project_span(mu, Y, v))
            assert left == pytest.approx(right, abs=1e-12)
