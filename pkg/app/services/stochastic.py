"""Discrete probability measures on [-1, 1]^M and the random-variable algebra.

A random variable on a measure with ``N`` points is stored as the dense vector
of its values at the points; expectations and inner products are weighted sums.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from ..config import settings
from ..core.exceptions import (
    ConfigError,
    MeasureMismatchError,
    NonOrthonormalBasisError,
    TensorGridTooLargeError,
)

logger = logging.getLogger(__name__)


def _fingerprint(points: np.ndarray, weights: np.ndarray) -> str:
    digest = hashlib.sha1(np.ascontiguousarray(points).tobytes())
    digest.update(np.ascontiguousarray(weights).tobytes())
    return digest.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Points ``omega_k`` in R^M with positive weights ``lambda_k`` summing to one."""

    points: np.ndarray
    weights: np.ndarray
    kind: str = "custom"
    measure_id: str = field(default="", compare=False)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if points.shape[0] != weights.shape[0]:
            raise ConfigError(
                f"measure has {points.shape[0]} points but {weights.shape[0]} weights"
            )
        if np.any(weights <= 0.0):
            raise ConfigError("measure weights must be strictly positive")
        # summation of N weights adds up to N ulps of rounding
        if abs(weights.sum() - 1.0) > settings.weight_sum_tol + weights.size * np.finfo(float).eps:
            raise ConfigError(f"measure weights sum to {weights.sum():.16g}, expected 1")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        if not self.measure_id:
            object.__setattr__(self, "measure_id", _fingerprint(points, weights))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def random_scalar(self, values) -> "RandomScalar":
        return RandomScalar(np.asarray(values, dtype=float), self.measure_id)


@dataclass(frozen=True)
class RandomScalar:
    values: np.ndarray
    measure_id: str


@dataclass(frozen=True)
class StochasticBasis:
    """Columns ``Y_1..Y_R`` stored as an ``(N, R)`` array."""

    values: np.ndarray
    measure_id: str
    orthonormal: bool = True

    @property
    def rank(self) -> int:
        return self.values.shape[1]

    def columns(self) -> list[RandomScalar]:
        return [RandomScalar(self.values[:, j].copy(), self.measure_id) for j in range(self.rank)]


def gauss_legendre_measure(M: int, n_per_dim: int, max_points: Optional[int] = None) -> DiscreteMeasure:
    """Tensor Gauss-Legendre rule for the uniform density on [-1, 1]^M."""
    if M < 1 or n_per_dim < 1:
        raise ConfigError(f"gauss_legendre_measure needs M >= 1 and n >= 1, got M={M}, n={n_per_dim}")
    cap = settings.max_tensor_points if max_points is None else max_points
    if n_per_dim ** M > cap:
        raise TensorGridTooLargeError(
            f"tensor grid {n_per_dim}^{M} = {n_per_dim ** M} points exceeds cap {cap}"
        )

    nodes, w = leggauss(n_per_dim)
    w = w / 2.0
    grids = np.meshgrid(*([nodes] * M), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    weight_grids = np.meshgrid(*([w] * M), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in weight_grids], axis=1), axis=1)
    weights = weights / weights.sum()

    logger.debug(f"Built Gauss-Legendre measure M={M}, n={n_per_dim}, N={weights.size}")
    return DiscreteMeasure(points, weights, kind="gl")


def monte_carlo_measure(M: int, N: int, seed: int) -> DiscreteMeasure:
    """``N`` iid uniform samples on [-1, 1]^M drawn with a seeded PCG64 stream."""
    if M < 1 or N < 1:
        raise ConfigError(f"monte_carlo_measure needs M >= 1 and N >= 1, got M={M}, N={N}")
    rng = np.random.Generator(np.random.PCG64(seed))
    points = rng.uniform(-1.0, 1.0, size=(N, M))
    weights = np.full(N, 1.0 / N)

    logger.debug(f"Built Monte Carlo measure M={M}, N={N}, seed={seed}")
    return DiscreteMeasure(points, weights, kind="mc")


def _check_member(mu: DiscreteMeasure, measure_id: str, what: str = "random variable"):
    if measure_id != mu.measure_id:
        raise MeasureMismatchError(
            f"{what} belongs to measure {measure_id}, not to {mu.measure_id}"
        )


def expect(mu: DiscreteMeasure, v: RandomScalar) -> float:
    _check_member(mu, v.measure_id)
    return float(mu.weights @ v.values)


def center(mu: DiscreteMeasure, v: RandomScalar) -> RandomScalar:
    mean = expect(mu, v)
    return RandomScalar(v.values - mean, v.measure_id)


def inner(mu: DiscreteMeasure, u: RandomScalar, v: RandomScalar) -> float:
    _check_member(mu, u.measure_id)
    _check_member(mu, v.measure_id)
    return float(np.sum(mu.weights * u.values * v.values))


def weighted_gram(mu: DiscreteMeasure, Y: np.ndarray) -> np.ndarray:
    """``<Y_i, Y_j>`` for the columns of an ``(N, R)`` array."""
    return Y.T @ (mu.weights[:, None] * Y)


def check_basis(mu: DiscreteMeasure, Y: StochasticBasis, tol: Optional[float] = None):
    """Raise if a basis flagged orthonormal is not orthonormal and zero-mean under ``mu``."""
    _check_member(mu, Y.measure_id, "stochastic basis")
    if not Y.orthonormal:
        raise NonOrthonormalBasisError("projection needs a basis flagged orthonormal")
    tol = settings.tol_ortho if tol is None else tol
    gram_error = np.max(np.abs(weighted_gram(mu, Y.values) - np.eye(Y.rank)), initial=0.0)
    mean_error = np.max(np.abs(mu.weights @ Y.values), initial=0.0)
    if gram_error > tol or mean_error > tol:
        raise NonOrthonormalBasisError(
            f"basis fails orthonormality check: gram error {gram_error:.3e}, "
            f"mean error {mean_error:.3e}, tolerance {tol:.1e}"
        )


def project_span(mu: DiscreteMeasure, Y: StochasticBasis, v: RandomScalar) -> RandomScalar:
    check_basis(mu, Y)
    _check_member(mu, v.measure_id)
    coefficients = Y.values.T @ (mu.weights * v.values)
    return RandomScalar(Y.values @ coefficients, v.measure_id)


def project_complement(mu: DiscreteMeasure, Y: StochasticBasis, v: RandomScalar) -> RandomScalar:
    projected = project_span(mu, Y, v)
    return RandomScalar(v.values - projected.values, v.measure_id)


def center_rows(mu: DiscreteMeasure, G: np.ndarray) -> np.ndarray:
    """Center each row of an ``(R, N)`` array of random variables."""
    return G - (G @ mu.weights)[:, None]


def project_rows_complement(mu: DiscreteMeasure, Y: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Remove the span of the orthonormal columns of ``Y`` from each row of ``G``."""
    return G - (G @ (mu.weights[:, None] * Y)) @ Y.T


def orthonormal_completion(
    mu: DiscreteMeasure,
    existing: np.ndarray,
    count: int,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Zero-mean columns orthonormal to each other and to ``existing``.

    ``existing`` holds already orthonormal zero-mean columns, shape ``(N, r)``.
    Works in the weighted coordinates ``sqrt(lambda) * Y`` where the problem is
    Euclidean; the constant is excluded through ``sqrt(lambda)``.
    """
    if count <= 0:
        return np.zeros((mu.size, 0))
    r = existing.shape[1] if existing.size else 0
    if mu.size < 1 + r + count:
        raise ConfigError(
            f"cannot complete {r} modes with {count} more zero-mean modes on {mu.size} points"
        )
    sqrt_w = mu.sqrt_weights
    taken = [sqrt_w[:, None]]
    if r:
        taken.append(sqrt_w[:, None] * existing)
    basis = np.hstack(taken)

    rng = np.random.Generator(np.random.PCG64(settings.completion_seed if seed is None else seed))
    new_columns = []
    while len(new_columns) < count:
        candidate = rng.standard_normal(mu.size)
        for _ in range(2):
            candidate -= basis @ (basis.T @ candidate)
        norm = np.linalg.norm(candidate)
        if norm < 1e-8:
            continue
        candidate /= norm
        basis = np.hstack([basis, candidate[:, None]])
        new_columns.append(candidate / sqrt_w)
    return np.stack(new_columns, axis=1)


def as_basis(mu: DiscreteMeasure, Y: np.ndarray | Sequence[RandomScalar], orthonormal: bool = True) -> StochasticBasis:
    if isinstance(Y, np.ndarray):
        return StochasticBasis(np.asarray(Y, dtype=float), mu.measure_id, orthonormal)
    for y in Y:
        _check_member(mu, y.measure_id)
    values = np.stack([y.values for y in Y], axis=1) if len(Y) else np.zeros((mu.size, 0))
    return StochasticBasis(values, mu.measure_id, orthonormal)
