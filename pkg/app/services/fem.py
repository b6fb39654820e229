"""P1 finite elements on a uniform triangulation of the unit square.

Homogeneous Dirichlet conditions are imposed by eliminating boundary
vertices; every matrix returned here acts on interior degrees of freedom.
Sample fields are stored as ``(dof, N)`` arrays, one column per sample.
"""

import logging
import threading
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..core.exceptions import ConfigError, EigensolveError, FactorizationError
from ..models.responses import ConstantsReport
from .stochastic import DiscreteMeasure

logger = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray], np.ndarray]

# Dense generalized eigensolves are used below this many dofs
DENSE_EIG_LIMIT = 2500


@dataclass(frozen=True, eq=False)
class Mesh:
    n_per_side: int
    vertices: np.ndarray
    triangles: np.ndarray

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_per_side

    @property
    def h(self) -> float:
        """Element diameter (length of the diagonal edge)."""
        return np.sqrt(2.0) / self.n_per_side

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def quadrature_nodes(self) -> np.ndarray:
        """Edge midpoints of every triangle, shape ``(T, 3, 2)``."""
        p = self.vertices[self.triangles]
        return 0.5 * (p + np.roll(p, -1, axis=1))


@dataclass(frozen=True, eq=False)
class FeSpace:
    mesh: Mesh
    interior_dofs: np.ndarray

    @property
    def dof_count(self) -> int:
        return self.interior_dofs.shape[0]

    @property
    def h(self) -> float:
        return self.mesh.h

    @cached_property
    def dof_coordinates(self) -> np.ndarray:
        return self.mesh.vertices[self.interior_dofs]

    def interpolate(self, func: ScalarField) -> "FeFunction":
        return FeFunction(self, np.asarray(func(self.dof_coordinates), dtype=float))

    def restrict(self, matrix: sp.spmatrix) -> sp.csr_matrix:
        matrix = matrix.tocsr()
        return matrix[self.interior_dofs][:, self.interior_dofs].tocsr()

    @cached_property
    def full_mass(self) -> sp.csr_matrix:
        """Mass matrix including boundary vertices."""
        return _assemble_mass(self.mesh)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return self.restrict(self.full_mass)

    @cached_property
    def stiff_laplace(self) -> sp.csr_matrix:
        return self.restrict(_assemble_stiffness(self.mesh, np.ones(self.mesh.triangles.shape[0])))

    @cached_property
    def mass_cholesky(self) -> np.ndarray:
        """Upper triangular ``C`` with ``mass = C^T C``, so ``||u||_H = ||C u||``."""
        try:
            return sla.cholesky(self.mass.toarray(), lower=False)
        except sla.LinAlgError as e:
            raise FactorizationError(f"mass matrix is not positive definite: {e}") from e


@dataclass(frozen=True)
class FeFunction:
    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.space.dof_count,):
            raise ConfigError(
                f"coefficient vector has shape {self.coeffs.shape}, "
                f"expected ({self.space.dof_count},)"
            )


@dataclass(frozen=True, eq=False)
class AffineDiffusion:
    """``a(x, xi) = mean_field(x) + sum_m terms[m](x) * xi_m``.

    ``envelope`` optionally carries an analytic ``(lower, upper)`` bound valid
    on all of [-1, 1]^M; it is reported next to the sampled bounds.
    """

    mean_field: ScalarField
    terms: Sequence[ScalarField]
    envelope: Optional[tuple[float, float]] = None

    @property
    def M(self) -> int:
        return len(self.terms)

    @classmethod
    def constant(cls, value: float, M: int = 1) -> "AffineDiffusion":
        zero = lambda x: np.zeros(x.shape[:-1])
        return cls(lambda x: np.full(x.shape[:-1], float(value)), [zero] * M, (value, value))

    def evaluate(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Values at nodes ``x`` (shape ``(..., 2)``) for every sample row of ``xi``."""
        base = self.mean_field(x)
        values = np.broadcast_to(base, (xi.shape[0],) + base.shape).copy()
        for m, term in enumerate(self.terms):
            values += xi[:, m].reshape((-1,) + (1,) * base.ndim) * term(x)
        return values


@dataclass(frozen=True, eq=False)
class OperatorMatrices:
    space: FeSpace
    mass: sp.csr_matrix
    stiff_mean: sp.csr_matrix
    stiff_terms: tuple
    stiff_laplace: sp.csr_matrix
    _shifted: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @cached_property
    def mass_lu(self):
        return _factorize(self.mass, "mass")

    def shifted_lu(self, dt: float):
        """Factorization of ``mass + dt * stiff_mean``, computed once per step size."""
        cached = self._shifted.get(dt)
        if cached is not None:
            return cached
        # sweep workers share one operator set
        with self._lock:
            if dt not in self._shifted:
                logger.debug(f"Factorizing mass + dt*stiff_mean for dt={dt:.6g}")
                self._shifted[dt] = _factorize(self.mass + dt * self.stiff_mean, "mass + dt*stiff_mean")
            return self._shifted[dt]

    def apply_stochastic(self, field: np.ndarray, points: np.ndarray) -> np.ndarray:
        """``sum_m xi_{k,m} K_m u_k`` for every sample column ``k``."""
        out = np.zeros_like(field)
        for m, K_m in enumerate(self.stiff_terms):
            out += (K_m @ field) * points[:, m][None, :]
        return out

    def apply_full(self, field: np.ndarray, points: np.ndarray) -> np.ndarray:
        """``A(omega_k) u_k`` for every sample column ``k``."""
        return self.stiff_mean @ field + self.apply_stochastic(field, points)

    def stiffness_at(self, omega: np.ndarray) -> sp.csr_matrix:
        K = self.stiff_mean.copy()
        for m, K_m in enumerate(self.stiff_terms):
            K = K + omega[m] * K_m
        return K.tocsr()


def _factorize(matrix: sp.spmatrix, name: str):
    try:
        return spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as e:
        raise FactorizationError(f"factorization of {name} failed: {e}") from e


def build_space(n_per_side: int) -> FeSpace:
    """Uniform mesh with ``n_per_side`` cells per side, each square cut along its diagonal."""
    if n_per_side < 2:
        raise ConfigError(f"n_per_side must be at least 2 to have interior dofs, got {n_per_side}")
    n = n_per_side
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (i + j * (n + 1)).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    triangles = np.vstack([
        np.column_stack([v00, v10, v11]),
        np.column_stack([v00, v11, v01]),
    ])

    on_boundary = np.zeros((n + 1, n + 1), dtype=bool)
    on_boundary[[0, -1], :] = True
    on_boundary[:, [0, -1]] = True
    interior = np.flatnonzero(~on_boundary.ravel())

    mesh = Mesh(n, vertices, triangles)
    logger.debug(f"Built mesh n={n}, h={mesh.h:.4f}, interior dofs={interior.size}")
    return FeSpace(mesh, interior)


def _gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the three barycentric functions per triangle, ``(T, 3, 2)``."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    two_area = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    grads = np.empty(p.shape)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        grads[:, a, 0] = (y[:, b] - y[:, c]) / two_area
        grads[:, a, 1] = (x[:, c] - x[:, b]) / two_area
    return grads


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    nv = mesh.vertices.shape[0]
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()


def _assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, mesh.areas[:, None, None] * ref[None])


def _assemble_stiffness(mesh: Mesh, element_coefficient: np.ndarray) -> sp.csr_matrix:
    """Stiffness for a coefficient given by its element averages."""
    grads = _gradients(mesh)
    local = np.einsum("tad,tbd->tab", grads, grads)
    local *= (mesh.areas * element_coefficient)[:, None, None]
    return _scatter(mesh, local)


def _element_average(mesh: Mesh, func: ScalarField) -> np.ndarray:
    """Edge-midpoint rule, exact for quadratics: the mean of the three midpoint values."""
    return func(mesh.quadrature_nodes).mean(axis=1)


@lru_cache(maxsize=32)
def assemble(space: FeSpace, diff: AffineDiffusion) -> OperatorMatrices:
    mesh = space.mesh
    stiff_mean = space.restrict(_assemble_stiffness(mesh, _element_average(mesh, diff.mean_field)))
    stiff_terms = tuple(
        space.restrict(_assemble_stiffness(mesh, _element_average(mesh, term)))
        for term in diff.terms
    )
    ops = OperatorMatrices(space, space.mass, stiff_mean, stiff_terms, space.stiff_laplace)
    try:
        ops.mass_lu
    except FactorizationError as e:
        raise FactorizationError(f"singular mass matrix, mesh is broken: {e}") from e
    logger.debug(f"Assembled operators on {space.dof_count} dofs with {diff.M} stochastic terms")
    return ops


def assemble_sample(space: FeSpace, diff: AffineDiffusion, omega: np.ndarray) -> sp.csr_matrix:
    """Stiffness assembled directly from ``a(., omega)``."""
    omega = np.asarray(omega, dtype=float)
    coefficient = lambda x: diff.evaluate(x, omega[None, :])[0]
    return space.restrict(_assemble_stiffness(space.mesh, _element_average(space.mesh, coefficient)))


def as_field(space: FeSpace, field) -> np.ndarray:
    """Accept a ``(dof, N)`` array or a sequence of FeFunctions."""
    if isinstance(field, np.ndarray):
        arr = field if field.ndim == 2 else field[:, None]
    else:
        arr = np.stack([f.coeffs for f in field], axis=1)
    if arr.shape[0] != space.dof_count:
        raise ConfigError(f"field has {arr.shape[0]} rows, space has {space.dof_count} dofs")
    return arr


def _weighted_quadratic(matrix, mu: DiscreteMeasure, field: np.ndarray) -> float:
    values = np.einsum("ik,ik->k", field, matrix @ field)
    if values.shape[0] == 1:
        return float(values[0])
    return float(mu.weights @ values)


def norm_H(space: FeSpace, mu: DiscreteMeasure, field) -> float:
    field = as_field(space, field)
    return float(np.sqrt(max(_weighted_quadratic(space.mass, mu, field), 0.0)))


def norm_V(space: FeSpace, mu: DiscreteMeasure, field) -> float:
    field = as_field(space, field)
    return float(np.sqrt(max(_weighted_quadratic(space.stiff_laplace, mu, field), 0.0)))


def energy_inner(ops: OperatorMatrices, mu: DiscreteMeasure, field: np.ndarray) -> float:
    """``E[u^T A(omega) u]`` for a ``(dof, N)`` field."""
    products = np.einsum("ik,ik->k", field, ops.apply_full(field, mu.points))
    return float(mu.weights @ products)


def norm_energy(space: FeSpace, mu: DiscreteMeasure, diff: AffineDiffusion, field) -> float:
    field = as_field(space, field)
    if field.shape[1] != mu.size:
        field = np.broadcast_to(field, (field.shape[0], mu.size))
    return float(np.sqrt(max(energy_inner(assemble(space, diff), mu, field), 0.0)))


def sample_bounds(space: FeSpace, mu: DiscreteMeasure, diff: AffineDiffusion) -> tuple[float, float]:
    values = diff.evaluate(space.mesh.quadrature_nodes, mu.points)
    return float(values.min()), float(values.max())


def laplace_spectrum(space: FeSpace) -> tuple[float, float]:
    """Smallest and largest eigenvalues of ``(stiff_laplace, mass)``."""
    K, Mm = space.stiff_laplace, space.mass
    try:
        if space.dof_count <= DENSE_EIG_LIMIT:
            eig = sla.eigh(K.toarray(), Mm.toarray(), eigvals_only=True)
            return float(eig[0]), float(eig[-1])
        lam_max = spla.eigsh(K, k=1, M=Mm, which="LA", return_eigenvectors=False)[0]
        lam_min = spla.eigsh(K, k=1, M=Mm, sigma=0.0, which="LM", return_eigenvectors=False)[0]
        return float(lam_min), float(lam_max)
    except (sla.LinAlgError, spla.ArpackNoConvergence) as e:
        raise EigensolveError(f"generalized eigensolve failed: {e}") from e


def estimate_constants(space: FeSpace, mu: DiscreteMeasure, diff: AffineDiffusion) -> ConstantsReport:
    lam_min, lam_max = laplace_spectrum(space)
    h = space.h
    C_I = h * np.sqrt(lam_max)

    nodes = space.mesh.quadrature_nodes
    a = diff.evaluate(nodes, mu.points)
    a_min, a_max = float(a.min()), float(a.max())
    if a_min <= 0.0:
        raise ConfigError(f"diffusion coefficient is not uniformly positive: a_min = {a_min:.4g}")
    a_bar = diff.mean_field(nodes)
    C_det = min(1.0, float((a_bar[None] / a).min()))

    K_explicit = 2.0 / (C_I ** 2 * a_max)
    logger.info(
        f"Constants on n={space.mesh.n_per_side}: C_I={C_I:.4f}, a in [{a_min:.4f}, {a_max:.4f}], "
        f"C_det={C_det:.4f}, K_explicit={K_explicit:.4f}"
    )
    envelope = diff.envelope or (None, None)
    return ConstantsReport(
        n_per_side=space.mesh.n_per_side,
        h=h,
        C_I=float(C_I),
        C_B=a_max,
        C_L=a_min,
        C_P=float(1.0 / np.sqrt(lam_min)),
        C_det=C_det,
        K_explicit=float(K_explicit),
        laplace_lambda_min=lam_min,
        laplace_lambda_max=lam_max,
        a_min_envelope=envelope[0],
        a_max_envelope=envelope[1],
    )
