"""Dynamically low-rank state ``u = mean + U Y^T`` and its certificates.

Shapes used throughout: ``mean`` is ``(dof,)``, ``U`` is ``(dof, R)`` with
deterministic modes as columns, ``Y`` is ``(N, R)`` with the values of the
stochastic modes at the measure points. Reconstructions are ``(dof, N)``.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from ..config import settings
from ..core.exceptions import ConfigError
from ..models.requests import Scheme
from .fem import AffineDiffusion, FeFunction, FeSpace, as_field, assemble, energy_inner, norm_H, norm_V
from .stochastic import DiscreteMeasure, StochasticBasis, orthonormal_completion

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DlrState:
    mean: np.ndarray
    U: np.ndarray
    Y: np.ndarray
    time: float = 0.0
    rank_deficient: bool = False
    diagnostics: Optional[Any] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.U.ndim != 2 or self.Y.ndim != 2 or self.U.shape[1] != self.Y.shape[1]:
            raise ConfigError(f"mode arrays disagree: U {self.U.shape}, Y {self.Y.shape}")
        if self.U.shape[0] != self.mean.shape[0]:
            raise ConfigError(f"U has {self.U.shape[0]} rows, mean has {self.mean.shape[0]}")

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def modes_det(self, space: FeSpace) -> list[FeFunction]:
        return [FeFunction(space, self.U[:, j].copy()) for j in range(self.rank)]

    def modes_stoch(self, mu: DiscreteMeasure) -> StochasticBasis:
        return StochasticBasis(self.Y, mu.measure_id)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.mean).all() and np.isfinite(self.U).all() and np.isfinite(self.Y).all())


@dataclass(frozen=True)
class DdoState:
    """``u = mean + U_on S V_on^T`` with ``U_on`` orthonormal in H."""

    mean: np.ndarray
    U_on: np.ndarray
    S: np.ndarray
    V_on: np.ndarray
    time: float = 0.0

    @property
    def rank(self) -> int:
        return self.S.shape[0]


@dataclass(frozen=True)
class DoResidual:
    do_condition: float
    biorthogonality: float
    mean_drift: float

    @property
    def worst(self) -> float:
        return max(self.do_condition, self.biorthogonality, self.mean_drift)


@dataclass(frozen=True)
class VariationalResidual:
    absolute: float
    scale: float

    @property
    def relative(self) -> float:
        return self.absolute / self.scale if self.scale > 0.0 else self.absolute


def reconstruct(state: DlrState | DdoState) -> np.ndarray:
    if isinstance(state, DdoState):
        return state.mean[:, None] + state.U_on @ state.S @ state.V_on.T
    return state.mean[:, None] + state.U @ state.Y.T


def evaluate(state: DlrState, k: int, space: Optional[FeSpace] = None):
    """Sample ``k`` of the represented field, as FeFunction when ``space`` is given."""
    if not 0 <= k < state.Y.shape[0]:
        raise IndexError(f"sample index {k} out of range for {state.Y.shape[0]} points")
    coeffs = state.mean + state.U @ state.Y[k]
    return FeFunction(space, coeffs) if space is not None else coeffs


def gram(space: FeSpace, U) -> np.ndarray:
    U = as_field(space, U)
    G = U.T @ (space.mass @ U)
    return 0.5 * (G + G.T)


def effective_rank(matrix: np.ndarray, rank_tol_factor: float) -> tuple[int, float]:
    """Numerical rank under the threshold ``eps * sigma_1 * R`` and the smallest eigenvalue."""
    R = matrix.shape[0]
    if R == 0:
        return 0, 0.0
    eig = np.linalg.eigvalsh(matrix)
    top = max(eig[-1], 0.0)
    return int(np.sum(eig > rank_tol_factor * top * R)), float(max(eig[0], 0.0))


def state_norms(state: DlrState, space: FeSpace, mu: DiscreteMeasure, diff: AffineDiffusion) -> tuple[float, float, float]:
    """Energy, H and V norms of a state in L2 of the discrete measure."""
    F = reconstruct(state)
    ops = assemble(space, diff)
    energy = float(np.sqrt(max(energy_inner(ops, mu, F), 0.0)))
    return energy, norm_H(space, mu, F), norm_V(space, mu, F)


def _fix_qr_signs(Q: np.ndarray, Rm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    signs = np.where(np.diag(Rm) < 0.0, -1.0, 1.0)
    return Q * signs[None, :], Rm * signs[:, None]


def _numerical_rank(Rm: np.ndarray, rows: int) -> int:
    diag = np.abs(np.diag(Rm))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    tol = max(rows, Rm.shape[1]) * np.finfo(float).eps * diag[0]
    return int(np.sum(diag > tol))


def weighted_qr(mu: DiscreteMeasure, L: np.ndarray, seed: Optional[int] = None) -> tuple[np.ndarray, np.ndarray, bool]:
    """``L = V T`` with ``V`` orthonormal and zero-mean under ``mu``.

    ``L`` must have zero-mean columns. Pivoted QR of ``sqrt(lambda) L``;
    columns beyond the numerical rank are replaced by a seeded zero-mean
    orthonormal completion and the matching rows of ``T`` are zeroed.
    """
    R = L.shape[1]
    sqrt_w = mu.sqrt_weights
    Q, Rm, piv = sla.qr(sqrt_w[:, None] * L, mode="economic", pivoting=True)
    Q, Rm = _fix_qr_signs(Q, Rm)
    r = _numerical_rank(Rm, L.shape[0])
    deficient = r < R
    if deficient:
        kept = Q[:, :r] / sqrt_w[:, None]
        Q = Q.copy()
        Q[:, r:] = sqrt_w[:, None] * orthonormal_completion(mu, kept, R - r, seed)
        Rm = Rm.copy()
        Rm[r:, :] = 0.0
    T = np.zeros_like(Rm)
    T[:, piv] = Rm
    return Q / sqrt_w[:, None], T, deficient


def h_orthonormal_qr(space: FeSpace, K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``K = U_on S`` with ``U_on`` orthonormal in the H inner product (pivoted QR)."""
    C = space.mass_cholesky
    Q, Rm, piv = sla.qr(C @ K, mode="economic", pivoting=True)
    Q, Rm = _fix_qr_signs(Q, Rm)
    S = np.zeros_like(Rm)
    S[:, piv] = Rm
    U_on = sla.solve_triangular(C, Q, lower=False)
    return U_on, S


def reorthonormalize(
    mu: DiscreteMeasure,
    mean: np.ndarray,
    U_tilde: np.ndarray,
    Y_tilde: np.ndarray,
    time: float = 0.0,
) -> DlrState:
    """Rotate ``(U_tilde, Y_tilde)`` so that ``Y`` is orthonormal; the product is unchanged."""
    Y, T, deficient = weighted_qr(mu, Y_tilde)
    U = U_tilde @ T.T
    if deficient:
        logger.warning("Stochastic modes became linearly dependent; completed the basis")
    return DlrState(mean=mean, U=U, Y=Y, time=time, rank_deficient=deficient)


def kl_initialize(space: FeSpace, mu: DiscreteMeasure, u0_samples, R: int, time: float = 0.0) -> DlrState:
    """Truncated Karhunen-Loeve expansion of a sampled field in H x L2(mu)."""
    F = as_field(space, u0_samples)
    if F.shape[1] != mu.size:
        raise ConfigError(f"u0 has {F.shape[1]} samples, measure has {mu.size} points")
    if R >= mu.size or R > space.dof_count:
        raise ConfigError(
            f"rank R={R} needs R < {mu.size} points and R <= {space.dof_count} dofs"
        )

    mean = F @ mu.weights
    fluct = F - mean[:, None]
    sqrt_w = mu.sqrt_weights
    C = space.mass_cholesky
    X = (C @ fluct) * sqrt_w[None, :]
    P, sigma, Qt = sla.svd(X, full_matrices=False)

    # roundoff in the mean leaves a fluctuation of relative size eps
    field_scale = np.linalg.norm((C @ F) * sqrt_w[None, :])
    if sigma.size and sigma[0] > 0.0:
        tol = max(X.shape) * np.finfo(float).eps * max(sigma[0], field_scale)
        available = int(np.sum(sigma > tol))
    else:
        available = 0
    used = min(R, available)

    U = np.zeros((space.dof_count, R))
    Y = np.zeros((mu.size, R))
    U[:, :used] = sla.solve_triangular(C, P[:, :used] * sigma[:used], lower=False)
    Y[:, :used] = Qt[:used].T / sqrt_w[:, None]
    for i in range(used):
        j = np.argmax(np.abs(U[:, i]))
        if U[j, i] < 0.0:
            U[:, i] *= -1.0
            Y[:, i] *= -1.0

    deficient = used < R
    if deficient:
        Y[:, used:] = orthonormal_completion(mu, Y[:, :used], R - used)
        logger.info(f"Initial field has {available} nonzero KL modes; padded rank {R} with zero modes")

    tail = float(np.sqrt(np.sum(sigma[used:] ** 2)))
    logger.debug(f"KL initialization with R={R}: truncation error {tail:.3e}")
    return DlrState(mean=mean, U=U, Y=Y, time=time, rank_deficient=deficient)


def do_residual(mu: DiscreteMeasure, Y_old: np.ndarray | StochasticBasis, Y_tilde: np.ndarray | Sequence) -> DoResidual:
    """Discrete DO condition, bi-orthogonality and mean drift of a raw stochastic update."""
    if isinstance(Y_old, StochasticBasis):
        Y_old = Y_old.values
    if not isinstance(Y_tilde, np.ndarray):
        Y_tilde = np.stack([y.values for y in Y_tilde], axis=1)
    weighted_old = mu.weights[:, None] * Y_old
    cross = Y_tilde.T @ weighted_old
    R = Y_old.shape[1]
    do = np.max(np.abs((Y_tilde - Y_old).T @ weighted_old), initial=0.0)
    bi = np.max(np.abs(cross - np.eye(R)), initial=0.0)
    drift = np.max(np.abs(mu.weights @ Y_tilde), initial=0.0)
    return DoResidual(float(do), float(bi), float(drift))


def operator_term(ops, mu: DiscreteMeasure, scheme: Scheme, F_n: np.ndarray, F_np1: np.ndarray) -> np.ndarray:
    """``L(u^n, u^{n+1})`` for the operator-evaluation rule of ``scheme``."""
    if scheme == Scheme.EXPLICIT:
        return ops.apply_full(F_n, mu.points)
    if scheme == Scheme.SEMI_IMPLICIT:
        return ops.stiff_mean @ F_np1 + ops.apply_stochastic(F_n, mu.points)
    return ops.apply_full(F_np1, mu.points)


def variational_residual(
    mu: DiscreteMeasure,
    space: FeSpace,
    diff: AffineDiffusion,
    state_n: DlrState,
    state_np1: DlrState,
    U_tilde: np.ndarray,
    scheme: Scheme,
    dt: float,
    forcing: Optional[np.ndarray] = None,
) -> VariationalResidual:
    """Residual of the discrete variational formulation over a generating test set.

    Tests with deterministic hat functions, with ``phi_i Y_j^n`` and with
    ``U_tilde_j w`` for seeded zero-mean directions ``w`` orthogonal to ``Y^n``.
    ``forcing`` is the load matrix at the time selected by the forcing rule.
    """
    ops = assemble(space, diff)
    F_n = reconstruct(state_n)
    F_np1 = reconstruct(state_np1)

    rate = space.mass @ (F_np1 - F_n) / dt
    op = operator_term(ops, mu, scheme, F_n, F_np1)
    load = np.zeros_like(op) if forcing is None else forcing
    res = rate + op - load
    scale = max(np.abs(rate).max(initial=0.0), np.abs(op).max(initial=0.0), np.abs(load).max(initial=0.0))

    lam = mu.weights
    Y_n = state_n.Y
    R = Y_n.shape[1]
    checks = [np.abs(res @ lam).max(initial=0.0), np.abs(res @ (lam[:, None] * Y_n)).max(initial=0.0)]
    count = min(mu.size - 1 - R, 2 * R)
    if count > 0:
        W = orthonormal_completion(mu, Y_n, count, seed=settings.residual_seed)
        checks.append(np.abs(U_tilde.T @ res @ (lam[:, None] * W)).max(initial=0.0))
    return VariationalResidual(float(max(checks)), float(scale))


def to_ddo(state: DlrState, space: FeSpace) -> DdoState:
    """DDO form with ``V_on = Y``; ``S`` comes from an H-orthonormal QR of ``U``."""
    U_on, S = h_orthonormal_qr(space, state.U)
    return DdoState(mean=state.mean, U_on=U_on, S=S, V_on=state.Y, time=state.time)


def from_ddo(d: DdoState) -> DlrState:
    return DlrState(mean=d.mean, U=d.U_on @ d.S, Y=d.V_on, time=d.time)


def with_time(state: DlrState, time: float) -> DlrState:
    return replace(state, time=time)
