"""One-step maps for the random heat equation.

``step`` advances a DLR state with the staggered scheme: mean, then the
deterministic modes, then the stochastic modes projected with the freshly
computed deterministic modes, then reorthonormalization. The operator is
evaluated explicitly, semi-implicitly (mean part implicit) or implicitly
(Picard iteration on the stochastic part).
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional

import numpy as np
import scipy.linalg as sla

from ..config import settings
from ..core.exceptions import (
    BlowUpError,
    ConfigError,
    ConvergenceError,
    FactorizationError,
    InconsistentSystemError,
)
from ..models.requests import ForcingRule, ProjectionMode, Scheme, SchemeConfig
from .dlr_core import DlrState, effective_rank, reconstruct, reorthonormalize
from .fem import AffineDiffusion, FeSpace, OperatorMatrices, _factorize, assemble, norm_H
from .stochastic import DiscreteMeasure, StochasticBasis, center_rows, project_rows_complement

logger = logging.getLogger(__name__)

Forcing = Callable[[float, int], np.ndarray]


@dataclass(frozen=True, eq=False)
class HeatModel:
    """Discrete random heat problem.

    ``forcing(t, k)`` returns the load vector ``<f(t, omega_k), phi_i>`` on the
    interior dofs; ``None`` means no forcing.
    """

    space: FeSpace
    mu: DiscreteMeasure
    diff: AffineDiffusion
    forcing: Optional[Forcing] = None
    _full_tensor_lu: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mu.dim < self.diff.M:
            raise ConfigError(
                f"coefficient has {self.diff.M} stochastic terms but the measure lives in R^{self.mu.dim}"
            )

    @cached_property
    def ops(self) -> OperatorMatrices:
        return assemble(self.space, self.diff)

    def load(self, t: float) -> Optional[np.ndarray]:
        if self.forcing is None:
            return None
        return np.stack([self.forcing(t, k) for k in range(self.mu.size)], axis=1)


@dataclass(frozen=True)
class StochasticUpdate:
    Y_tilde: np.ndarray
    rank_deficient: bool
    kernel: np.ndarray
    kernel_residual: float
    consistency_residual: float


@dataclass(frozen=True)
class StepDiagnostics:
    U_tilde: np.ndarray
    Y_tilde: np.ndarray
    Y_old: np.ndarray
    system_matrix: np.ndarray
    gram_min_eig: float
    effective_rank: int
    rank_deficient: bool
    kernel_residual: float
    consistency_residual: float
    fp_iterations: Optional[int] = None
    fp_history: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class FullTensorState:
    values: np.ndarray
    time: float = 0.0

    @classmethod
    def from_dlr(cls, state: DlrState) -> "FullTensorState":
        return cls(reconstruct(state), state.time)


@dataclass(frozen=True)
class _RawUpdate:
    mean: np.ndarray
    U_tilde: np.ndarray
    Y_tilde: np.ndarray
    B: np.ndarray
    projector: np.ndarray
    update: StochasticUpdate

    @property
    def reconstruction(self) -> np.ndarray:
        return self.mean[:, None] + self.U_tilde @ self.Y_tilde.T


def solve_stochastic_update(
    B: np.ndarray,
    rhs: np.ndarray,
    Y_n: np.ndarray | StochasticBasis,
    rank_tol_factor: float = np.finfo(float).eps,
    symmetric: bool = True,
) -> StochasticUpdate:
    """Solve ``B (Y_tilde - Y_n)^T = rhs`` for all samples at once.

    Full rank: one Cholesky factorization (LU when ``symmetric`` is False)
    shared by every sample. When the smallest eigenvalue, or singular value
    for a nonsymmetric ``B``, falls below ``eps * sigma_1 * R`` the
    minimal-norm solution is taken through the SVD pseudoinverse, so the
    increment has no component in the numerical kernel of ``B``.
    """
    if isinstance(Y_n, StochasticBasis):
        Y_n = Y_n.values
    if symmetric:
        B = 0.5 * (B + B.T)
    R = B.shape[0]
    if not (np.isfinite(B).all() and np.isfinite(rhs).all()):
        raise BlowUpError("non-finite entries in the stochastic system")

    if symmetric:
        eig = np.linalg.eigvalsh(B)
        top, bottom = max(eig[-1], 0.0), eig[0]
    else:
        sv = sla.svdvals(B)
        top, bottom = sv[0], sv[-1]
    threshold = rank_tol_factor * top * R

    if top > 0.0 and bottom > threshold:
        try:
            if symmetric:
                increment = sla.cho_solve(sla.cho_factor(B), rhs)
            else:
                increment = sla.lu_solve(sla.lu_factor(B, check_finite=False), rhs)
        except sla.LinAlgError as e:
            raise FactorizationError(f"factorization of the stochastic system failed: {e}") from e
        return StochasticUpdate(Y_n + increment.T, False, np.zeros((R, 0)), 0.0, 0.0)

    left, s, right_t = sla.svd(B)
    keep = s > threshold if top > 0.0 else np.zeros(R, dtype=bool)
    increment = right_t[keep].T @ ((left[:, keep].T @ rhs) / s[keep][:, None])
    kernel = right_t[~keep].T

    rhs_norm = np.linalg.norm(rhs)
    consistency = np.linalg.norm(B @ increment - rhs) / rhs_norm if rhs_norm > 0.0 else 0.0
    if consistency > settings.consistency_tol:
        raise InconsistentSystemError(
            f"right-hand side leaves the range of the stochastic system (relative residual {consistency:.3e})",
            residual=float(consistency),
        )
    kernel_residual = float(np.abs(kernel.T @ increment).max(initial=0.0))
    logger.debug(f"Rank-deficient stochastic update: kernel dimension {kernel.shape[1]} of {R}")
    return StochasticUpdate(Y_n + increment.T, True, kernel, kernel_residual, float(consistency))


def _force_time(cfg: SchemeConfig, t: float) -> float:
    if cfg.name == Scheme.EXPLICIT or cfg.forcing_rule == ForcingRule.LEFT:
        return t
    return t + cfg.dt


def _staggered_update(
    state: DlrState,
    model: HeatModel,
    cfg: SchemeConfig,
    frozen: np.ndarray,
    load: Optional[np.ndarray],
) -> _RawUpdate:
    """Mean, deterministic modes and stochastic modes for one step.

    ``frozen`` is the field at which the operator is evaluated explicitly:
    the whole operator for the explicit scheme, only its zero-mean part
    otherwise.
    """
    ops = model.ops
    mu = model.mu
    lam = mu.weights
    dt = cfg.dt
    mass = ops.mass
    Y = state.Y

    if cfg.name == Scheme.EXPLICIT:
        op = ops.apply_full(frozen, mu.points)
        solver = ops.mass_lu
    else:
        op = ops.apply_stochastic(frozen, mu.points)
        solver = ops.shifted_lu(dt)
    residual = op if load is None else op - load

    mean = solver.solve(mass @ state.mean - dt * (residual @ lam))
    U_tilde = solver.solve(mass @ state.U - dt * (residual @ (lam[:, None] * Y)))
    if U_tilde.ndim == 1:
        U_tilde = U_tilde[:, None]

    # test functions P w with w orthogonal to Y^n, trial increment always along U_tilde
    gauss_seidel = cfg.projection_mode == ProjectionMode.GAUSS_SEIDEL
    P = U_tilde if gauss_seidel else state.U
    trial = mass @ U_tilde
    if cfg.name != Scheme.EXPLICIT:
        trial = trial + dt * (ops.stiff_mean @ U_tilde)
    B = P.T @ trial
    G = project_rows_complement(mu, Y, center_rows(mu, P.T @ residual))
    update = solve_stochastic_update(B, -dt * G, Y, cfg.rank_tol_factor, symmetric=gauss_seidel)
    return _RawUpdate(mean, U_tilde, update.Y_tilde, B, P, update)


def _implicit_update(state: DlrState, model: HeatModel, cfg: SchemeConfig, load) -> tuple[_RawUpdate, List[float]]:
    """Picard iteration: freeze ``u^{n+1}`` in the stochastic operator part."""
    mu = model.mu
    space = model.space
    frozen = reconstruct(state)
    history: List[float] = []
    fp = cfg.implicit_fp
    for iteration in range(1, fp.max_iters + 1):
        raw = _staggered_update(state, model, cfg, frozen, load)
        candidate = raw.reconstruction
        if not np.isfinite(candidate).all():
            raise BlowUpError(f"non-finite iterate in the implicit fixed point at iteration {iteration}")
        change = norm_H(space, mu, candidate - frozen)
        history.append(change)
        frozen = candidate
        if change <= fp.tol:
            logger.debug(f"Implicit fixed point converged in {iteration} iterations")
            return raw, history
    raise ConvergenceError(
        f"implicit fixed point did not converge in {fp.max_iters} iterations "
        f"(last change {history[-1]:.3e})",
        history=history,
    )


def step(state: DlrState, model: HeatModel, cfg: SchemeConfig) -> DlrState:
    """Advance ``state`` by ``cfg.dt``; the result carries ``StepDiagnostics``."""
    if state.Y.shape[0] != model.mu.size or state.mean.shape[0] != model.space.dof_count:
        raise ConfigError("state does not match the model's space and measure")
    if not state.is_finite():
        raise BlowUpError(f"non-finite state at t={state.time:.6g}")

    load = model.load(_force_time(cfg, state.time))
    history: List[float] = []
    if cfg.name == Scheme.IMPLICIT:
        raw, history = _implicit_update(state, model, cfg, load)
    else:
        raw = _staggered_update(state, model, cfg, reconstruct(state), load)

    if not (np.isfinite(raw.mean).all() and np.isfinite(raw.U_tilde).all() and np.isfinite(raw.Y_tilde).all()):
        raise BlowUpError(f"non-finite values after the step from t={state.time:.6g}")

    new = reorthonormalize(model.mu, raw.mean, raw.U_tilde, raw.Y_tilde, time=state.time + cfg.dt)
    gram = raw.projector.T @ (model.ops.mass @ raw.projector)
    rank, min_eig = effective_rank(gram, cfg.rank_tol_factor)
    diagnostics = StepDiagnostics(
        U_tilde=raw.U_tilde,
        Y_tilde=raw.Y_tilde,
        Y_old=state.Y,
        system_matrix=raw.B,
        gram_min_eig=min_eig,
        effective_rank=rank,
        rank_deficient=raw.update.rank_deficient,
        kernel_residual=raw.update.kernel_residual,
        consistency_residual=raw.update.consistency_residual,
        fp_iterations=len(history) if cfg.name == Scheme.IMPLICIT else None,
        fp_history=history,
    )
    return DlrState(
        mean=new.mean,
        U=new.U,
        Y=new.Y,
        time=new.time,
        rank_deficient=raw.update.rank_deficient or new.rank_deficient,
        diagnostics=diagnostics,
    )


def full_tensor_step(full: FullTensorState, model: HeatModel, dt: float, theta: float = 1.0) -> FullTensorState:
    """Theta scheme applied sample by sample with each sample's own stiffness."""
    if dt <= 0.0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if not 0.0 <= theta <= 1.0:
        raise ConfigError(f"theta must lie in [0, 1], got {theta}")
    ops = model.ops
    mu = model.mu
    key = (dt, theta)
    if key not in model._full_tensor_lu:
        model._full_tensor_lu[key] = [
            _factorize(ops.mass + theta * dt * ops.stiffness_at(mu.points[k]), f"sample {k} system")
            for k in range(mu.size)
        ]
    solvers = model._full_tensor_lu[key]

    rhs = ops.mass @ full.values
    if theta < 1.0:
        rhs = rhs - (1.0 - theta) * dt * ops.apply_full(full.values, mu.points)
    if model.forcing is not None:
        rhs = rhs + dt * (theta * model.load(full.time + dt) + (1.0 - theta) * model.load(full.time))
    values = np.column_stack([solvers[k].solve(rhs[:, k]) for k in range(mu.size)])
    return FullTensorState(values, full.time + dt)
