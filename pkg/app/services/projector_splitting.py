"""Projector-splitting integrator on the DDO form ``mean + U S V^T``.

One step is a K-S-L sweep: update ``K = U S`` with ``V`` fixed, factor it,
run the S-step backwards, update ``L = V S^T`` with the new ``U`` fixed and
factor again. With full-rank factors it reproduces ``integrators.step``.
"""

import logging

import numpy as np
import scipy.linalg as sla

from ..core.exceptions import BlowUpError, ConfigError
from ..models.requests import Scheme, SchemeConfig
from .dlr_core import DdoState, h_orthonormal_qr, reconstruct, weighted_qr
from .integrators import HeatModel, _force_time
from .stochastic import center_rows

logger = logging.getLogger(__name__)


def projector_splitting_step(d: DdoState, model: HeatModel, cfg: SchemeConfig) -> DdoState:
    if cfg.name == Scheme.IMPLICIT:
        raise ConfigError("projector splitting supports the explicit and semi_implicit schemes only")
    if not (np.isfinite(d.mean).all() and np.isfinite(d.S).all()):
        raise BlowUpError(f"non-finite DDO state at t={d.time:.6g}")

    ops = model.ops
    mu = model.mu
    lam = mu.weights
    dt = cfg.dt
    mass = ops.mass
    V0 = d.V_on
    frozen = reconstruct(d)

    if cfg.name == Scheme.EXPLICIT:
        op = ops.apply_full(frozen, mu.points)
        solver = ops.mass_lu
    else:
        op = ops.apply_stochastic(frozen, mu.points)
        solver = ops.shifted_lu(dt)
    load = model.load(_force_time(cfg, d.time))
    residual = op if load is None else op - load

    # mean
    mean = solver.solve(mass @ d.mean - dt * (residual @ lam))

    # K-step
    K1 = solver.solve(mass @ (d.U_on @ d.S) - dt * (residual @ (lam[:, None] * V0)))
    if K1.ndim == 1:
        K1 = K1[:, None]
    U1, S_hat = h_orthonormal_qr(model.space, K1)

    # S-step, backwards in time
    projected = U1.T @ residual
    coupling = projected @ (lam[:, None] * V0)
    g_star = center_rows(mu, projected)
    if cfg.name == Scheme.EXPLICIT:
        S_tilde = S_hat + dt * coupling
        L1_t = S_tilde @ V0.T - dt * g_star
    else:
        stiff_reduced = U1.T @ (ops.stiff_mean @ U1)
        S_tilde = S_hat + dt * (U1.T @ (ops.stiff_mean @ K1) + coupling)
        lhs = np.eye(d.rank) + dt * stiff_reduced
        L1_t = sla.solve(0.5 * (lhs + lhs.T), S_tilde @ V0.T - dt * g_star, assume_a="pos")

    # L-step factorization
    V1, T, deficient = weighted_qr(mu, L1_t.T)
    if deficient:
        logger.debug("Projector splitting met a rank-deficient L factor; completed V")
    result = DdoState(mean=mean, U_on=U1, S=T.T, V_on=V1, time=d.time + dt)
    if not (np.isfinite(result.S).all() and np.isfinite(result.mean).all()):
        raise BlowUpError(f"non-finite values after the splitting step from t={d.time:.6g}")
    return result
