import logging
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..config import settings
from ..models.requests import ExperimentConfig, MeasureConfig
from .dlr_core import DlrState, kl_initialize
from .fem import AffineDiffusion, FeSpace, build_space
from .integrators import HeatModel
from .stochastic import DiscreteMeasure, gauss_legendre_measure, monte_carlo_measure

logger = logging.getLogger(__name__)

# Seed used for Monte Carlo measures whose config omits one
DEFAULT_MC_SEED = 2017


def _cosine_term(m: int):
    scale = 1.0 / (m ** 2 * np.pi ** 2)

    def term(x: np.ndarray) -> np.ndarray:
        return scale * (np.cos(2 * np.pi * m * x[..., 0]) + np.cos(2 * np.pi * m * x[..., 1]))

    return term


def heat_coefficient(a0: float, M: int) -> AffineDiffusion:
    """``a(x, xi) = a0 + sum_m (cos(2 pi m x1) + cos(2 pi m x2)) / (m pi)^2 * xi_m``."""
    spread = sum(2.0 / (m ** 2 * np.pi ** 2) for m in range(1, M + 1))
    return AffineDiffusion(
        mean_field=lambda x: np.full(x.shape[:-1], float(a0)),
        terms=[_cosine_term(m) for m in range(1, M + 1)],
        envelope=(a0 - spread, a0 + spread),
    )


def initial_condition(x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Initial temperature at nodes ``x`` for every sample row of ``xi``, shape ``(P, N)``."""
    def mode(k: int) -> np.ndarray:
        return np.sin(k * np.pi * x[:, 0]) * np.sin(k * np.pi * x[:, 1])

    xi1 = xi[:, 0]
    xi2 = xi[:, 1] if xi.shape[1] > 1 else np.zeros_like(xi1)
    return (
        10.0 * mode(1)[:, None]
        + 2.0 * np.outer(mode(2), xi1)
        + 2.0 * np.outer(mode(4), xi2)
        + 2.0 * np.outer(mode(6), xi1 ** 2)
    )


def initial_samples(space: FeSpace, mu: DiscreteMeasure) -> np.ndarray:
    return initial_condition(space.dof_coordinates, mu.points)


def build_measure(measure: MeasureConfig, M: int) -> DiscreteMeasure:
    if measure.type == "gl":
        return gauss_legendre_measure(M, measure.n)
    seed = DEFAULT_MC_SEED if measure.seed is None else measure.seed
    return monte_carlo_measure(M, measure.N, seed)


@lru_cache(maxsize=16)
def _cached_model(a0: float, M: int, measure_key: tuple, n_per_side: int) -> HeatModel:
    measure = MeasureConfig(type=measure_key[0], n=measure_key[1], N=measure_key[2], seed=measure_key[3])
    mu = build_measure(measure, M)
    space = build_space(n_per_side)
    logger.info(
        f"Built heat model: a0={a0}, M={M}, {measure.type} measure with {mu.size} points, "
        f"n_per_side={n_per_side} ({space.dof_count} dofs)"
    )
    return HeatModel(space=space, mu=mu, diff=heat_coefficient(a0, M))


def build_model(cfg: ExperimentConfig) -> HeatModel:
    """Heat model of a config; identical configs share one model and its factorizations."""
    m = cfg.model.measure
    return _cached_model(cfg.model.a0, cfg.model.M, (m.type, m.n, m.N, m.seed), cfg.space.n_per_side)


def build_initial_state(cfg: ExperimentConfig, model: HeatModel) -> DlrState:
    return kl_initialize(model.space, model.mu, initial_samples(model.space, model.mu), cfg.dlr.R)


async def initialize_services():
    """Prepare the output directory and log the numerical settings."""
    logger.info("Initializing DLR heat solver services...")
    Path(settings.output_dir).mkdir(parents=True, exist_ok=True)
    logger.info(f"Output directory: {settings.output_dir}")
    logger.info(
        f"Tolerances: tol_ortho={settings.tol_ortho:.1e}, consistency_tol={settings.consistency_tol:.1e}, "
        f"monotone_slack={settings.monotone_slack:.1e}"
    )
    logger.info("All services initialized successfully!")
