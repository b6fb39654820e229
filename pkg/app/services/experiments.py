import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..config import settings
from ..core.exceptions import BlowUpError, ConfigError, ConvergenceError, NumericalError
from ..models.requests import ExperimentConfig, ProjectionMode, Scheme
from ..models.responses import (
    ConstantsReport,
    NormTrace,
    NormTraceRow,
    ProjectionComparison,
    ProjectionRun,
    RunStatus,
    SchemeComparison,
    SchemeComparisonRow,
    SweepCell,
    SweepReport,
)
from .dlr_core import DlrState, effective_rank, gram, reconstruct, state_norms, to_ddo
from .fem import energy_inner, estimate_constants
from .helpers import calculate_processing_time, is_non_increasing, relative_difference
from .initialization import build_initial_state, build_model
from .integrators import HeatModel, step
from .projector_splitting import projector_splitting_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecayResult:
    trace: NormTrace
    state: DlrState


def _trace_row(n: int, state: DlrState, model: HeatModel, rank_tol_factor: float) -> NormTraceRow:
    energy, h_norm, v_norm = state_norms(state, model.space, model.mu, model.diff)
    diagnostics = state.diagnostics
    if diagnostics is None:
        rank, min_eig = effective_rank(gram(model.space, state.U), rank_tol_factor)
        fp_iters = None
    else:
        rank, min_eig = diagnostics.effective_rank, diagnostics.gram_min_eig
        fp_iters = diagnostics.fp_iterations
    return NormTraceRow(
        step=n,
        time=state.time,
        energy_norm=energy,
        h_norm=h_norm,
        v_norm=v_norm,
        min_singular_value_of_gram=min_eig,
        effective_rank=rank,
        fp_iters=fp_iters,
    )


def integrate(
    cfg: ExperimentConfig,
    model: Optional[HeatModel] = None,
    initial: Optional[DlrState] = None,
) -> DecayResult:
    """Step until the energy decays below ``stop_energy``, blows up, or a guard fires."""
    start_time = time.time()
    model = model or build_model(cfg)
    state = initial if initial is not None else build_initial_state(cfg, model)
    scheme = cfg.scheme
    run = cfg.run

    trace = NormTrace(
        scheme=scheme.name.value,
        projection_mode=scheme.projection_mode.value,
        dt=scheme.dt,
        n_per_side=model.space.mesh.n_per_side,
        h=model.space.h,
        rank=state.rank,
    )
    logger.info(
        f"Starting {scheme.name.value} run: dt={scheme.dt:.6g}, h={model.space.h:.4f}, R={state.rank}, "
        f"projection={scheme.projection_mode.value}"
    )

    def classify(row: NormTraceRow) -> Optional[RunStatus]:
        if not np.isfinite(row.energy_norm) or row.energy_norm >= run.blowup_energy:
            return RunStatus.BLEW_UP
        if row.energy_norm <= run.stop_energy:
            return RunStatus.DECAYED
        return None

    row = _trace_row(0, state, model, scheme.rank_tol_factor)
    trace.rows.append(row)
    status = classify(row)
    reason = None

    n = 0
    while status is None:
        if n >= run.max_steps:
            status, reason = RunStatus.INCONCLUSIVE, f"max_steps={run.max_steps} reached"
            break
        if time.time() - start_time > settings.wall_clock_limit_s:
            status, reason = RunStatus.INCONCLUSIVE, f"wall-clock limit {settings.wall_clock_limit_s}s reached"
            break
        n += 1
        try:
            state = step(state, model, scheme)
        except BlowUpError as e:
            status, reason = RunStatus.BLEW_UP, str(e)
            break
        except ConvergenceError as e:
            logger.warning(f"Step {n}: {e}")
            status, reason = RunStatus.INCONCLUSIVE, str(e)
            break

        row = _trace_row(n, state, model, scheme.rank_tol_factor)
        trace.rows.append(row)
        status = classify(row)
        if n % settings.log_every == 0:
            logger.debug(f"Step {n}: t={state.time:.6g}, energy={row.energy_norm:.6e}")

    trace.status = status
    trace.reason = reason
    trace.monotone_energy = is_non_increasing(trace.energies)
    trace.monotone_h = is_non_increasing([r.h_norm for r in trace.rows])
    trace.wall_time_ms = calculate_processing_time(start_time)

    log = logger.warning if status == RunStatus.BLEW_UP else logger.info
    log(
        f"Run finished after {n} steps: {status.value}, energy={trace.final_energy:.3e}, "
        f"monotone={trace.monotone_energy}"
    )
    return DecayResult(trace, state)


def run_decay(cfg: ExperimentConfig, model: Optional[HeatModel] = None, initial: Optional[DlrState] = None) -> NormTrace:
    return integrate(cfg, model, initial).trace


def compute_constants(cfg: ExperimentConfig) -> ConstantsReport:
    model = build_model(cfg)
    return estimate_constants(model.space, model.mu, model.diff)


def _fit_threshold(cells: List[SweepCell]) -> tuple[Optional[float], bool, bool]:
    """Largest decayed ratio with no failed cell at or below it, above-grid flag, separation flag."""
    decayed = sorted(c.ratio for c in cells if c.status == RunStatus.DECAYED)
    failed = sorted(c.ratio for c in cells if c.status != RunStatus.DECAYED)
    blown = sorted(c.ratio for c in cells if c.status == RunStatus.BLEW_UP)
    separated = not decayed or not blown or decayed[-1] < blown[0]

    if not decayed:
        return None, False, separated
    if not failed:
        return decayed[-1], True, separated
    below = [r for r in decayed if r < failed[0]]
    return (below[-1] if below else None), False, separated


def _run_cell(base: ExperimentConfig, n_per_side: int, dt: float) -> SweepCell:
    h = np.sqrt(2.0) / n_per_side
    try:
        cfg = base.with_updates(space={"n_per_side": n_per_side}, scheme={"dt": dt})
        trace = run_decay(cfg)
        return SweepCell(
            n_per_side=n_per_side,
            h=h,
            dt=dt,
            ratio=dt / h ** 2,
            status=trace.status,
            steps=trace.rows[-1].step,
            final_energy=trace.final_energy,
            reason=trace.reason,
        )
    except NumericalError as e:
        logger.error(f"Cell n={n_per_side}, dt={dt:.6g} failed: {e}")
        return SweepCell(
            n_per_side=n_per_side, h=h, dt=dt, ratio=dt / h ** 2,
            status=RunStatus.INCONCLUSIVE, steps=0, reason=str(e),
        )


def stability_sweep(
    base: ExperimentConfig,
    n_per_side_list: Sequence[int],
    dt_list: Optional[Sequence[float]] = None,
    ratio_list: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
) -> SweepReport:
    """Classify a grid of (h, dt) cells; ``h = sqrt(2)/n_per_side``.

    Time steps are given either absolutely or as multiples of ``h^2``.
    """
    start_time = time.time()
    if not n_per_side_list:
        raise ConfigError("stability sweep needs at least one n_per_side")
    if bool(dt_list) == bool(ratio_list):
        raise ConfigError("stability sweep needs exactly one of dt_list or ratio_list")

    grid = []
    for n in n_per_side_list:
        h2 = 2.0 / n ** 2
        steps = dt_list if dt_list else [r * h2 for r in ratio_list]
        grid.extend((n, float(dt)) for dt in steps)

    workers = workers or settings.sweep_workers
    logger.info(f"Starting stability sweep over {len(grid)} cells with {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = executor.map(lambda cell: _run_cell(base, *cell), grid)
        cells = list(tqdm(results, total=len(grid), desc="sweep", disable=not settings.progress_bar))

    K_fit, above_grid, separated = _fit_threshold(cells)
    try:
        K_explicit = compute_constants(base).K_explicit
    except NumericalError as e:
        logger.warning(f"Could not estimate constants: {e}")
        K_explicit = None

    report = SweepReport(
        scheme=base.scheme.name.value,
        cells=cells,
        K_fit=K_fit,
        K_fit_above_grid=above_grid,
        separated=separated,
        K_explicit=K_explicit,
        processing_time_ms=calculate_processing_time(start_time),
    )
    logger.info(f"Sweep finished: K_fit={K_fit}, above_grid={above_grid}, separated={separated}")
    return report


def compare_schemes(cfg: ExperimentConfig, steps: int) -> SchemeComparison:
    """Run the staggered and the projector-splitting integrator from the same initial state."""
    model = build_model(cfg)
    state = build_initial_state(cfg, model)
    ddo = to_ddo(state, model.space)
    mass, weights = model.ops.mass, model.mu.weights
    comparison = SchemeComparison()

    for n in range(1, steps + 1):
        state = step(state, model, cfg.scheme)
        ddo = projector_splitting_step(ddo, model, cfg.scheme)
        F_staggered = reconstruct(state)
        F_splitting = reconstruct(ddo)
        comparison.rows.append(
            SchemeComparisonRow(
                step=n,
                time=state.time,
                relative_difference=relative_difference(F_staggered, F_splitting, mass, weights),
                energy_staggered=float(np.sqrt(max(energy_inner(model.ops, model.mu, F_staggered), 0.0))),
                energy_splitting=float(np.sqrt(max(energy_inner(model.ops, model.mu, F_splitting), 0.0))),
                min_singular_value_of_gram=state.diagnostics.gram_min_eig,
            )
        )

    if comparison.rows:
        comparison.max_relative_difference = max(r.relative_difference for r in comparison.rows)
        comparison.monotone_staggered = is_non_increasing([r.energy_staggered for r in comparison.rows])
        comparison.monotone_splitting = is_non_increasing([r.energy_splitting for r in comparison.rows])
    logger.info(
        f"Compared schemes over {steps} steps: max relative difference {comparison.max_relative_difference:.3e}"
    )
    return comparison


def compare_projection_modes(cfg: ExperimentConfig, dt_list: Sequence[float]) -> ProjectionComparison:
    if cfg.scheme.name != Scheme.SEMI_IMPLICIT:
        raise ConfigError("scheme.name must be semi_implicit to compare projection modes")
    comparison = ProjectionComparison()
    for dt in dt_list:
        for mode in (ProjectionMode.GAUSS_SEIDEL, ProjectionMode.FULLY_EXPLICIT):
            run_cfg = cfg.with_updates(scheme={"dt": dt, "projection_mode": mode})
            trace = run_decay(run_cfg)
            comparison.runs.append(
                ProjectionRun(projection_mode=mode.value, dt=dt, monotone=trace.monotone_energy, trace=trace)
            )
    return comparison
