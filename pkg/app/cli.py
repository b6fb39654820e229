"""Command line entry point of the experiment harness.

Every subcommand reads a JSON ``ExperimentConfig`` and writes ``trace.csv``
and/or ``report.json`` into ``output.dir``. Exit codes: 0 on success, 2 on
a configuration error, 3 on a numerical failure.
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import click
import numpy as np
from pydantic import ValidationError

from .core.exceptions import ConfigError, NumericalError
from .core.logging import setup_logging
from .models.requests import ExperimentConfig
from .services.experiments import (
    compare_projection_modes,
    compare_schemes,
    compute_constants,
    integrate,
    stability_sweep,
)
from .services.initialization import build_model
from .services.reporting import TRACE_COLUMNS, save_rows_csv, write_json_report, write_trace_csv
from .services.snapshot import load_state, save_state

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def load_config(path: str) -> ExperimentConfig:
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"config file {config_path} does not exist")
    try:
        return ExperimentConfig.model_validate_json(config_path.read_text(encoding="utf-8"))
    except ValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) for err in e.errors())
        raise ConfigError(f"invalid config {config_path} (fields: {fields}): {e}") from e


def _output_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.output.dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(dir_okay=False), help="JSON experiment config"
)


@click.group()
@click.option("--log-level", default=None, help="Override LOG_LEVEL for this run")
def cli(log_level: Optional[str]):
    """Dynamical low-rank solver for the random heat equation."""
    setup_logging(log_level)


@cli.command()
@config_option
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None, help="Write the final state here")
@click.option("--initial-state", type=click.Path(dir_okay=False), default=None, help="Resume from a saved state")
def decay(config_path: str, checkpoint: Optional[str], initial_state: Optional[str]):
    """Integrate until the energy decays or the run blows up."""
    cfg = load_config(config_path)
    model = build_model(cfg)
    initial = None
    if initial_state:
        initial, space, mu = load_state(initial_state)
        same_measure = (
            mu.points.shape == model.mu.points.shape
            and np.allclose(mu.points, model.mu.points, rtol=0.0, atol=1e-14)
            and np.allclose(mu.weights, model.mu.weights, rtol=0.0, atol=1e-14)
        )
        if space.mesh.n_per_side != model.space.mesh.n_per_side or not same_measure:
            raise ConfigError(f"state {initial_state} was saved for a different mesh or measure")
        if initial.rank != cfg.dlr.R:
            raise ConfigError(f"state {initial_state} has rank {initial.rank}, config asks for dlr.R = {cfg.dlr.R}")

    result = integrate(cfg, model, initial)
    out = _output_dir(cfg)
    write_trace_csv(out / "trace.csv", result.trace)
    write_json_report(out / "report.json", result.trace.model_dump(mode="json", exclude={"rows"}))
    if checkpoint:
        save_state(Path(checkpoint), result.state, model.space, model.mu)
    click.echo(f"{result.trace.status.value}: final energy {result.trace.final_energy:.6e}")


@cli.command()
@config_option
@click.option("--n", "n_per_side", type=int, multiple=True, required=True, help="Cells per side, h = sqrt(2)/n")
@click.option("--dt", "dt_list", type=float, multiple=True, help="Absolute time step")
@click.option("--ratio", "ratio_list", type=float, multiple=True, help="Time step as a multiple of h^2")
@click.option("--workers", type=int, default=None)
def sweep(config_path: str, n_per_side: Sequence[int], dt_list: Sequence[float], ratio_list: Sequence[float], workers: Optional[int]):
    """Classify a grid of (h, dt) cells as decayed or blown up."""
    cfg = load_config(config_path)
    report = stability_sweep(cfg, list(n_per_side), list(dt_list) or None, list(ratio_list) or None, workers)
    out = _output_dir(cfg)
    columns = ["n_per_side", "h", "dt", "ratio", "status", "steps", "final_energy"]
    save_rows_csv(out / "trace.csv", (cell.model_dump(mode="json") for cell in report.cells), columns)
    write_json_report(out / "report.json", report)
    click.echo(f"K_fit={report.K_fit} (above grid: {report.K_fit_above_grid}), K_explicit={report.K_explicit}")


@cli.command("compare-schemes")
@config_option
@click.option("--steps", type=int, default=50, show_default=True)
def compare_schemes_command(config_path: str, steps: int):
    """Staggered scheme against projector splitting from one initial state."""
    cfg = load_config(config_path)
    comparison = compare_schemes(cfg, steps)
    out = _output_dir(cfg)
    columns = ["step", "time", "relative_difference", "energy_staggered", "energy_splitting", "min_singular_value_of_gram"]
    save_rows_csv(out / "trace.csv", (row.model_dump() for row in comparison.rows), columns)
    write_json_report(out / "report.json", comparison.model_dump(mode="json", exclude={"rows"}))
    click.echo(f"max relative difference {comparison.max_relative_difference:.3e}")


@cli.command("compare-projection")
@config_option
@click.option("--dt", "dt_list", type=float, multiple=True, required=True)
def compare_projection_command(config_path: str, dt_list: Sequence[float]):
    """Gauss-Seidel against fully explicit projection of the stochastic modes."""
    cfg = load_config(config_path)
    comparison = compare_projection_modes(cfg, list(dt_list))
    out = _output_dir(cfg)
    rows = [
        {"projection_mode": run.projection_mode, "dt": run.dt, **row.model_dump()}
        for run in comparison.runs
        for row in run.trace.rows
    ]
    save_rows_csv(out / "trace.csv", rows, ["projection_mode", "dt", *TRACE_COLUMNS])
    write_json_report(
        out / "report.json",
        {"runs": [run.model_dump(mode="json", exclude={"trace": {"rows"}}) for run in comparison.runs]},
    )
    for run in comparison.runs:
        click.echo(f"{run.projection_mode} dt={run.dt:.6g}: monotone={run.monotone}, {run.trace.status.value}")


@cli.command()
@config_option
def constants(config_path: str):
    """Print the discretization constants of the configured mesh."""
    cfg = load_config(config_path)
    report = compute_constants(cfg)
    write_json_report(_output_dir(cfg) / "report.json", report)
    click.echo(report.model_dump_json(indent=2))


def cli_main(argv: Optional[List[str]] = None) -> int:
    try:
        cli.main(args=argv, prog_name="dlr-heat", standalone_mode=False)
    except (ConfigError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        click.echo(f"error: {e}", err=True)
        return EXIT_CONFIG
    except click.ClickException as e:
        e.show()
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        click.echo(f"numerical failure: {e}", err=True)
        return EXIT_NUMERICAL
    except click.exceptions.Abort:
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(cli_main())
