"""Reproductions of the stability experiments on the random heat equation.

Run with ``pytest -m slow``. Meshes use n = 10 (h = 0.1414) and n = 20 (h/2).
"""

import pytest

from app.models.requests import ExperimentConfig, Scheme, SchemeConfig
from app.models.responses import RunStatus
from app.services.dlr_core import state_norms
from app.services.experiments import compare_projection_modes, compare_schemes, run_decay, stability_sweep
from app.services.helpers import first_increase, is_non_increasing
from app.services.initialization import build_initial_state, build_model
from app.services.integrators import step

pytestmark = pytest.mark.slow

GL_81 = {"a0": 0.3, "M": 2, "measure": {"type": "gl", "n": 9}}
MC_50 = {"a0": 0.3, "M": 10, "measure": {"type": "mc", "N": 50, "seed": 2017}}
DT_1 = 0.0017


def config(tmp_path, model, n_per_side, scheme, dt, R=3, **run) -> ExperimentConfig:
    return ExperimentConfig.model_validate(
        {
            "model": model,
            "space": {"n_per_side": n_per_side},
            "dlr": {"R": R},
            "scheme": {"name": scheme, "dt": dt},
            "run": run,
            "output": {"dir": str(tmp_path)},
        }
    )


@pytest.mark.parametrize("model", [GL_81, MC_50], ids=["gl81", "mc50"])
class TestExplicitStepCondition:
    def test_coarse_mesh_decays(self, tmp_path, model):
        trace = run_decay(config(tmp_path, model, 10, "explicit", DT_1))
        assert trace.status == RunStatus.DECAYED
        assert trace.monotone_energy

    def test_refined_mesh_with_quarter_step_decays(self, tmp_path, model):
        trace = run_decay(config(tmp_path, model, 20, "explicit", DT_1 / 4))
        assert trace.status == RunStatus.DECAYED

    def test_refined_mesh_with_third_step_blows_up(self, tmp_path, model):
        trace = run_decay(config(tmp_path, model, 20, "explicit", DT_1 / 3))
        assert trace.status == RunStatus.BLEW_UP


def test_stability_map_has_one_threshold(tmp_path):
    base = config(tmp_path, GL_81, 10, "explicit", DT_1)
    ratios = [0.03, 0.05, 0.06, 0.07, 0.08, 0.1, 0.13, 0.2]
    report = stability_sweep(base, [6, 8, 10, 12, 14, 16], ratio_list=ratios)
    assert report.separated
    assert 0.05 <= report.K_fit <= 0.15
    assert not any(c.status == RunStatus.DECAYED for c in report.cells if c.ratio > 1.5 * report.K_fit)
    assert not any(c.status == RunStatus.BLEW_UP for c in report.cells if c.ratio < report.K_fit / 1.5)


@pytest.mark.parametrize("dt", [0.5, 10.0, 100.0])
def test_semi_implicit_decays_for_any_step(tmp_path, dt):
    trace = run_decay(config(tmp_path, MC_50, 10, "semi_implicit", dt))
    assert trace.status == RunStatus.DECAYED
    assert trace.monotone_energy


@pytest.mark.parametrize("dt", [0.01, 1.0, 100.0])
def test_implicit_norms_decrease_while_fixed_point_converges(tmp_path, dt):
    trace = run_decay(config(tmp_path, GL_81, 10, "implicit", dt, max_steps=200))
    assert trace.monotone_energy
    assert trace.monotone_h
    if trace.status == RunStatus.INCONCLUSIVE:
        assert trace.reason


def test_staggered_and_splitting_schemes_coincide(tmp_path):
    comparison = compare_schemes(config(tmp_path, GL_81, 10, "semi_implicit", 100.0), steps=50)
    assert comparison.max_relative_difference <= 1e-10


def test_rank_deficient_start_stays_stable(tmp_path):
    cfg = config(tmp_path, GL_81, 10, "semi_implicit", 1.0, R=20)
    model = build_model(cfg)
    state = build_initial_state(cfg, model)
    assert state.rank_deficient
    energies = [state_norms(state, model.space, model.mu, model.diff)[0]]
    scheme = SchemeConfig(name=Scheme.SEMI_IMPLICIT, dt=1.0)
    while energies[-1] > 1e-10 and len(energies) < 200:
        state = step_and_check(state, model, scheme)
        energies.append(state_norms(state, model.space, model.mu, model.diff)[0])
    assert energies[-1] <= 1e-10
    assert is_non_increasing(energies)


def step_and_check(state, model, scheme):
    new = step(state, model, scheme)
    assert new.diagnostics.kernel_residual <= 1e-10
    return new


def test_projection_modes(tmp_path):
    comparison = compare_projection_modes(config(tmp_path, MC_50, 10, "semi_implicit", 5.0), [5.0, 100.0, 200.0])
    runs = {(run.projection_mode, run.dt): run for run in comparison.runs}
    assert len(runs) == 6
    for run in comparison.runs:
        assert run.trace.status == RunStatus.DECAYED
        if run.projection_mode == "gauss_seidel":
            assert run.monotone
    explicit_large = runs[("fully_explicit", 200.0)]
    assert not explicit_large.monotone
    assert first_increase([row.energy_norm for row in explicit_large.trace.rows]) is not None
