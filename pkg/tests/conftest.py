import copy

import numpy as np
import pytest

from app.config import settings
from app.models.requests import ExperimentConfig
from app.services.dlr_core import DlrState, weighted_qr
from app.services.fem import AffineDiffusion, build_space
from app.services.initialization import heat_coefficient
from app.services.integrators import HeatModel
from app.services.stochastic import gauss_legendre_measure


BASE_CONFIG = {
    "model": {"a0": 0.3, "M": 2, "measure": {"type": "gl", "n": 3}},
    "space": {"n_per_side": 7},
    "dlr": {"R": 3},
    "scheme": {"name": "semi_implicit", "dt": 1.0},
    "run": {"max_steps": 500},
}


@pytest.fixture(autouse=True)
def quiet_progress(monkeypatch):
    monkeypatch.setattr(settings, "progress_bar", False)


@pytest.fixture
def config_data(tmp_path):
    data = copy.deepcopy(BASE_CONFIG)
    data["output"] = {"dir": str(tmp_path / "out")}
    return data


@pytest.fixture
def make_config(config_data):
    """Build an ExperimentConfig from the small base setup with some sections updated."""
    def factory(**sections) -> ExperimentConfig:
        data = copy.deepcopy(config_data)
        for section, values in sections.items():
            data[section].update(values)
        return ExperimentConfig.model_validate(data)

    return factory


@pytest.fixture
def gl_measure():
    return gauss_legendre_measure(2, 3)


@pytest.fixture
def small_space():
    return build_space(7)


@pytest.fixture
def heat_model(small_space, gl_measure):
    return HeatModel(space=small_space, mu=gl_measure, diff=heat_coefficient(0.3, 2))


@pytest.fixture
def constant_model(small_space, gl_measure):
    return HeatModel(space=small_space, mu=gl_measure, diff=AffineDiffusion.constant(1.0, M=2))


def random_state(space, mu, R: int, rng: np.random.Generator, zero_columns: int = 0) -> DlrState:
    """Random state with orthonormal zero-mean Y and the last ``zero_columns`` of U set to zero."""
    raw = rng.standard_normal((mu.size, R))
    raw -= mu.weights @ raw
    Y, _, _ = weighted_qr(mu, raw)
    U = rng.standard_normal((space.dof_count, R))
    if zero_columns:
        U[:, R - zero_columns:] = 0.0
    mean = rng.standard_normal(space.dof_count)
    return DlrState(mean=mean, U=U, Y=Y)
