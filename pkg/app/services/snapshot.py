"""Checkpointing of DLR states as JSON."""

import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from ..core.exceptions import ConfigError
from ..models.snapshots import MeasureSnapshot, StateSnapshot
from .dlr_core import DlrState
from .fem import FeSpace, build_space
from .stochastic import DiscreteMeasure

logger = logging.getLogger(__name__)


def save_state(path: Path, state: DlrState, space: FeSpace, mu: DiscreteMeasure) -> Path:
    snapshot = StateSnapshot(
        n_per_side=space.mesh.n_per_side,
        time=state.time,
        rank=state.rank,
        measure=MeasureSnapshot(kind=mu.kind, points=mu.points.tolist(), weights=mu.weights.tolist()),
        mean=state.mean.tolist(),
        U=state.U.tolist(),
        Y=state.Y.tolist(),
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(snapshot.model_dump_json(), encoding="utf-8")
    logger.info(f"Saved state at t={state.time:.6g} to {path}")
    return path


def load_state(path: Path) -> tuple[DlrState, FeSpace, DiscreteMeasure]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"state snapshot {path} does not exist")
    try:
        snapshot = StateSnapshot.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(f"invalid state snapshot {path}: {e}") from e

    mu = DiscreteMeasure(np.array(snapshot.measure.points), np.array(snapshot.measure.weights), kind=snapshot.measure.kind)
    space = build_space(snapshot.n_per_side)
    R = snapshot.rank
    state = DlrState(
        mean=np.array(snapshot.mean, dtype=float),
        U=np.array(snapshot.U, dtype=float).reshape(space.dof_count, R),
        Y=np.array(snapshot.Y, dtype=float).reshape(mu.size, R),
        time=snapshot.time,
    )
    logger.info(f"Loaded state at t={state.time:.6g} from {path}")
    return state, space, mu
