import time
from typing import Sequence

import numpy as np

from ..config import settings


def calculate_processing_time(start_time: float) -> float:
    """Calculate processing time in milliseconds"""
    return (time.time() - start_time) * 1000


def is_non_increasing(values: Sequence[float], slack: float | None = None) -> bool:
    """True when every value is at most its predecessor plus ``slack`` times the predecessor."""
    slack = settings.monotone_slack if slack is None else slack
    return all(b <= a + slack * abs(a) for a, b in zip(values, values[1:]))


def first_increase(values: Sequence[float], slack: float | None = None) -> int | None:
    """Index of the first step that increases beyond the slack, if any."""
    slack = settings.monotone_slack if slack is None else slack
    for i, (a, b) in enumerate(zip(values, values[1:]), start=1):
        if b > a + slack * abs(a):
            return i
    return None


def relative_difference(a: np.ndarray, b: np.ndarray, mass, weights: np.ndarray) -> float:
    """``||a - b|| / ||a||`` in the H x L2 norm for two ``(dof, N)`` fields."""
    def sq_norm(field: np.ndarray) -> float:
        return float(weights @ np.einsum("ik,ik->k", field, mass @ field))

    reference = sq_norm(a)
    diff = sq_norm(a - b)
    if reference <= 0.0:
        return float(np.sqrt(diff))
    return float(np.sqrt(diff / reference))
