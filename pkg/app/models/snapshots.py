from typing import List, Literal
from pydantic import BaseModel, Field, model_validator


class MeasureSnapshot(BaseModel):
    kind: str
    points: List[List[float]]
    weights: List[float]


class StateSnapshot(BaseModel):
    """Self-describing JSON container of a DLR state"""
    format: Literal["dlr-state"] = "dlr-state"
    version: int = 1
    n_per_side: int = Field(..., ge=2)
    time: float
    rank: int = Field(..., ge=0)
    measure: MeasureSnapshot
    mean: List[float]
    U: List[List[float]] = Field(..., description="Deterministic modes, one list per dof")
    Y: List[List[float]] = Field(..., description="Stochastic modes, one list per measure point")

    @model_validator(mode="after")
    def check_shapes(self):
        dofs = (self.n_per_side - 1) ** 2
        if len(self.mean) != dofs or len(self.U) != dofs:
            raise ValueError(f"snapshot arrays do not match {dofs} interior dofs")
        if len(self.Y) != len(self.measure.weights):
            raise ValueError("snapshot Y rows do not match the measure size")
        if any(len(row) != self.rank for row in self.U + self.Y):
            raise ValueError(f"snapshot mode arrays do not have rank {self.rank}")
        return self
