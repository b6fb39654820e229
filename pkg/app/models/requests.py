from typing import List, Literal, Optional
from enum import Enum
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..config import settings


class Scheme(str, Enum):
    EXPLICIT = "explicit"
    SEMI_IMPLICIT = "semi_implicit"
    IMPLICIT = "implicit"


class ProjectionMode(str, Enum):
    GAUSS_SEIDEL = "gauss_seidel"
    FULLY_EXPLICIT = "fully_explicit"


class ForcingRule(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class FixedPointConfig(BaseModel):
    """Picard iteration controls for the implicit scheme"""
    model_config = ConfigDict(extra="forbid")

    max_iters: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-12, gt=0.0)


class SchemeConfig(BaseModel):
    """Operator-evaluation rule and step controls of one integrator"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: Scheme = Field(default=Scheme.SEMI_IMPLICIT, description="Operator evaluation rule")
    dt: float = Field(..., gt=0.0)
    forcing_rule: ForcingRule = ForcingRule.LEFT
    projection_mode: ProjectionMode = ProjectionMode.GAUSS_SEIDEL
    rank_tol_factor: float = Field(default=2.220446049250313e-16, gt=0.0, le=1e-6)
    implicit_fp: FixedPointConfig = Field(default_factory=FixedPointConfig)


class MeasureConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["gl", "mc"]
    n: Optional[int] = Field(default=None, ge=1, description="GL points per dimension")
    N: Optional[int] = Field(default=None, ge=1, description="Monte Carlo sample count")
    seed: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def check_size(self):
        if self.type == "gl" and self.n is None:
            raise ValueError("measure.n is required for a Gauss-Legendre measure")
        if self.type == "mc" and self.N is None:
            raise ValueError("measure.N is required for a Monte Carlo measure")
        return self


class ModelSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a0: float = Field(default=0.3, gt=0.0)
    M: int = Field(default=2, ge=1)
    measure: MeasureConfig


class SpaceSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_per_side: int = Field(..., ge=2)


class DlrSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    R: int = Field(..., ge=1)


class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_steps: int = Field(default_factory=lambda: settings.default_max_steps, ge=0)
    stop_energy: float = Field(default=1e-10, gt=0.0)
    blowup_energy: float = Field(default=1e4, gt=0.0)

    @model_validator(mode="after")
    def check_thresholds(self):
        if self.stop_energy >= self.blowup_energy:
            raise ValueError("run.stop_energy must be smaller than run.blowup_energy")
        return self


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: str = Field(default_factory=lambda: settings.output_dir)


class ExperimentConfig(BaseModel):
    """One experiment as read from a JSON config file"""
    model_config = ConfigDict(extra="forbid")

    model: ModelSection
    space: SpaceSection
    dlr: DlrSection
    scheme: SchemeConfig
    run: RunSection = Field(default_factory=RunSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def check_rank(self):
        measure = self.model.measure
        size = measure.n ** self.model.M if measure.type == "gl" else measure.N
        if self.dlr.R >= size:
            raise ValueError(f"dlr.R = {self.dlr.R} must be smaller than the {size} measure points")
        if self.dlr.R > (self.space.n_per_side - 1) ** 2:
            raise ValueError(f"dlr.R = {self.dlr.R} exceeds the number of interior dofs")
        return self

    def with_updates(self, **sections) -> "ExperimentConfig":
        """Copy with some sections replaced, e.g. ``scheme={"dt": 0.1}``."""
        data = self.model_dump()
        for section, values in sections.items():
            data[section].update(values)
        return ExperimentConfig.model_validate(data)


class SweepRequest(BaseModel):
    config: ExperimentConfig
    n_per_side: List[int] = Field(..., min_length=1)
    dt: Optional[List[float]] = Field(default=None, description="Absolute time steps")
    ratio: Optional[List[float]] = Field(default=None, description="Time steps as multiples of h^2")

    @model_validator(mode="after")
    def check_grid(self):
        if bool(self.dt) == bool(self.ratio):
            raise ValueError("give exactly one of dt or ratio")
        return self

    @field_validator("n_per_side")
    @classmethod
    def check_sides(cls, v):
        if any(n < 2 for n in v):
            raise ValueError("every n_per_side must be at least 2")
        return v


class CompareSchemesRequest(BaseModel):
    config: ExperimentConfig
    steps: int = Field(default=50, ge=0)


class CompareProjectionRequest(BaseModel):
    config: ExperimentConfig
    dt: List[float] = Field(..., min_length=1)
