from typing import List, Optional
from pydantic import BaseModel, Field
from enum import Enum


class RunStatus(str, Enum):
    DECAYED = "decayed"
    BLEW_UP = "blew_up"
    INCONCLUSIVE = "inconclusive"


class ConstantsReport(BaseModel):
    """Discretization constants entering the stability conditions"""
    n_per_side: int
    h: float = Field(..., description="Element diameter")
    C_I: float = Field(..., description="Inverse-inequality constant, ||v||_V <= (C_I/h) ||v||_H")
    C_B: float = Field(..., description="Continuity constant (sampled a_max)")
    C_L: float = Field(..., description="Coercivity constant (sampled a_min)")
    C_P: float = Field(..., description="Poincare constant, reported only")
    C_det: float = Field(..., description="inf of mean coefficient over coefficient")
    K_explicit: float = Field(..., description="Explicit step bound dt <= K_explicit * h^2")
    laplace_lambda_min: float
    laplace_lambda_max: float
    a_min_envelope: Optional[float] = None
    a_max_envelope: Optional[float] = None


class NormTraceRow(BaseModel):
    step: int
    time: float
    energy_norm: float
    h_norm: float
    v_norm: float
    min_singular_value_of_gram: float
    effective_rank: int
    fp_iters: Optional[int] = None


class NormTrace(BaseModel):
    """Per-step norms of one trajectory and its classification"""
    scheme: str
    projection_mode: str
    dt: float
    n_per_side: int
    h: float
    rank: int
    status: RunStatus = RunStatus.INCONCLUSIVE
    reason: Optional[str] = None
    monotone_energy: bool = True
    monotone_h: bool = True
    rows: List[NormTraceRow] = Field(default_factory=list)
    wall_time_ms: Optional[float] = None

    @property
    def energies(self) -> List[float]:
        return [row.energy_norm for row in self.rows]

    @property
    def final_energy(self) -> Optional[float]:
        return self.rows[-1].energy_norm if self.rows else None


class SweepCell(BaseModel):
    n_per_side: int
    h: float
    dt: float
    ratio: float = Field(..., description="dt / h^2")
    status: RunStatus
    steps: int
    final_energy: Optional[float] = None
    reason: Optional[str] = None


class SweepReport(BaseModel):
    """Decay / blow-up map over a grid of (h, dt) cells"""
    scheme: str
    cells: List[SweepCell]
    K_fit: Optional[float] = Field(None, description="Largest dt/h^2 below which every cell decayed")
    K_fit_above_grid: bool = False
    separated: bool = Field(True, description="Decayed and blown-up ratios split by one threshold")
    K_explicit: Optional[float] = None
    processing_time_ms: Optional[float] = None


class SchemeComparisonRow(BaseModel):
    step: int
    time: float
    relative_difference: float
    energy_staggered: float
    energy_splitting: float
    min_singular_value_of_gram: float


class SchemeComparison(BaseModel):
    """Per-step difference between the staggered and the projector-splitting integrator"""
    rows: List[SchemeComparisonRow] = Field(default_factory=list)
    max_relative_difference: float = 0.0
    monotone_staggered: bool = True
    monotone_splitting: bool = True


class ProjectionRun(BaseModel):
    projection_mode: str
    dt: float
    monotone: bool
    trace: NormTrace


class ProjectionComparison(BaseModel):
    runs: List[ProjectionRun] = Field(default_factory=list)
