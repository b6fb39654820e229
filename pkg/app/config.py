from typing import List
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings using Pydantic"""

    # Server configuration
    host: str = Field(default="0.0.0.0")
    port: int = Field(default=8000)
    debug: bool = Field(default=False)

    # CORS settings
    allowed_origins: List[str] = Field(default=["*"])

    # Logging
    log_level: str = Field(default="INFO")
    log_every: int = Field(default=1000, ge=1, description="Progress log interval in time steps")

    # Numerical tolerances
    tol_ortho: float = Field(default=1e-10, gt=0.0)
    weight_sum_tol: float = Field(default=1e-14, gt=0.0)
    consistency_tol: float = Field(default=1e-6, gt=0.0)
    monotone_slack: float = Field(default=1e-12, ge=0.0)
    max_tensor_points: int = Field(default=100_000, ge=1)

    # Seeds for orthonormal completions and randomized test directions
    completion_seed: int = Field(default=20_170_713)
    residual_seed: int = Field(default=7)

    # Run guards
    default_max_steps: int = Field(default=200_000, ge=1)
    wall_clock_limit_s: float = Field(default=3600.0, gt=0.0)

    # Sweeps
    sweep_workers: int = Field(default=1, ge=1)
    progress_bar: bool = Field(default=True)

    # Output
    output_dir: str = Field(default="output")

    @field_validator("log_level", mode="before")
    @classmethod
    def validate_log_level(cls, v):
        if isinstance(v, str):
            v = v.upper()
        if v not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {v!r}")
        return v

    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=False,
        extra="ignore",  # Ignore extra environment variables
    )


# Global settings instance
settings = Settings()
