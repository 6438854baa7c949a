from pathlib import Path
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

BASE_DIR = Path(__file__).resolve().parent


class Settings(BaseSettings):
    config_version: str = "2024.06"
    output_dir: str = str(BASE_DIR / "runs")
    log_level: str = "INFO"

    # Sweep members solved in parallel (FREIGHT_WORKERS).
    workers: int = Field(default=1, ge=1)

    feasibility_tol: float = Field(default=1e-8, gt=0)
    optimality_tol: float = Field(default=1e-8, gt=0)
    max_iterations: int = Field(default=20000, ge=1)
    solver_method: Literal["highs-ipm", "highs-ds", "mehrotra"] = "highs-ipm"
    scaling: bool = True

    # Private HDV split used by shaev_split.
    private_automated_share: float = Field(default=0.5, ge=0.0, le=1.0)
    plug_start_hour: int = Field(default=18, ge=0, le=23)
    plug_end_hour: int = Field(default=6, ge=0, le=23)

    oracle_grid_step: float = Field(default=10.0, gt=0)
    oracle_budget: int = Field(default=2_000_000, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="FREIGHT_",
        env_file=str(BASE_DIR / "freight.env"),
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()
