import os
import yaml
from pathlib import Path
from typing import List, Literal, Union
from pydantic import BaseModel, Field, field_validator
from loguru import logger
import sys

WORKERS_ENV_VAR = "SHALLOW_AUDIT_WORKERS"

# --- Models schemas ---


class AuditSettings(BaseModel):
    seed: int = 0
    depths: List[int] = Field(default_factory=lambda: [1, 2, 3, 4])
    folds: int = 5
    tolerance: float = 0.025
    test_fraction: float = 0.2
    canonical_features: List[str] = Field(
        default_factory=lambda: ["followers", "following", "tweets", "lists"]
    )

    @field_validator("depths")
    def check_depths(cls, v):
        if not v or any(d < 1 or d > 4 for d in v):
            raise ValueError("Depths must be a non-empty subset of 1..4")
        return sorted(set(v))

    @field_validator("folds")
    def check_folds(cls, v):
        if v < 2:
            raise ValueError("Cross-validation needs at least 2 folds")
        return v

    @field_validator("tolerance")
    def check_tolerance(cls, v):
        if v < 0:
            raise ValueError("Tolerance must be non-negative")
        return v

    @field_validator("test_fraction")
    def check_fraction(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("test_fraction must lie strictly between 0 and 1")
        return v


class ForestSettings(BaseModel):
    n_trees: int = 100
    bootstrap: bool = True
    max_features: Union[Literal["sqrt", "all"], int] = "sqrt"

    @field_validator("n_trees")
    def check_trees(cls, v):
        if v < 1:
            raise ValueError("A forest needs at least one tree")
        return v


class ExecutionSettings(BaseModel):
    workers: int = 1

    @field_validator("workers")
    def check_workers(cls, v):
        if v < 1:
            raise ValueError("workers must be >= 1")
        return v


class ReportSettings(BaseModel):
    output_dir: str = "report"


class LoggingSettings(BaseModel):
    level: Literal["DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"]


class Settings(BaseModel):
    logging: LoggingSettings
    audit: AuditSettings
    forest: ForestSettings
    execution: ExecutionSettings
    report: ReportSettings


# --- Load logic ---


def get_project_root() -> Path:
    return Path(__file__).resolve().parents[1]


def _apply_env_overrides(raw_config: dict) -> dict:
    workers = os.environ.get(WORKERS_ENV_VAR)
    if workers:
        raw_config.setdefault("execution", {})["workers"] = int(workers)
    return raw_config


def load_settings() -> Settings:
    """Loads the config file and validates it with Pydantic."""
    config_path = get_project_root() / "config.yaml"
    logger.debug(f"Loading configuration from: {config_path}")

    if not config_path.exists():
        logger.critical(f"Config file not found at {config_path}")
        sys.exit(1)

    try:
        with open(config_path, "r") as f:
            raw_config = yaml.safe_load(f)

        return Settings(**_apply_env_overrides(raw_config))

    except Exception as e:
        logger.critical(f"Configuration error: {e}")
        sys.exit(1)


try:
    settings = load_settings()
except Exception:
    sys.exit(1)
