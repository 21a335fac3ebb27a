# diot/config.py
"""
Runtime settings, loaded from the environment (prefix DIOT_) or a .env file.
"""
from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # ── Paths ─────────────────────────────────────
    path_cap:          int   = Field(10_000, gt=0)

    # ── Frank–Wolfe ───────────────────────────────
    relative_gap_tol:  float = Field(1e-8, gt=0)
    max_iterations:    int   = Field(100_000, gt=0)
    line_search_tol:   float = Field(1e-12, gt=0)
    step_rule:         Literal["pairwise", "classic"] = "pairwise"

    # ── Demand sweeps ─────────────────────────────
    support_epsilon:   float = Field(1e-6, gt=0)
    refine_levels:     int   = Field(6, ge=0)
    verify_rel_tol:    float = Field(1e-5, gt=0)
    grid_points:       int   = Field(40, gt=0)
    grid_low:          float = Field(0.01, gt=0)
    grid_high:         float = Field(4.0, gt=0)
    max_grid_points:   int   = Field(10_000, gt=0)
    max_product_commodities: int = Field(3, gt=0)

    # ── Equilibrium-set scan ──────────────────────
    scan_resolution:   float = Field(1e-3, gt=0)
    scan_max_points:   int   = Field(50_000, gt=0)
    scan_coarsest:     float = Field(0.05, gt=0)

    # ── Runtime ───────────────────────────────────
    n_jobs:            int   = 1
    log_level:         str   = "INFO"

    model_config = SettingsConfigDict(env_prefix="DIOT_", env_file=".env", extra="ignore")


@lru_cache
def get_settings() -> Settings:
    return Settings()
