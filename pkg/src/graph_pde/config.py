"""
Configuration for graph-pde
Holds the defaults, environment overrides and the solver configuration model
"""

import logging
import os
from enum import Enum
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator

load_dotenv()

# Base configuration
VERSION = "0.1.0"
OUTPUT_DIR = os.getenv("GRAPHPDE_OUTPUT_DIR", "graph_pde_output")

# Serialization
CSV_FLOAT_FORMAT = "%.17g"
JSON_INDENT = 2

# Logging configuration
LOGGING_CONFIG = {
    'level': os.getenv("GRAPHPDE_LOG_LEVEL", "INFO"),
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    'logger_name': 'graph_pde',
}


class GraphPDEConfig:
    """Configuration class for library and CLI defaults"""

    # Reproducibility
    DEFAULT_SEED: int = int(os.getenv("GRAPHPDE_SEED", "7"))

    # Solver defaults
    TOLERANCE: float = 1e-10
    MAX_ITERATIONS: int = 10**6
    DAMPING: float = 1.0
    STAGNATION_WINDOW: int = 1000
    HISTORY_POINTS: int = 500
    DIVERGENCE_BOUND: float = 1e8

    # Verification
    EPS_STRICT: float = 1e-8
    CLASSIFY_TRIALS: int = 10**4
    SAMPLE_RANGE: tuple = (-10.0, 10.0)
    FUZZ_TRIALS: int = 200

    # Finite-difference bridge
    BALL_DIRECTIONS: int = 64
    LAMBDA1_DIRECTIONS: int = 16
    ROUNDOFF_FLOOR: float = 1e-12

    # Parallelism
    THREADS_ENV: str = "GRAPHPDE_THREADS"

    @classmethod
    def threads(cls, override: Optional[int] = None) -> int:
        """Worker cap: explicit flag first, then the environment, then 1"""
        if override is not None:
            return max(1, int(override))
        value = os.getenv(cls.THREADS_ENV)
        if value:
            try:
                return max(1, int(value))
            except ValueError:
                return 1
        return 1

    @classmethod
    def as_dict(cls) -> Dict[str, Any]:
        """Snapshot of the defaults, recorded in run manifests"""
        return {
            'seed': cls.DEFAULT_SEED,
            'tolerance': cls.TOLERANCE,
            'max_iterations': cls.MAX_ITERATIONS,
            'damping': cls.DAMPING,
            'stagnation_window': cls.STAGNATION_WINDOW,
            'eps_strict': cls.EPS_STRICT,
            'classify_trials': cls.CLASSIFY_TRIALS,
            'fuzz_trials': cls.FUZZ_TRIALS,
            'ball_directions': cls.BALL_DIRECTIONS,
        }

    @classmethod
    def validate_config(cls) -> List[str]:
        """Problems with the configured defaults; empty when everything is usable"""
        problems = []
        low, high = cls.SAMPLE_RANGE
        if not cls.TOLERANCE > 0:
            problems.append(f"tolerance must be positive, got {cls.TOLERANCE}")
        if not 0 < cls.DAMPING <= 1:
            problems.append(f"damping must lie in (0, 1], got {cls.DAMPING}")
        if not low < high:
            problems.append(f"empty sample range {cls.SAMPLE_RANGE}")
        if cls.DEFAULT_SEED < 0:
            problems.append(f"seed must be nonnegative, got {cls.DEFAULT_SEED}")
        if not isinstance(logging.getLevelName(str(LOGGING_CONFIG['level']).upper()), int):
            problems.append(f"unknown log level {LOGGING_CONFIG['level']!r}")
        return problems


class Scheme(str, Enum):
    FIXED_POINT_T = "fixed_point_T"
    GAUSS_SEIDEL_LOCAL = "gauss_seidel_local"
    EIKONAL_LABEL_SETTING = "eikonal_label_setting"


class SolverConfig(BaseModel):
    """Stopping rules and iteration controls shared by every solver"""

    model_config = ConfigDict(frozen=True, use_enum_values=True)

    tolerance: float = GraphPDEConfig.TOLERANCE
    max_iterations: int = Field(default=GraphPDEConfig.MAX_ITERATIONS, ge=1)
    damping: float = GraphPDEConfig.DAMPING
    stagnation_window: int = Field(default=GraphPDEConfig.STAGNATION_WINDOW, ge=1)
    scheme: Scheme = Scheme.FIXED_POINT_T
    initial_value: Optional[float] = None
    history_points: int = Field(default=GraphPDEConfig.HISTORY_POINTS, ge=2)
    debug_checks: bool = False
    divergence_bound: float = GraphPDEConfig.DIVERGENCE_BOUND

    @field_validator("tolerance")
    @classmethod
    def _positive_tolerance(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("tolerance must be positive")
        return value

    @field_validator("damping")
    @classmethod
    def _damping_range(cls, value: float) -> float:
        if not 0 < value <= 1:
            raise ValueError("damping must lie in (0, 1]")
        return value
