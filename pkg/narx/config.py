"""
Configuration models for experiments and searchers.

All settings are pydantic models so that JSON experiment files, CLI overrides
and programmatic construction share one validation path. Environment defaults
(log level, worker count, output directory) are read from `.env` via
python-dotenv.
"""

import copy
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, model_validator

from .core import PredictionMode
from .errors import ConfigError

# Look for .env next to the project first, then fall back to the working directory
_env_path = Path(__file__).resolve().parent.parent / ".env"
if _env_path.exists():
    load_dotenv(_env_path)
else:
    load_dotenv()

Algorithm = Literal["2d-upso", "ga", "bpso", "ofr"]
ALGORITHMS = ("2d-upso", "ga", "bpso", "ofr")


def env_log_level() -> str:
    return os.getenv("NARX_LOG_LEVEL", "INFO")


def env_workers() -> int:
    try:
        return max(1, int(os.getenv("NARX_WORKERS", "1")))
    except ValueError:
        return 1


def env_output_dir() -> str:
    return os.getenv("NARX_OUTPUT_DIR", "results")


# ============================================================================
# SEARCHER SETTINGS
# ============================================================================

class ModelSetSpec(BaseModel):
    """Lags and nonlinearity degree of the candidate NARX model set."""
    n_u: int = Field(4, ge=1, description="Maximum input lag")
    n_y: int = Field(4, ge=1, description="Maximum output lag")
    n_l: int = Field(3, ge=1, description="Degree of polynomial expansion")


class SwarmConfig(BaseModel):
    """2D-UPSO settings."""
    ps: int = Field(30, ge=3, description="Swarm size")
    u_f: float = Field(0.4, ge=0.0, le=1.0, description="Unification factor")
    RG: int = Field(20, ge=1, description="Refresh gap (iterations without pbest improvement)")
    max_fes: int = Field(6000, ge=1, description="Function-evaluation budget")
    neighborhood_radius: int = Field(1, ge=1, description="Ring neighborhood radius")

    @model_validator(mode="after")
    def _budget_covers_swarm(self):
        if self.max_fes < self.ps:
            raise ValueError(f"max_fes ({self.max_fes}) must be >= ps ({self.ps})")
        return self


class GaConfig(BaseModel):
    """Binary genetic algorithm settings."""
    population: int = Field(30, ge=2)
    p_c: float = Field(0.8, ge=0.0, le=1.0, description="Crossover probability")
    p_m: float = Field(0.1, ge=0.0, le=1.0, description="Per-bit mutation probability")
    max_fes: int = Field(6000, ge=1)


class BpsoConfig(BaseModel):
    """Binary PSO settings (sigmoid transfer)."""
    ps: int = Field(30, ge=2)
    omega: float = Field(1.0, description="Inertia weight")
    c1: float = Field(2.0, ge=0.0)
    c2: float = Field(2.0, ge=0.0)
    v_min: float = -6.0
    v_max: float = 6.0
    max_fes: int = Field(6000, ge=1)

    @model_validator(mode="after")
    def _velocity_bounds(self):
        if not self.v_min < self.v_max:
            raise ValueError(f"v_min ({self.v_min}) must be < v_max ({self.v_max})")
        return self


class OfrConfig(BaseModel):
    """Orthogonal forward regression with the ERR stopping threshold."""
    sigma: float = Field(0.01, gt=0.0, lt=1.0, description="ERR stopping threshold")
    max_terms: int = Field(60, ge=1, description="Safety cap on selected terms")


class SweepConfig(BaseModel):
    """Parameter grid for the (u_f, RG) sensitivity study."""
    uf_values: List[float] = Field(default_factory=lambda: [0.1, 0.4, 0.7, 1.0])
    rg_values: List[int] = Field(default_factory=lambda: [5, 20, 35, 50])
    repeats: int = Field(3, ge=1, description="Seeded searches per grid cell")

    @model_validator(mode="after")
    def _ranges(self):
        if not self.uf_values or not self.rg_values:
            raise ValueError("sweep grid must not be empty")
        if any(not 0.0 <= v <= 1.0 for v in self.uf_values):
            raise ValueError("u_f values must lie in [0, 1]")
        if any(v < 1 for v in self.rg_values):
            raise ValueError("RG values must be >= 1")
        return self


# ============================================================================
# EXPERIMENT
# ============================================================================

class ExperimentConfig(BaseModel):
    """Complete description of one identification experiment."""
    system: Optional[str] = Field(None, description="Benchmark system id (S1..S7, Duffing, VanDerPol)")
    data_path: Optional[Path] = Field(None, description="CSV with header k,u,y")
    n: int = Field(1000, ge=50, description="Record length for generated data")
    n_est: int = Field(700, ge=1, description="Estimation-set length")
    data_seed: int = 0
    model: ModelSetSpec = Field(default_factory=ModelSetSpec)
    algorithm: Algorithm = "2d-upso"
    swarm: SwarmConfig = Field(default_factory=SwarmConfig)
    ga: GaConfig = Field(default_factory=GaConfig)
    bpso: BpsoConfig = Field(default_factory=BpsoConfig)
    ofr: OfrConfig = Field(default_factory=OfrConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    runs: int = Field(40, ge=1, description="Independent runs R")
    base_seed: int = 0
    workers: int = Field(default_factory=env_workers, ge=1)
    output_dir: Path = Field(default_factory=lambda: Path(env_output_dir()))
    alpha_level: float = Field(0.05, gt=0.0, lt=1.0, description="t-test significance level")
    prune: bool = True
    max_lag: int = Field(20, ge=1, description="Correlation-test lags")
    prediction: Optional[PredictionMode] = Field(
        None, description="Validation prediction behind the criterion (default: the dataset sidecar hint, else one_step)"
    )

    @model_validator(mode="after")
    def _data_source(self):
        if (self.system is None) == (self.data_path is None):
            raise ValueError("exactly one of 'system' or 'data_path' must be given")
        if self.data_path is not None and not Path(self.data_path).exists():
            raise ValueError(f"dataset file not found: {self.data_path}")
        if self.system is not None and self.n_est >= self.n:
            raise ValueError(f"n_est ({self.n_est}) must be smaller than n ({self.n})")
        return self

    def searcher_config(self) -> BaseModel:
        """The settings block for the selected algorithm."""
        return {
            "2d-upso": self.swarm,
            "ga": self.ga,
            "bpso": self.bpso,
            "ofr": self.ofr,
        }[self.algorithm]


def _deep_merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in extra.items():
        if value is None:
            continue
        if isinstance(value, dict):
            current = merged.get(key)
            merged[key] = _deep_merge(current if isinstance(current, dict) else {}, value)
        else:
            merged[key] = value
    return merged


def load_experiment_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
    quick: bool = False,
) -> ExperimentConfig:
    """
    Load an experiment from a JSON file and apply overrides.

    Args:
        path: Optional JSON experiment file with nested sections
        overrides: Nested dict of values taking precedence over the file
            (None values are ignored so unset CLI flags do not clobber it)
        quick: Desk-scale preset (R=10) unless runs are overridden. A
            system or data_path override replaces both keys of the file

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: If the file cannot be read or validation fails
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read experiment config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"experiment config {path} must be a JSON object")
    if quick:
        data = _deep_merge(data, {"runs": 10})
    if overrides:
        # a data source given as an override replaces the file's data source
        if overrides.get("system") is not None or overrides.get("data_path") is not None:
            data = {k: v for k, v in data.items() if k not in ("system", "data_path")}
        data = _deep_merge(data, overrides)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
