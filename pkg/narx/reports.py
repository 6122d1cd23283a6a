"""
Pydantic schemas for per-run reports and identification summaries.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from .core import IdentifiedModel, ModelSet, generate_model_set
from .errors import DatasetError
from .utils import read_json, write_json

logger = logging.getLogger(__name__)


class TracePoint(BaseModel):
    iter: int
    J: float
    xi: int


class ErrStep(BaseModel):
    """One orthogonal forward regression step."""
    term: str
    err: float
    cumulative: float


class RunReport(BaseModel):
    """Outcome of one seeded search run."""
    seed: Optional[int] = None
    algorithm: str
    config: Dict[str, Any] = Field(default_factory=dict)
    model: Dict[str, int] = Field(..., description="Model-set spec {n_u, n_y, n_l}")
    best_mask: List[int]
    best_terms: List[str]
    coefficients: List[float]
    J: float
    nmse: float
    trace: List[TracePoint] = Field(default_factory=list)
    fes_used: int
    err_sequence: Optional[List[ErrStep]] = None

    @property
    def xi(self) -> int:
        return int(sum(self.best_mask))

    def model_set(self) -> ModelSet:
        return generate_model_set(self.model["n_u"], self.model["n_y"], self.model["n_l"])

    def to_model(self, model_set: Optional[ModelSet] = None) -> IdentifiedModel:
        return IdentifiedModel(
            model_set or self.model_set(),
            np.asarray(self.best_mask, dtype=np.int8),
            np.asarray(self.coefficients, dtype=float),
            self.J,
            self.nmse,
        )


class IdentificationSummary(BaseModel):
    """Best-of-R result written as summary.json."""
    algorithm: str
    runs: int
    base_seed: int
    best_run: int
    best_seed: Optional[int]
    model: Dict[str, int]
    best_terms: List[str]
    best_mask: List[int]
    coefficients: List[float]
    J: float
    nmse: float
    pruned_terms: Optional[List[str]] = None
    pruned_coefficients: Optional[List[float]] = None
    validity: Optional[Dict[str, bool]] = None
    within_band: Optional[Dict[str, bool]] = None
    valid: Optional[bool] = None


def build_run_report(
    algorithm: str,
    seed: Optional[int],
    config: Dict[str, Any],
    model: IdentifiedModel,
    trace: List[TracePoint],
    fes_used: int,
    err_sequence: Optional[List[ErrStep]] = None,
) -> RunReport:
    model_set = model.model_set
    return RunReport(
        seed=None if seed is None else int(seed),
        algorithm=algorithm,
        config=config,
        model={"n_u": model_set.n_u, "n_y": model_set.n_y, "n_l": model_set.n_l},
        best_mask=[int(b) for b in model.mask],
        best_terms=[t.label() for t in model.terms],
        coefficients=[float(c) for c in model.coefficients],
        J=float(model.criterion),
        nmse=float(model.nmse),
        trace=trace,
        fes_used=int(fes_used),
        err_sequence=err_sequence,
    )


def run_file_name(index: int) -> str:
    return f"run_{index:03d}.json"


def write_run_reports(reports: List[RunReport], directory: Union[str, Path]) -> List[Path]:
    directory = Path(directory)
    return [
        write_json(directory / run_file_name(i), report.model_dump(mode="json"))
        for i, report in enumerate(reports)
    ]


def load_run_reports(directory: Union[str, Path]) -> List[RunReport]:
    """Read run_XXX.json files in run-index order."""
    directory = Path(directory)
    runs_dir = directory / "runs" if (directory / "runs").is_dir() else directory
    paths = sorted(runs_dir.glob("run_*.json"))
    if not paths:
        raise DatasetError(f"no run_*.json reports found in {runs_dir}")
    logger.info(f"Loaded {len(paths)} run reports from {runs_dir}")
    return [RunReport.model_validate(read_json(p)) for p in paths]
