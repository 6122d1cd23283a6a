"""
Multi-run execution.

Runs R independently seeded searches over one shared RegressorBank, keeps
the results in run-index order and picks the best structure across runs.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel
from tqdm import tqdm

from .baselines import ofr_report, run_bpso, run_ga
from .config import ALGORITHMS, SwarmConfig
from .core import BicEvaluator, Dataset, ModelSet, PredictionMode, RegressorBank
from .errors import ConfigError
from .reports import RunReport
from .search_2d import run_search

logger = logging.getLogger(__name__)

Searcher = Callable[..., RunReport]


def _ofr_searcher(dataset, model_set, config, seed, evaluator=None) -> RunReport:
    return ofr_report(dataset, model_set, config, evaluator=evaluator)


_SEARCHERS: Dict[str, Searcher] = {
    "2d-upso": run_search,
    "ga": run_ga,
    "bpso": run_bpso,
    "ofr": _ofr_searcher,
}


def build_searcher(algorithm: str) -> Searcher:
    """
    Searcher callable for an algorithm id.

    Every searcher takes (dataset, model_set, config, seed, evaluator=None)
    and returns a RunReport.
    """
    try:
        return _SEARCHERS[algorithm]
    except KeyError:
        raise ConfigError(f"unknown algorithm '{algorithm}'; expected one of {', '.join(ALGORITHMS)}")


def run_many(
    algorithm: str,
    dataset: Dataset,
    model_set: ModelSet,
    config: BaseModel,
    base_seed: int = 0,
    runs: int = 1,
    workers: int = 1,
    bank: Optional[RegressorBank] = None,
    progress: bool = True,
    prediction: PredictionMode = "one_step",
) -> List[RunReport]:
    """
    Execute R seeded runs; run k uses seed base_seed + k.

    Args:
        algorithm: One of 2d-upso, ga, bpso, ofr
        dataset: Identification data
        model_set: Candidate terms
        config: Settings block of the algorithm
        base_seed: Seed of run 0
        runs: Number of runs R
        workers: Thread pool size
        bank: Optional shared RegressorBank
        progress: Show a tqdm bar
        prediction: Validation prediction behind the criterion

    Returns:
        RunReports ordered by run index
    """
    searcher = build_searcher(algorithm)
    bank = bank or RegressorBank(model_set, dataset)
    if algorithm == "ofr" and runs > 1:
        logger.info("OFR is deterministic; running it once per requested run anyway")

    def one_run(k: int) -> RunReport:
        return searcher(dataset, model_set, config, base_seed + k, evaluator=BicEvaluator(bank, prediction))

    logger.info(f"Starting {runs} {algorithm} run(s) with {workers} worker(s), base seed {base_seed}")
    results: Dict[int, RunReport] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {executor.submit(one_run, k): k for k in range(runs)}
        for future in tqdm(as_completed(futures), total=runs, desc=algorithm, disable=not progress):
            k = futures[future]
            results[k] = future.result()
            logger.info(f"Run {k} (seed {base_seed + k}): J={results[k].J:.4f} xi={results[k].xi}")
    return [results[k] for k in range(runs)]


def select_best(reports: Sequence[RunReport]) -> int:
    """Index of the minimum-J report (ties go to the lowest run index)."""
    if not reports:
        raise ConfigError("no reports to select from")
    return min(range(len(reports)), key=lambda k: (reports[k].J, k))


def run_sweep(
    dataset: Dataset,
    model_set: ModelSet,
    swarm: SwarmConfig,
    uf_values: Sequence[float],
    rg_values: Sequence[int],
    repeats: int = 3,
    base_seed: int = 0,
    workers: int = 1,
    prediction: PredictionMode = "one_step",
) -> pd.DataFrame:
    """
    Grid over (u_f, RG): repeats seeded 2D-UPSO runs per cell.

    Every cell reuses the same seeds so cells differ only in the parameters.
    """
    bank = RegressorBank(model_set, dataset)
    rows = []
    for u_f in uf_values:
        for rg in rg_values:
            cell = swarm.model_copy(update={"u_f": float(u_f), "RG": int(rg)})
            reports = run_many(
                "2d-upso", dataset, model_set, cell, base_seed, repeats, workers, bank,
                progress=False, prediction=prediction,
            )
            values = np.array([r.J for r in reports])
            rows.append({
                "u_f": float(u_f),
                "rg": int(rg),
                "repeats": int(repeats),
                "mean_J": float(values.mean()),
                "std_J": float(values.std()),
                "min_J": float(values.min()),
            })
            logger.info(f"Sweep cell u_f={u_f} RG={rg}: mean J={values.mean():.4f}")
    return pd.DataFrame(rows, columns=["u_f", "rg", "repeats", "mean_J", "std_J", "min_J"])
