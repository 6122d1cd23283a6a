"""
Nodes of the identification graph: prepare, search, select, prune, validate.

Each node reads what it needs from IdentificationState and returns the
fields it adds.
"""

import logging

from .benchmarks import generate_dataset, load_dataset, read_sidecar, truth_mask_for
from .core import BicEvaluator, RegressorBank, generate_model_set
from .errors import DivergenceError, SingularFitError
from .reports import IdentificationSummary
from .runner import run_many, select_best
from .state import IdentificationState
from .validation import correlation_tests, prune_spurious, validation_residuals

logger = logging.getLogger(__name__)


def prepare_node(state: IdentificationState) -> dict:
    """Generate or load the dataset, build the model set and read the ground truth."""
    config = state["config"]
    if config.data_path is not None:
        dataset = load_dataset(config.data_path, config.n_est)
        sidecar = read_sidecar(config.data_path)
        if sidecar is None:
            logger.warning(f"No sidecar next to {config.data_path}; ground truth unknown")
    else:
        dataset, sidecar = generate_dataset(config.system, config.n, config.n_est, config.data_seed)
    model_set = generate_model_set(config.model.n_u, config.model.n_y, config.model.n_l)
    logger.info(f"Prepared dataset ({len(dataset)} samples, n_est={dataset.n_est}) and {len(model_set)} candidate terms")
    prediction = config.prediction or (sidecar or {}).get("prediction") or "one_step"
    logger.info(f"Scoring structures on {prediction.replace('_', '-')} validation predictions")
    return {
        "dataset": dataset,
        "model_set": model_set,
        "sidecar": sidecar or {},
        "truth_mask": truth_mask_for(sidecar, model_set),
        "prediction": prediction,
    }


def search_node(state: IdentificationState) -> dict:
    config = state["config"]
    reports = run_many(
        config.algorithm,
        state["dataset"],
        state["model_set"],
        config.searcher_config(),
        base_seed=config.base_seed,
        runs=config.runs,
        workers=config.workers,
        prediction=state.get("prediction", "one_step"),
    )
    return {"reports": reports}


def select_node(state: IdentificationState) -> dict:
    """Best-of-R structure, refit on the estimation set."""
    reports = state["reports"]
    best = select_best(reports)
    evaluator = BicEvaluator(RegressorBank(state["model_set"], state["dataset"]), state.get("prediction", "one_step"))
    model = evaluator.fit(reports[best].best_mask)
    logger.info(f"Selected run {best}: J={model.criterion:.4f}, {model.xi} terms")
    return {"best": best, "model": model}


def prune_node(state: IdentificationState) -> dict:
    model = state["model"]
    if model.xi == 0:
        return {"pruned": model}
    try:
        pruned = prune_spurious(
            model, state["dataset"], state["config"].alpha_level, prediction=state.get("prediction", "one_step")
        )
    except SingularFitError as e:
        logger.warning(f"Pruning refit failed ({e}); keeping the selected model")
        pruned = model
    logger.info(f"Pruned model keeps {pruned.xi} of {model.xi} terms")
    return {"pruned": pruned}


def should_prune(state: IdentificationState) -> str:
    """
    Route after selection.

    Returns:
        "prune" when pruning is enabled, otherwise "validate"
    """
    return "prune" if state["config"].prune else "validate"


def validate_node(state: IdentificationState) -> dict:
    """Correlation tests on the final model's validation residuals and the summary."""
    config = state["config"]
    dataset = state["dataset"]
    model = state["model"]
    pruned = state.get("pruned")
    final = pruned if pruned is not None else model
    validity = None
    if final.xi > 0:
        try:
            residuals = validation_residuals(final, dataset, state.get("prediction", "one_step"))
        except DivergenceError as e:
            logger.warning(f"Skipping validity tests: {e}")
        else:
            validity = correlation_tests(residuals, dataset.validation[0], max_lag=config.max_lag)
            logger.info(f"Validity tests: {'pass' if validity.valid else 'fail'} {validity.passes}")

    reports = state["reports"]
    best = state["best"]
    summary = IdentificationSummary(
        algorithm=config.algorithm,
        runs=len(reports),
        base_seed=config.base_seed,
        best_run=best,
        best_seed=reports[best].seed,
        model=reports[best].model,
        best_terms=[t.label() for t in model.terms],
        best_mask=[int(b) for b in model.mask],
        coefficients=[float(c) for c in model.coefficients],
        J=float(model.criterion),
        nmse=float(model.nmse),
        pruned_terms=[t.label() for t in final.terms] if pruned is not None else None,
        pruned_coefficients=[float(c) for c in final.coefficients] if pruned is not None else None,
        validity=dict(validity.passes) if validity is not None else None,
        within_band=dict(validity.within_band) if validity is not None else None,
        valid=validity.valid if validity is not None else None,
    )
    return {"validity": validity, "summary": summary}
