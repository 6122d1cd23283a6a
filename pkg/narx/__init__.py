"""
Polynomial NARX structure selection.

Exports the fitness engine, the 2D-UPSO searcher, the GA / BPSO / OFR
baselines, benchmark generators and validation helpers.
"""

from .state import IdentificationState
from .errors import (
    NarxError,
    ConfigError,
    DatasetError,
    ModelSetError,
    SingularFitError,
    DivergenceError,
    DegenerateDataError,
    IntegrationError,
)
from .config import (
    ModelSetSpec,
    SwarmConfig,
    GaConfig,
    BpsoConfig,
    OfrConfig,
    SweepConfig,
    ExperimentConfig,
    load_experiment_config,
)
from .core import (
    WORST_CRITERION,
    TermSpec,
    ModelSet,
    Dataset,
    IdentifiedModel,
    RegressorBank,
    BicEvaluator,
    count_terms,
    generate_model_set,
    evaluate_term,
    estimate_parameters,
    simulate_model,
    compute_nmse,
    evaluate_bic,
    bic_value,
)
from .reports import RunReport, TracePoint, IdentificationSummary
from .search_2d import (
    decode_structure,
    extract_learning_set,
    extract_self_learning_set,
    compute_delta,
    update_velocity,
    update_position,
    refresh_velocity,
    run_search,
)
from .baselines import run_ga, run_bpso, run_ofr_err, ofr_report, ofr_threshold_table, exhaustive_search
from .benchmarks import (
    SYSTEMS,
    OSCILLATORS,
    SystemSpec,
    get_system,
    gen_white_uniform,
    gen_white_gaussian,
    simulate_system,
    simulate_s7,
    simulate_oscillator,
    split_dataset,
    generate_dataset,
    write_dataset,
    load_dataset,
)
from .validation import (
    SearchOutcome,
    FrequencyReport,
    CorrelationReport,
    OutcomeTally,
    classify_outcome,
    selection_frequency,
    prune_spurious,
    correlation_tests,
    aggregate_outcomes,
    average_convergence,
)
from .runner import build_searcher, run_many, select_best, run_sweep
from .nodes import prepare_node, search_node, select_node, prune_node, validate_node, should_prune

__all__ = [
    "IdentificationState",
    "NarxError", "ConfigError", "DatasetError", "ModelSetError", "SingularFitError",
    "DivergenceError", "DegenerateDataError", "IntegrationError",
    "ModelSetSpec", "SwarmConfig", "GaConfig", "BpsoConfig", "OfrConfig", "SweepConfig",
    "ExperimentConfig", "load_experiment_config",
    "WORST_CRITERION", "TermSpec", "ModelSet", "Dataset", "IdentifiedModel", "RegressorBank",
    "BicEvaluator", "count_terms", "generate_model_set", "evaluate_term", "estimate_parameters",
    "simulate_model", "compute_nmse", "evaluate_bic", "bic_value",
    "RunReport", "TracePoint", "IdentificationSummary",
    "decode_structure", "extract_learning_set", "extract_self_learning_set", "compute_delta",
    "update_velocity", "update_position", "refresh_velocity", "run_search",
    "run_ga", "run_bpso", "run_ofr_err", "ofr_report", "ofr_threshold_table", "exhaustive_search",
    "SYSTEMS", "OSCILLATORS", "SystemSpec", "get_system", "gen_white_uniform", "gen_white_gaussian",
    "simulate_system", "simulate_s7", "simulate_oscillator", "split_dataset", "generate_dataset",
    "write_dataset", "load_dataset",
    "SearchOutcome", "FrequencyReport", "CorrelationReport", "OutcomeTally", "classify_outcome",
    "selection_frequency", "prune_spurious", "correlation_tests", "aggregate_outcomes",
    "average_convergence",
    "build_searcher", "run_many", "select_best", "run_sweep",
    "prepare_node", "search_node", "select_node", "prune_node", "validate_node", "should_prune",
]
