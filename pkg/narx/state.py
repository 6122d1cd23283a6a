"""
State schema for the identification graph.
"""

from typing import TypedDict
from typing_extensions import NotRequired


class IdentificationState(TypedDict):
    """
    State passed between the identification graph nodes.

    - config: ExperimentConfig driving the run
    - dataset: Dataset (generated or loaded)
    - model_set: Candidate ModelSet
    - truth_mask: Ground-truth mask when the data came with a sidecar
    - prediction: Validation prediction mode behind the criterion
    - reports: RunReports of all R runs, in run order
    - best: Index of the minimum-J run
    - model: IdentifiedModel refit from the best run
    - pruned: Model after t-test pruning
    - validity: CorrelationReport on validation residuals
    - summary: IdentificationSummary for summary.json
    """
    config: NotRequired[object]  # ExperimentConfig
    dataset: NotRequired[object]  # Dataset
    model_set: NotRequired[object]  # ModelSet
    truth_mask: NotRequired[object]  # np.ndarray or None
    sidecar: NotRequired[dict]  # Metadata written next to the data
    prediction: NotRequired[str]  # one_step or free_run
    reports: NotRequired[list]  # List[RunReport]
    best: NotRequired[int]
    model: NotRequired[object]  # IdentifiedModel
    pruned: NotRequired[object]  # IdentifiedModel
    validity: NotRequired[object]  # CorrelationReport
    summary: NotRequired[object]  # IdentificationSummary
