"""
Post-search evaluation.

Outcome classification against a known structure, term selection frequency,
t-test pruning of spurious terms, residual correlation validity tests and
run aggregation.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats
from scipy.linalg import solve_triangular

from .core import (
    DIVERGENCE_FACTOR,
    BicEvaluator,
    Dataset,
    IdentifiedModel,
    ModelSet,
    PredictionMode,
    RegressorBank,
    as_mask,
    build_regressors,
    simulate_model,
)
from .errors import ConfigError, DatasetError, DegenerateDataError, DivergenceError, SingularFitError
from .reports import RunReport

logger = logging.getLogger(__name__)

EXACT = "ExactFitting"
OVER = "OverFitting"
UNDER_1 = "UnderFitting1"
UNDER_2 = "UnderFitting2"
OUTCOME_KINDS = (EXACT, OVER, UNDER_1, UNDER_2)

CORRELATION_TESTS = ("ee", "ue", "e_eu", "u2_e", "u2_e2")


# ============================================================================
# OUTCOMES AND FREQUENCY
# ============================================================================

@dataclass
class SearchOutcome:
    """
    Found structure compared with the true one.

    spurious and missing hold TermSpecs when a model set was supplied to
    classify_outcome, otherwise mask indices.
    """
    kind: str
    spurious: list
    missing: list


def classify_outcome(found, truth, model_set: Optional[ModelSet] = None) -> SearchOutcome:
    truth = as_mask(truth)
    found = as_mask(found, truth.shape[0])
    spurious = np.flatnonzero(found & (1 - truth)).tolist()
    missing = np.flatnonzero(truth & (1 - found)).tolist()
    if not missing:
        kind = OVER if spurious else EXACT
    else:
        kind = UNDER_2 if spurious else UNDER_1
    if model_set is not None:
        spurious = [model_set[i] for i in spurious]
        missing = [model_set[i] for i in missing]
    return SearchOutcome(kind, spurious, missing)


@dataclass
class FrequencyReport:
    nu: np.ndarray
    runs: int

    def to_frame(self, model_set: ModelSet) -> pd.DataFrame:
        return pd.DataFrame({"term": model_set.labels(), "nu": self.nu})


def selection_frequency(runs: Sequence, R: Optional[int] = None) -> FrequencyReport:
    """Fraction of runs selecting each term."""
    R = len(runs) if R is None else R
    if R < 1 or len(runs) != R:
        raise DatasetError(f"expected {R} run masks, got {len(runs)}")
    masks = np.array([as_mask(m) for m in runs])
    return FrequencyReport(nu=masks.sum(axis=0) / R, runs=R)


# ============================================================================
# PRUNING
# ============================================================================

def coefficient_p_values(X: np.ndarray, target: np.ndarray):
    """
    LS fit with two-sided t-test p-values of every coefficient.

    Returns:
        Tuple of (theta, p_values)

    Raises:
        SingularFitError: If X is rank deficient or has no residual degrees of freedom
    """
    rows, cols = X.shape
    if rows <= cols:
        raise SingularFitError(f"{cols} terms need more than {rows} estimation rows")
    Q, R = np.linalg.qr(X, mode="reduced")
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0.0) or np.any(np.abs(np.diag(R)) <= 1e-10 * norms):
        raise SingularFitError("regressor matrix is rank deficient")
    theta = solve_triangular(R, Q.T @ target)
    residual = target - X @ theta
    dof = rows - cols
    s2 = float(residual @ residual) / dof
    R_inv = solve_triangular(R, np.eye(cols))
    se = np.sqrt(s2 * np.sum(R_inv ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, np.abs(theta) / se, np.inf)
    p_values = 2.0 * stats.t.sf(t, dof)
    return theta, p_values


def prune_spurious(
    model: IdentifiedModel,
    dataset: Dataset,
    alpha_level: float = 0.05,
    bank: Optional[RegressorBank] = None,
    prediction: PredictionMode = "one_step",
) -> IdentifiedModel:
    """
    Backward elimination of insignificant terms.

    Repeatedly removes the term with the largest p-value above alpha_level
    and refits, until every remaining coefficient is significant. At least one
    term always remains.

    Raises:
        SingularFitError: If a refit is rank deficient
    """
    if not 0.0 < alpha_level < 1.0:
        raise ConfigError(f"alpha_level must lie in (0, 1), got {alpha_level}")
    model_set = model.model_set
    bank = bank or RegressorBank(model_set, dataset)
    mask = model.mask.copy()
    if mask.sum() == 0:
        return model
    removed = []
    while True:
        idx = np.flatnonzero(mask)
        _, p_values = coefficient_p_values(bank.X_est[:, idx], bank.y_est)
        worst = int(np.argmax(p_values))
        if p_values[worst] <= alpha_level or idx.size == 1:
            break
        mask[idx[worst]] = 0
        removed.append(model_set[idx[worst]].label())
    if removed:
        logger.debug(f"Pruned {len(removed)} term(s): {', '.join(removed)}")
    return BicEvaluator(bank, prediction).fit(mask)


# ============================================================================
# CORRELATION VALIDITY TESTS
# ============================================================================

def _centered(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float) - np.mean(x)
    if not np.any(x):
        raise DegenerateDataError(f"{name} is constant; correlation undefined")
    return x


def cross_correlation(a: np.ndarray, b: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    """
    Biased normalized correlation sum_k a(k) b(k + lag) / sqrt(sum a^2 sum b^2)
    of two centered sequences.
    """
    n = a.shape[0]
    scale = math.sqrt(float(a @ a) * float(b @ b))
    return np.array([float(a[: n - lag] @ b[lag:]) / scale for lag in lags])


@dataclass
class CorrelationReport:
    lags: np.ndarray
    values: Dict[str, np.ndarray]
    band: float
    within_band: Dict[str, bool] = field(default_factory=dict)
    passes: Dict[str, bool] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return all(self.passes.values())

    def to_frame(self) -> pd.DataFrame:
        frames = [
            pd.DataFrame({"test": name, "lag": self.lags, "value": self.values[name], "band": self.band})
            for name in CORRELATION_TESTS
        ]
        return pd.concat(frames, ignore_index=True)

    def summary(self) -> pd.DataFrame:
        """One row per test: the binomial verdict next to the strict in-band flag."""
        return pd.DataFrame({
            "test": list(CORRELATION_TESTS),
            "passes": [bool(self.passes.get(name, False)) for name in CORRELATION_TESTS],
            "within_band": [bool(self.within_band.get(name, False)) for name in CORRELATION_TESTS],
        })


def correlation_tests(
    residuals: Sequence[float],
    u: Sequence[float],
    y_hat: Optional[Sequence[float]] = None,
    max_lag: int = 20,
) -> CorrelationReport:
    """
    Five residual correlation tests with the 95% confidence band 1.96/sqrt(N).

    ee:    e(k) against e(k + tau)            (lag 0 is 1 and not tested)
    ue:    u(k) against e(k + tau)
    e_eu:  e(k) against e(k - 1 - tau) u(k - 1 - tau)
    u2_e:  u^2(k) - mean against e(k + tau)
    u2_e2: u^2(k) - mean against e^2(k + tau) - mean

    within_band is the strict "every tested value inside the band" flag. A
    test passes when no value exceeds twice the band and the number of
    excursions beyond the band stays within the 99th percentile of
    Binomial(tested lags, 0.05).
    """
    e_raw = np.asarray(residuals, dtype=float).ravel()
    u_raw = np.asarray(u, dtype=float).ravel()
    n = e_raw.shape[0]
    if u_raw.shape[0] != n:
        raise DatasetError(f"residuals and u lengths differ ({n} vs {u_raw.shape[0]})")
    if y_hat is not None and len(y_hat) != n:
        raise DatasetError(f"residuals and y_hat lengths differ ({n} vs {len(y_hat)})")
    if max_lag < 1 or n < 4 * max_lag:
        raise DatasetError(f"need at least {4 * max_lag} samples for max_lag={max_lag}, got {n}")

    e = _centered(e_raw, "residual sequence")
    uc = _centered(u_raw, "input sequence")
    u2 = _centered(u_raw ** 2, "squared input")
    e2 = _centered(e_raw ** 2, "squared residual")
    eu = _centered(e_raw * u_raw, "residual-input product")

    lags = np.arange(0, max_lag + 1)
    values = {
        "ee": cross_correlation(e, e, lags),
        "ue": cross_correlation(uc, e, lags),
        "e_eu": cross_correlation(eu, e, lags + 1),
        "u2_e": cross_correlation(u2, e, lags),
        "u2_e2": cross_correlation(u2, e2, lags),
    }
    band = 1.96 / math.sqrt(n)
    report = CorrelationReport(lags=lags, values=values, band=band)
    for name, series in values.items():
        tested = np.abs(series[1:] if name == "ee" else series)
        excursions = int(np.sum(tested > band))
        allowed = int(stats.binom.ppf(0.99, tested.shape[0], 0.05))
        report.within_band[name] = excursions == 0
        report.passes[name] = bool(np.all(tested <= 2.0 * band) and excursions <= allowed)
    logger.debug(f"Correlation tests: {report.passes}")
    return report


def validation_residuals(model: IdentifiedModel, dataset: Dataset, prediction: PredictionMode = "one_step") -> np.ndarray:
    """
    Residuals of a model over the validation segment.

    one_step predicts from measured lagged outputs; free_run simulates from
    the last measured estimation outputs.

    Raises:
        DivergenceError: If the free run leaves the divergence bound
    """
    rows = np.arange(dataset.n_est, len(dataset))
    if prediction == "one_step":
        X = build_regressors(model.terms, dataset.u, dataset.y, rows)
        return dataset.y[rows] - X @ model.coefficients
    p = model.model_set.max_lag
    bound = DIVERGENCE_FACTOR * (1.0 + float(np.max(np.abs(dataset.y))))
    seed = dataset.y[dataset.n_est - p: dataset.n_est]
    y_hat, diverged = simulate_model(model, dataset.u[dataset.n_est - p:], seed, bound)
    if diverged:
        raise DivergenceError(f"free run of the {model.xi}-term model diverged over the validation segment")
    return dataset.y[rows] - y_hat[p:]


# ============================================================================
# AGGREGATION
# ============================================================================

@dataclass
class OutcomeTally:
    counts: Dict[str, int]
    outcomes: List[SearchOutcome]
    pre_masks: List[np.ndarray]
    post_masks: List[np.ndarray]

    @property
    def runs(self) -> int:
        return len(self.outcomes)

    def to_frame(self, system: str, algorithm: str) -> pd.DataFrame:
        rows = [
            {"system": system, "algorithm": algorithm, "kind": kind, "count": self.counts[kind]}
            for kind in OUTCOME_KINDS
            if self.counts[kind]
        ]
        return pd.DataFrame(rows, columns=["system", "algorithm", "kind", "count"])


def aggregate_outcomes(
    reports: Sequence[RunReport],
    truth,
    alpha_level: float,
    dataset: Dataset,
    model_set: ModelSet,
    prune: bool = True,
) -> OutcomeTally:
    """
    Prune every run's model, classify it against the truth and tally the kinds.

    A run whose pruning refit is singular is classified unpruned.
    """
    if not reports:
        raise DatasetError("no run reports to aggregate")
    truth = as_mask(truth, len(model_set))
    bank = RegressorBank(model_set, dataset)
    counts = {kind: 0 for kind in OUTCOME_KINDS}
    outcomes, pre_masks, post_masks = [], [], []
    for i, report in enumerate(reports):
        model = report.to_model(model_set)
        pruned = model
        if prune and model.xi > 0:
            try:
                pruned = prune_spurious(model, dataset, alpha_level, bank=bank)
            except SingularFitError as e:
                logger.warning(f"Run {i}: pruning refit failed ({e}); classifying unpruned")
        outcome = classify_outcome(pruned.mask, truth, model_set)
        counts[outcome.kind] += 1
        outcomes.append(outcome)
        pre_masks.append(model.mask)
        post_masks.append(pruned.mask)
    return OutcomeTally(counts, outcomes, pre_masks, post_masks)


def average_convergence(reports: Sequence[RunReport]) -> pd.DataFrame:
    """Mean best J and mean best cardinality per iteration over runs."""
    rows = [
        {"run": r, "iter": point.iter, "J": point.J, "xi": point.xi}
        for r, report in enumerate(reports)
        for point in report.trace
    ]
    if not rows:
        return pd.DataFrame(columns=["iter", "mean_J", "mean_xi", "runs"])
    frame = pd.DataFrame(rows)
    grouped = frame.groupby("iter")
    return pd.DataFrame({
        "iter": grouped.size().index.to_numpy(),
        "mean_J": grouped["J"].mean().to_numpy(),
        "mean_xi": grouped["xi"].mean().to_numpy(),
        "runs": grouped.size().to_numpy(),
    })
