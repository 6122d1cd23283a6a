#!/usr/bin/env python3
"""
Tests for outcome classification, selection frequency, t-test pruning,
correlation validity tests and run aggregation.
"""

import sys
from itertools import product
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from narx.benchmarks import SYSTEMS, simulate_system
from narx.core import BicEvaluator, Dataset, IdentifiedModel, RegressorBank, TermSpec, generate_model_set
from narx.errors import DatasetError, DegenerateDataError, DivergenceError
from narx.reports import TracePoint, build_run_report
from narx.utils import make_rng
from narx.validation import (
    CORRELATION_TESTS,
    EXACT,
    OUTCOME_KINDS,
    OVER,
    UNDER_1,
    UNDER_2,
    aggregate_outcomes,
    average_convergence,
    classify_outcome,
    correlation_tests,
    prune_spurious,
    selection_frequency,
    validation_residuals,
)

MODEL_SET = generate_model_set(4, 4, 3)


def _report(evaluator, mask, seed=0, trace=None):
    return build_run_report("2d-upso", seed, {}, evaluator.fit(mask), trace or [], 1)


# ============================================================================
# OUTCOMES
# ============================================================================

def test_classify_examples():
    assert classify_outcome([1, 1, 0], [1, 1, 0]).kind == EXACT
    assert classify_outcome([1, 1, 1], [1, 1, 0]).kind == OVER
    outcome = classify_outcome([1, 0, 0], [0, 1, 0])
    assert outcome.kind == UNDER_2
    assert outcome.spurious == [0]
    assert outcome.missing == [1]


def test_classify_reports_terms_with_model_set():
    model_set = generate_model_set(1, 1, 1)
    outcome = classify_outcome([0, 1, 0], [0, 1, 1], model_set)
    assert outcome.kind == UNDER_1
    assert outcome.missing == [TermSpec((), (1,))]


def test_outcome_taxonomy_is_total_and_exclusive():
    for found in product((0, 1), repeat=4):
        for truth in product((0, 1), repeat=4):
            outcome = classify_outcome(found, truth)
            assert outcome.kind in OUTCOME_KINDS
            spurious, missing = bool(outcome.spurious), bool(outcome.missing)
            expected = {
                (False, False): EXACT,
                (True, False): OVER,
                (False, True): UNDER_1,
                (True, True): UNDER_2,
            }[(spurious, missing)]
            assert outcome.kind == expected


def test_selection_frequency():
    runs = [[1, 1, 0]] * 26 + [[1, 0, 0]] * 14
    report = selection_frequency(runs, 40)
    assert report.nu.tolist() == pytest.approx([1.0, 0.65, 0.0])
    shuffled = [runs[i] for i in make_rng(0).permutation(40)]
    assert np.array_equal(selection_frequency(shuffled, 40).nu, report.nu)
    with pytest.raises(DatasetError):
        selection_frequency(runs, 39)


# ============================================================================
# PRUNING
# ============================================================================

def test_noise_free_model_is_not_pruned():
    spec = SYSTEMS["S3"]
    dataset = simulate_system(spec, seed=1, noise=False)
    evaluator = BicEvaluator(RegressorBank(MODEL_SET, dataset))
    model = evaluator.fit(spec.true_mask(MODEL_SET))
    assert np.array_equal(prune_spurious(model, dataset).mask, model.mask)


def test_spurious_term_is_pruned():
    spec = SYSTEMS["S1"]
    truth = spec.true_mask(MODEL_SET)
    padded = truth.copy()
    padded[MODEL_SET.index_of(TermSpec.parse("u(k-3)"))] = 1
    successes = 0
    for seed in range(20):
        dataset = simulate_system(spec, seed=100 + seed)
        model = BicEvaluator(RegressorBank(MODEL_SET, dataset)).fit(padded)
        successes += np.array_equal(prune_spurious(model, dataset, 0.05).mask, truth)
    assert successes >= 18


def test_tiny_significance_level_keeps_one_term():
    rng = make_rng(5)
    dataset = Dataset(rng.uniform(-1, 1, 400), rng.normal(0, 1, 400), 300)
    model_set = generate_model_set(2, 2, 1)
    model = BicEvaluator(RegressorBank(model_set, dataset)).fit([1, 1, 1, 1, 1])
    pruned = prune_spurious(model, dataset, 1e-12)
    assert pruned.xi == 1


def test_pruning_is_idempotent():
    spec = SYSTEMS["S2"]
    dataset = simulate_system(spec, seed=8)
    evaluator = BicEvaluator(RegressorBank(MODEL_SET, dataset))
    mask = spec.true_mask(MODEL_SET)
    mask[[40, 80, 120]] = 1
    once = prune_spurious(evaluator.fit(mask), dataset)
    twice = prune_spurious(once, dataset)
    assert np.array_equal(once.mask, twice.mask)
    assert once.coefficients == pytest.approx(twice.coefficients)


# ============================================================================
# CORRELATION TESTS
# ============================================================================

def test_autocorrelation_is_one_at_lag_zero():
    rng = make_rng(2)
    report = correlation_tests(rng.normal(size=500), rng.uniform(size=500), max_lag=20)
    assert report.values["ee"][0] == pytest.approx(1.0)
    assert len(report.to_frame()) == 5 * 21


def test_white_residuals_pass():
    passed = 0
    for seed in range(20):
        rng = make_rng(seed)
        report = correlation_tests(rng.normal(size=1000), rng.uniform(-1, 1, 1000), max_lag=20)
        passed += report.valid
    assert passed >= 18


def test_input_in_residuals_fails_cross_test():
    u_full = make_rng(3).uniform(-1, 1, 1001)
    residuals, u = u_full[:-1], u_full[1:]
    report = correlation_tests(residuals, u, max_lag=20)
    assert report.values["ue"][1] > 0.9
    assert not report.within_band["ue"]
    assert not report.passes["ue"]
    assert not report.valid


def test_summary_lists_every_test_once():
    u_full = make_rng(3).uniform(-1, 1, 1001)
    report = correlation_tests(u_full[:-1], u_full[1:], max_lag=20)
    frame = report.summary()
    assert list(frame.columns) == ["test", "passes", "within_band"]
    assert list(frame["test"]) == list(CORRELATION_TESTS)
    row = frame.set_index("test").loc["ue"]
    assert not row["passes"] and not row["within_band"]


def test_validation_residuals_by_prediction_mode():
    spec = SYSTEMS["S7"]
    dataset = simulate_system(spec, n=400, n_est=280, seed=2)
    model_set = generate_model_set(2, 2, 3)
    model = BicEvaluator(RegressorBank(model_set, dataset)).fit(spec.true_mask(model_set))
    one_step = validation_residuals(model, dataset, "one_step")
    assert one_step.shape == (120,)
    # no output lags: the free run sees the same regressors
    assert validation_residuals(model, dataset, "free_run") == pytest.approx(one_step, abs=1e-9)


def test_free_run_residuals_report_divergence():
    dataset = simulate_system(SYSTEMS["S1"], n=200, n_est=150, seed=0)
    model_set = generate_model_set(1, 1, 1)
    unstable = IdentifiedModel(model_set, np.array([0, 1, 0], dtype=np.int8), np.array([3.0]))
    assert np.all(np.isfinite(validation_residuals(unstable, dataset, "one_step")))
    with pytest.raises(DivergenceError):
        validation_residuals(unstable, dataset, "free_run")


def test_correlation_input_checks():
    rng = make_rng(4)
    with pytest.raises(DatasetError):
        correlation_tests(rng.normal(size=50), rng.normal(size=50), max_lag=20)
    with pytest.raises(DatasetError):
        correlation_tests(rng.normal(size=100), rng.normal(size=100), rng.normal(size=99), max_lag=10)
    with pytest.raises(DegenerateDataError):
        correlation_tests(np.ones(100), rng.normal(size=100), max_lag=10)


# ============================================================================
# AGGREGATION
# ============================================================================

def test_all_exact_runs():
    spec = SYSTEMS["S1"]
    dataset = simulate_system(spec, seed=3)
    evaluator = BicEvaluator(RegressorBank(MODEL_SET, dataset))
    truth = spec.true_mask(MODEL_SET)
    reports = [_report(evaluator, truth, seed) for seed in range(5)]
    tally = aggregate_outcomes(reports, truth, 0.05, dataset, MODEL_SET)
    assert tally.counts == {EXACT: 5, OVER: 0, UNDER_1: 0, UNDER_2: 0}
    frame = tally.to_frame("S1", "2d-upso")
    assert frame.to_dict("records") == [{"system": "S1", "algorithm": "2d-upso", "kind": EXACT, "count": 5}]


def test_mixed_runs_match_hand_tally():
    spec = SYSTEMS["S1"]
    dataset = simulate_system(spec, seed=4)
    evaluator = BicEvaluator(RegressorBank(MODEL_SET, dataset))
    truth = spec.true_mask(MODEL_SET)
    true_idx = np.flatnonzero(truth)
    over = truth.copy()
    over[50] = 1
    under = truth.copy()
    under[true_idx[0]] = 0
    both = under.copy()
    both[50] = 1
    masks = [truth, over, under, both, truth]
    reports = [_report(evaluator, m) for m in masks]
    tally = aggregate_outcomes(reports, truth, 0.05, dataset, MODEL_SET, prune=False)
    assert tally.counts == {EXACT: 2, OVER: 1, UNDER_1: 1, UNDER_2: 1}
    assert sum(tally.counts.values()) == tally.runs == 5
    assert [m.tolist() for m in tally.pre_masks] == [m.tolist() for m in masks]


def test_average_convergence():
    spec = SYSTEMS["S1"]
    dataset = simulate_system(spec, seed=5)
    evaluator = BicEvaluator(RegressorBank(MODEL_SET, dataset))
    mask = spec.true_mask(MODEL_SET)
    first = _report(evaluator, mask, trace=[TracePoint(iter=0, J=10.0, xi=4), TracePoint(iter=1, J=6.0, xi=2)])
    second = _report(evaluator, mask, trace=[TracePoint(iter=0, J=20.0, xi=6), TracePoint(iter=1, J=8.0, xi=4)])
    frame = average_convergence([first, second])
    assert frame["iter"].tolist() == [0, 1]
    assert frame["mean_J"].tolist() == [15.0, 7.0]
    assert frame["mean_xi"].tolist() == [5.0, 3.0]
