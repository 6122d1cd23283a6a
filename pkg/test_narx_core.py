#!/usr/bin/env python3
"""
Tests for the NARX fitness engine: term counting, model sets, least squares,
free-run simulation, NMSE and the BIC criterion.
"""

import math
import sys
from itertools import product
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from narx.benchmarks import SYSTEMS, simulate_system
from narx.core import (
    WORST_CRITERION,
    BicEvaluator,
    Dataset,
    IdentifiedModel,
    RegressorBank,
    TermSpec,
    bic_value,
    build_regressors,
    compute_nmse,
    count_terms,
    estimate_parameters,
    evaluate_bic,
    evaluate_term,
    generate_model_set,
    simulate_model,
)
from narx.errors import DatasetError, DegenerateDataError, ModelSetError, SingularFitError
from narx.utils import make_rng


def _linear_dataset(n=200, n_est=150, seed=3):
    """Noise-free y(k) = 0.5 y(k-1) + 0.3 u(k-1)."""
    u = make_rng(seed).uniform(-1, 1, n)
    y = np.zeros(n)
    for k in range(1, n):
        y[k] = 0.5 * y[k - 1] + 0.3 * u[k - 1]
    return Dataset(u, y, n_est)


def _brute_force_count(n_u, n_y, n_l):
    factors = [("y", i) for i in range(1, n_y + 1)] + [("u", i) for i in range(1, n_u + 1)]
    seen = set()
    for degree in range(n_l + 1):
        for combo in product(factors, repeat=degree):
            seen.add(tuple(sorted(combo)))
    return len(seen)


# ============================================================================
# TERM COUNTING AND MODEL SETS
# ============================================================================

def test_count_terms_reference_sizes():
    assert count_terms(4, 4, 3) == 165
    assert count_terms(5, 5, 3) == 286
    assert count_terms(7, 7, 3) == 680
    assert count_terms(1, 1, 1) == 3


def test_count_terms_matches_enumeration_grid():
    for n_u in range(1, 6):
        for n_y in range(1, 6):
            for n_l in range(1, 5):
                expected = count_terms(n_u, n_y, n_l)
                assert len(generate_model_set(n_u, n_y, n_l)) == expected
                assert _brute_force_count(n_u, n_y, n_l) == expected


def test_count_terms_rejects_zero():
    with pytest.raises(ModelSetError):
        count_terms(0, 4, 3)


def test_smallest_model_set_order():
    model_set = generate_model_set(1, 1, 1)
    assert model_set.labels() == ["c", "y(k-1)", "u(k-1)"]
    assert model_set[0].is_constant


def test_model_set_contains_mixed_term_once():
    model_set = generate_model_set(4, 4, 3)
    target = TermSpec((2,), (1, 1))
    assert sum(1 for t in model_set if t == target) == 1
    assert model_set.index_of(TermSpec.parse("y(k-2)*u(k-1)^2")) == model_set.index_of(target)


def test_model_set_is_degree_ordered_without_duplicates():
    model_set = generate_model_set(2, 3, 3)
    degrees = [t.degree for t in model_set]
    assert degrees == sorted(degrees)
    assert len(set(model_set.terms)) == len(model_set)


def test_term_label_and_parse():
    term = TermSpec((2,), (1, 1))
    assert term.label() == "y(k-2)*u(k-1)^2"
    assert TermSpec.parse("y(k-2)*u(k-1)^2") == term
    assert TermSpec.parse("c") == TermSpec()
    assert TermSpec.from_json({"y": [2], "u": [1, 1]}) == term
    with pytest.raises(ModelSetError):
        TermSpec.parse("z(k-1)")


def test_terms_are_canonical():
    assert TermSpec((3, 1), (2,)) == TermSpec((1, 3), (2,))


def test_mask_length_mismatch():
    model_set = generate_model_set(1, 1, 1)
    with pytest.raises(ModelSetError):
        model_set.decode([1, 0])


# ============================================================================
# REGRESSORS AND ESTIMATION
# ============================================================================

def test_evaluate_term_examples():
    assert evaluate_term(TermSpec(), [0.0], [0.0], 0) == 1.0
    assert evaluate_term(TermSpec((1,), ()), [0.0, 0.0], [2.0, 5.0], 1) == 2.0
    assert evaluate_term(TermSpec((2,), (1, 1)), [4, 5, 6], [1, 2, 3], 2) == 25.0


def test_evaluate_term_out_of_range():
    with pytest.raises(IndexError):
        evaluate_term(TermSpec((2,), ()), [1, 2, 3], [1, 2, 3], 1)


def test_estimate_parameters_exact_recovery():
    dataset = _linear_dataset()
    model_set = generate_model_set(1, 1, 1)
    theta = estimate_parameters(model_set, [0, 1, 1], dataset)
    assert theta == pytest.approx([0.5, 0.3], abs=1e-8)


def test_estimate_parameters_constant_output():
    u = make_rng(1).uniform(0, 1, 100)
    dataset = Dataset(u, np.full(100, 2.5), 70)
    theta = estimate_parameters(generate_model_set(1, 1, 1), [1, 0, 0], dataset)
    assert theta == pytest.approx([2.5])


def test_estimate_parameters_singular():
    u = make_rng(1).uniform(0, 1, 100)
    dataset = Dataset(u, np.zeros(100), 70)
    with pytest.raises(SingularFitError):
        estimate_parameters(generate_model_set(1, 1, 1), [0, 1, 0], dataset)


def test_estimate_parameters_empty_structure():
    with pytest.raises(ModelSetError):
        estimate_parameters(generate_model_set(1, 1, 1), [0, 0, 0], _linear_dataset())


def test_least_squares_residuals_are_orthogonal():
    spec = SYSTEMS["S2"]
    dataset = simulate_system(spec, seed=11)
    model_set = generate_model_set(4, 4, 3)
    mask = spec.true_mask(model_set)
    mask[model_set.index_of(TermSpec.parse("y(k-3)"))] = 1
    theta = estimate_parameters(model_set, mask, dataset)
    rows = np.arange(model_set.max_lag, dataset.n_est)
    X = build_regressors(model_set.decode(mask), dataset.u, dataset.y, rows)
    residual = dataset.y[rows] - X @ theta
    for j in range(X.shape[1]):
        column = X[:, j]
        assert abs(column @ residual) < 1e-6 * np.linalg.norm(column) * np.linalg.norm(residual)


def test_s1_coefficients_recovered():
    spec = SYSTEMS["S1"]
    dataset = simulate_system(spec, seed=5)
    model_set = generate_model_set(4, 4, 3)
    theta = estimate_parameters(model_set, spec.true_mask(model_set), dataset)
    expected = dict(zip(spec.true_terms, spec.true_coefficients))
    for term, value in zip(model_set.decode(spec.true_mask(model_set)), theta):
        assert value == pytest.approx(expected[term], abs=0.05)


# ============================================================================
# SIMULATION AND ERROR MEASURES
# ============================================================================

def _model(model_set, labels, coefficients):
    return IdentifiedModel(model_set, model_set.mask_from_terms(labels), np.asarray(coefficients, dtype=float))


def test_simulate_geometric_decay():
    model = _model(generate_model_set(1, 1, 1), ["y(k-1)"], [0.5])
    y_hat, diverged = simulate_model(model, np.zeros(4), [1.0])
    assert not diverged
    assert y_hat == pytest.approx([1.0, 0.5, 0.25, 0.125])


def test_simulate_zero_coefficients():
    model = _model(generate_model_set(1, 1, 1), ["y(k-1)", "u(k-1)"], [0.0, 0.0])
    y_hat, _ = simulate_model(model, np.ones(6), [3.0])
    assert y_hat[0] == 3.0
    assert np.all(y_hat[1:] == 0.0)


def test_simulate_without_feedback_is_input_polynomial():
    model_set = generate_model_set(2, 1, 2)
    model = _model(model_set, ["u(k-1)", "u(k-1)^2"], [0.7, -0.2])
    u = make_rng(4).uniform(-1, 1, 30)
    y_hat, _ = simulate_model(model, u, [0.0])
    expected = 0.7 * u[:-1] - 0.2 * u[:-1] ** 2
    assert y_hat[1:] == pytest.approx(expected)


def test_simulate_flags_divergence():
    model = _model(generate_model_set(1, 1, 1), ["y(k-1)"], [3.0])
    y_hat, diverged = simulate_model(model, np.zeros(40), [1.0])
    assert diverged
    assert len(y_hat) < 40
    assert np.max(np.abs(y_hat)) <= 1e6 * 2


def test_simulate_needs_enough_seed():
    model = _model(generate_model_set(1, 2, 1), ["y(k-2)"], [0.5])
    with pytest.raises(DatasetError):
        simulate_model(model, np.zeros(5), [1.0])


def test_compute_nmse_examples():
    y = np.array([0.0, 1.0, 2.0])
    assert compute_nmse(y, y) == 0.0
    assert compute_nmse(y, np.full(3, y.mean())) == pytest.approx(1.0)
    assert compute_nmse(y, [0.0, 1.0, 4.0]) == pytest.approx(2.0)


def test_compute_nmse_constant_output():
    with pytest.raises(DegenerateDataError):
        compute_nmse([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


# ============================================================================
# BIC
# ============================================================================

def test_bic_value_examples():
    assert bic_value(1.0, 0, 300) == 0.0
    assert bic_value(math.e, 5, 300) == pytest.approx(328.52, abs=0.01)


def test_bic_cardinality_increment():
    for xi in range(0, 20):
        step = bic_value(0.37, xi + 1, 300) - bic_value(0.37, xi, 300)
        assert step == pytest.approx(math.log(300), abs=1e-9)


def test_bic_error_floor():
    assert math.isfinite(bic_value(0.0, 2, 300))


def test_evaluate_bic_sentinels():
    dataset = _linear_dataset()
    model_set = generate_model_set(1, 1, 1)
    assert evaluate_bic(model_set, [0, 0, 0], dataset) == WORST_CRITERION
    zero_output = Dataset(dataset.u, np.zeros(len(dataset)), dataset.n_est)
    assert evaluate_bic(model_set, [0, 1, 0], zero_output) == WORST_CRITERION
    unstable = _model(model_set, ["y(k-1)"], [3.0])
    assert simulate_model(unstable, np.zeros(60), [1.0])[1]


def test_evaluate_bic_is_deterministic():
    dataset = simulate_system(SYSTEMS["S3"], seed=2)
    model_set = generate_model_set(4, 4, 3)
    mask = SYSTEMS["S3"].true_mask(model_set)
    assert evaluate_bic(model_set, mask, dataset) == evaluate_bic(model_set, mask, dataset)


def test_true_structure_beats_one_spurious_term():
    spec = SYSTEMS["S2"]
    dataset = simulate_system(spec, seed=21)
    model_set = generate_model_set(4, 4, 3)
    evaluator = BicEvaluator(RegressorBank(model_set, dataset))
    truth = spec.true_mask(model_set)
    j_true = evaluator.criterion(truth)
    wins = 0
    spurious = np.flatnonzero(truth == 0)
    for i in spurious:
        mask = truth.copy()
        mask[i] = 1
        wins += j_true < evaluator.criterion(mask)
    assert wins >= 0.95 * spurious.size


def test_truth_is_a_local_minimum_on_every_system():
    model_set = generate_model_set(4, 4, 3)
    for system_id in ("S1", "S2", "S3", "S4", "S5", "S6"):
        spec = SYSTEMS[system_id]
        evaluator = BicEvaluator(RegressorBank(model_set, simulate_system(spec, seed=0)))
        truth = spec.true_mask(model_set)
        j_true = evaluator.criterion(truth)
        wins = 0
        for i in range(len(model_set)):
            neighbour = truth.copy()
            neighbour[i] ^= 1
            wins += j_true < evaluator.criterion(neighbour)
        assert wins >= 0.95 * len(model_set), system_id


def test_one_step_criterion_prefers_s4_truth_over_smoothed_structure():
    spec = SYSTEMS["S4"]
    dataset = simulate_system(spec, seed=1)
    model_set = generate_model_set(4, 4, 3)
    smoothed = model_set.mask_from_terms(["y(k-2)", "u(k-1)", "u(k-2)", "u(k-1)^2*u(k-3)"])
    truth = spec.true_mask(model_set)
    assert evaluate_bic(model_set, truth, dataset) < evaluate_bic(model_set, smoothed, dataset)


def test_prediction_modes_score_divergent_coefficients_differently():
    model_set = generate_model_set(1, 1, 1)
    bank = RegressorBank(model_set, _linear_dataset())
    idx = np.array([1])
    theta = np.array([3.0])
    assert math.isfinite(BicEvaluator(bank, "one_step").validation_error(idx, theta))
    assert BicEvaluator(bank, "free_run").validation_error(idx, theta) == math.inf


def test_evaluate_bic_defaults_to_one_step():
    spec = SYSTEMS["S1"]
    dataset = simulate_system(spec, seed=4)
    model_set = generate_model_set(2, 2, 2)
    mask = spec.true_mask(model_set)
    assert evaluate_bic(model_set, mask, dataset) == evaluate_bic(model_set, mask, dataset, "one_step")
    assert evaluate_bic(model_set, mask, dataset) != evaluate_bic(model_set, mask, dataset, "free_run")


def test_unknown_prediction_mode_is_rejected():
    bank = RegressorBank(generate_model_set(1, 1, 1), _linear_dataset())
    with pytest.raises(ValueError):
        BicEvaluator(bank, "two_step")


def test_evaluator_counts_every_call():
    dataset = _linear_dataset()
    evaluator = BicEvaluator(RegressorBank(generate_model_set(1, 1, 1), dataset))
    first = evaluator([0, 1, 1])
    second = evaluator([0, 1, 1])
    evaluator([0, 0, 0])
    assert first == second
    assert evaluator.calls == 3


def test_evaluator_fit_reports_nmse():
    dataset = _linear_dataset()
    evaluator = BicEvaluator(RegressorBank(generate_model_set(1, 1, 1), dataset))
    model = evaluator.fit([0, 1, 1])
    assert model.coefficients == pytest.approx([0.5, 0.3], abs=1e-8)
    assert model.nmse < 1e-12
    assert model.criterion < 0


# ============================================================================
# DATASET
# ============================================================================

def test_dataset_split_views():
    dataset = _linear_dataset(n=1000, n_est=700)
    assert dataset.n_val == 300
    assert len(dataset.validation[1]) == 300


def test_dataset_rejects_bad_split():
    with pytest.raises(DatasetError):
        Dataset(np.zeros(10), np.zeros(10), 10)
    with pytest.raises(DatasetError):
        Dataset(np.zeros(10), np.zeros(9), 5)


def test_dataset_csv_file(tmp_path):
    dataset = _linear_dataset()
    path = dataset.to_csv(tmp_path / "data.csv")
    assert path.read_text().splitlines()[0] == "k,u,y"
    loaded = Dataset.from_csv(path, dataset.n_est)
    assert np.array_equal(loaded.u, dataset.u)
    assert np.array_equal(loaded.y, dataset.y)


def test_dataset_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("k,u\n0,1.0\n1,2.0\n")
    with pytest.raises(DatasetError):
        Dataset.from_csv(path, 1)
