#!/usr/bin/env python3
"""
Tests for the comparison searchers: binary GA, binary PSO, OFR-ERR and the
exhaustive oracle.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from narx.baselines import (
    _ofr_pass,
    exhaustive_search,
    ofr_report,
    ofr_threshold_table,
    run_bpso,
    run_ga,
    run_ofr_err,
    sample_bits,
)
from narx.benchmarks import SYSTEMS, simulate_system
from narx.config import BpsoConfig, GaConfig, OfrConfig
from narx.core import Dataset, RegressorBank, TermSpec, estimate_parameters, generate_model_set
from narx.errors import ModelSetError
from narx.utils import make_rng


def _toy_dataset(n=300, n_est=200, seed=0):
    rng = make_rng(seed)
    u = rng.uniform(-1, 1, n)
    e = rng.normal(0, 0.02, n)
    y = np.zeros(n)
    for k in range(1, n):
        y[k] = 0.5 * y[k - 1] + 0.3 * u[k - 1] + e[k]
    return Dataset(u, y, n_est)


@pytest.fixture(scope="module")
def s4_dataset():
    return simulate_system(SYSTEMS["S4"], seed=7)


# ============================================================================
# GA
# ============================================================================

def test_ga_solves_toy_problem():
    dataset = _toy_dataset()
    model_set = generate_model_set(1, 1, 1)
    best_mask, _ = exhaustive_search(dataset, model_set)
    config = GaConfig(population=10, max_fes=200)
    for seed in range(10):
        assert run_ga(dataset, model_set, config, seed).best_mask == best_mask.tolist()


def test_ga_without_variation_keeps_population():
    dataset = _toy_dataset()
    model_set = generate_model_set(1, 1, 1)
    config = GaConfig(population=6, p_c=0.0, p_m=0.0, max_fes=60)
    population = np.tile([1, 0, 1], (6, 1))
    report = run_ga(dataset, model_set, config, 1, initial_population=population)
    assert report.best_mask == [1, 0, 1]


def test_ga_elitism_and_budget():
    dataset = simulate_system(SYSTEMS["S1"], seed=2)
    model_set = generate_model_set(2, 2, 2)
    report = run_ga(dataset, model_set, GaConfig(population=12, max_fes=250), 3)
    values = [p.J for p in report.trace]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert report.fes_used == 250
    assert report.algorithm == "ga"


# ============================================================================
# BPSO
# ============================================================================

def test_bpso_solves_toy_problem():
    dataset = _toy_dataset()
    model_set = generate_model_set(1, 1, 1)
    best_mask, _ = exhaustive_search(dataset, model_set)
    config = BpsoConfig(ps=10, max_fes=300)
    for seed in range(10):
        assert run_bpso(dataset, model_set, config, seed).best_mask == best_mask.tolist()


def test_bpso_transfer_endpoint_density():
    bits = sample_bits(np.full(200_000, -6.0), make_rng(0))
    assert bits.mean() == pytest.approx(0.0025, abs=0.0005)


def test_bpso_budget_is_exact():
    dataset = _toy_dataset()
    report = run_bpso(dataset, generate_model_set(2, 2, 2), BpsoConfig(ps=9, max_fes=100), 5)
    assert report.fes_used == 100


def test_bpso_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        BpsoConfig(v_min=6.0, v_max=-6.0)


# ============================================================================
# OFR-ERR
# ============================================================================

def test_ofr_single_term_system():
    u = make_rng(3).uniform(-1, 1, 300)
    y = np.concatenate([[0.0], 2.0 * u[:-1]])
    dataset = Dataset(u, y, 200)
    model_set = generate_model_set(2, 2, 2)
    mask, sequence = run_ofr_err(dataset, model_set, OfrConfig(sigma=0.01))
    first_term, first_err = sequence[0]
    assert first_term == TermSpec((), (1,))
    assert first_err == pytest.approx(1.0, abs=1e-6)
    assert mask.sum() == 1


def test_ofr_err_values_and_determinism(s4_dataset):
    model_set = generate_model_set(4, 4, 3)
    config = OfrConfig(sigma=0.005)
    mask_a, seq_a = run_ofr_err(s4_dataset, model_set, config)
    mask_b, seq_b = run_ofr_err(s4_dataset, model_set, config)
    assert np.array_equal(mask_a, mask_b)
    assert [t for t, _ in seq_a] == [t for t, _ in seq_b]
    errs = np.array([e for _, e in seq_a])
    assert np.all((errs >= 0) & (errs <= 1))
    assert np.all(np.diff(np.cumsum(errs)) >= 0)
    assert np.sum(errs) <= 1 + 1e-9


def test_ofr_back_substitution_matches_least_squares(s4_dataset):
    model_set = generate_model_set(4, 4, 3)
    result = _ofr_pass(RegressorBank(model_set, s4_dataset), OfrConfig(sigma=0.01))
    theta = estimate_parameters(model_set, result.mask, s4_dataset)
    assert result.coefficients == pytest.approx(theta, rel=1e-6, abs=1e-8)


def test_ofr_threshold_sensitivity(s4_dataset):
    model_set = generate_model_set(4, 4, 3)
    truth = SYSTEMS["S4"].true_mask(model_set)
    table = ofr_threshold_table(s4_dataset, model_set, [0.01, 0.0065], truth)
    assert list(table["sigma"]) == [0.01, 0.0065]
    assert "u(k-3)^3" in table.columns
    loose, tight = table.iloc[0], table.iloc[1]
    assert not loose["u(k-3)^3"]
    assert tight["u(k-3)^3"]
    assert not tight["capped"]
    assert tight["n_terms"] < 60
    assert tight["n_spurious"] - loose["n_spurious"] >= 10


def test_ofr_below_noise_floor_stops_at_the_term_cap(s4_dataset):
    model_set = generate_model_set(4, 4, 3)
    result = _ofr_pass(RegressorBank(model_set, s4_dataset), OfrConfig(sigma=0.0012, max_terms=60))
    assert result.capped
    assert len(result.order) == 60
    assert not _ofr_pass(RegressorBank(model_set, s4_dataset), OfrConfig(sigma=0.01)).capped


def test_ofr_report_shape(s4_dataset):
    model_set = generate_model_set(4, 4, 3)
    report = ofr_report(s4_dataset, model_set, OfrConfig(sigma=0.01))
    assert report.algorithm == "ofr"
    assert report.fes_used == 1
    assert report.trace == []
    assert len(report.err_sequence) == report.xi
    assert report.err_sequence[-1].cumulative == pytest.approx(sum(s.err for s in report.err_sequence))


# ============================================================================
# EXHAUSTIVE ORACLE
# ============================================================================

def test_exhaustive_search_limit():
    dataset = _toy_dataset()
    with pytest.raises(ModelSetError):
        exhaustive_search(dataset, generate_model_set(4, 4, 3))


def test_searchers_never_beat_exhaustive_minimum():
    dataset = _toy_dataset()
    model_set = generate_model_set(3, 4, 1)
    _, best_value = exhaustive_search(dataset, model_set)
    for seed in range(3):
        assert run_ga(dataset, model_set, GaConfig(population=10, max_fes=200), seed).J >= best_value - 1e-9
        assert run_bpso(dataset, model_set, BpsoConfig(ps=10, max_fes=200), seed).J >= best_value - 1e-9
