"""
Two-dimensional unified particle swarm (2D-UPSO) for NARX structure selection.

Each particle holds a binary structure (its position) and a 2 x N_t velocity
of nonnegative selection likelihoods: row 0 for the cardinality of the
structure and row 1 for individual terms. Learning sets extracted from the
personal, global and neighborhood bests accumulate into the velocity, and a
new position is drawn in two stages: roulette on cardinality, then the top
ranked terms.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .config import SwarmConfig
from .core import (
    WORST_CRITERION,
    BicEvaluator,
    Dataset,
    ModelSet,
    RegressorBank,
    TermSpec,
    as_mask,
)
from .reports import RunReport, TracePoint, build_run_report
from .utils import SeedLike, make_rng

logger = logging.getLogger(__name__)


@dataclass
class ParticleState:
    position: np.ndarray
    velocity: np.ndarray
    fitness: float
    pbest_mask: np.ndarray
    pbest_value: float
    stagnation_count: int = 0


def decode_structure(mask, model_set: ModelSet) -> List[TermSpec]:
    """Terms whose bit is set, in model-set order."""
    return model_set.decode(mask)


def _cardinality_row(n: int, xi: int) -> np.ndarray:
    row = np.zeros(n, dtype=np.int8)
    # an empty exemplar still marks cardinality 1
    row[max(xi, 1) - 1] = 1
    return row


def extract_learning_set(exemplar, position) -> np.ndarray:
    """
    Learning set of a particle from an exemplar.

    Row 0 is the one-hot cardinality of the exemplar (1-based ξ at index
    ξ - 1); row 1 holds the exemplar's terms the particle does not have yet.
    """
    alpha = as_mask(exemplar)
    beta = as_mask(position, alpha.shape[0])
    return np.vstack([
        _cardinality_row(alpha.shape[0], int(alpha.sum())),
        (alpha & (1 - beta)).astype(np.int8),
    ])


def extract_self_learning_set(position) -> np.ndarray:
    beta = as_mask(position)
    return np.vstack([_cardinality_row(beta.shape[0], int(beta.sum())), beta])


def compute_delta(J_now: float, J_prev: float, swarm_fitness: Sequence[float]) -> float:
    """
    Fitness feedback weight of the self learning set.

    Positive only when the particle improved; scaled by where J_now sits in
    the current swarm fitness range.
    """
    if not J_now < J_prev:
        return 0.0
    fitness = np.asarray(swarm_fitness, dtype=float)
    hi, lo = float(fitness.max()), float(fitness.min())
    if hi == lo:
        return 0.0
    return float(np.clip((hi - J_now) / (hi - lo), 0.0, 1.0))


def update_velocity(
    V: np.ndarray,
    L_pbest: np.ndarray,
    L_gbest: np.ndarray,
    L_nbest: np.ndarray,
    L_self: np.ndarray,
    u_f: float,
    delta: float,
    rng,
) -> np.ndarray:
    """
    V' = V + r1*L_pbest + u_f*r2*L_gbest + (1 - u_f)*r3*L_nbest + delta*L_self

    r1, r2 and r3 are drawn element-wise from U[0, 2], in that order.
    """
    shape = V.shape
    r1 = rng.uniform(0.0, 2.0, size=shape)
    r2 = rng.uniform(0.0, 2.0, size=shape)
    r3 = rng.uniform(0.0, 2.0, size=shape)
    return (
        V
        + r1 * L_pbest
        + u_f * r2 * L_gbest
        + (1.0 - u_f) * r3 * L_nbest
        + delta * L_self
    )


def sample_cardinality(likelihoods: np.ndarray, r: float) -> int:
    """Roulette-wheel pick of ξ (1-based) from row-0 likelihoods."""
    cumulative = np.cumsum(likelihoods) / np.sum(likelihoods)
    xi = int(np.searchsorted(cumulative, r, side="right")) + 1
    return min(xi, likelihoods.shape[0])


def rank_terms(likelihoods: np.ndarray) -> np.ndarray:
    """Term indices by descending likelihood; ties go to the lower index."""
    n = likelihoods.shape[0]
    return np.lexsort((np.arange(n), -likelihoods))


def update_position(V: np.ndarray, rng) -> np.ndarray:
    """Two-stage position update: sample ξ by roulette, then set the ξ most likely terms."""
    if not np.sum(V[0]) > 0:
        raise ValueError("cardinality likelihoods must have a positive sum")
    xi = sample_cardinality(V[0], float(rng.random()))
    mask = np.zeros(V.shape[1], dtype=np.int8)
    mask[rank_terms(V[1])[:xi]] = 1
    return mask


def refresh_velocity(particle: ParticleState, refresh_gap: int, rng) -> bool:
    """
    Redraw a stagnant particle's velocity from U[0, 1] and reset its counter.

    The position is left alone; it changes at the next position update.
    Returns True when the particle was refreshed.
    """
    if particle.stagnation_count < refresh_gap:
        return False
    particle.velocity = rng.random(particle.velocity.shape)
    particle.stagnation_count = 0
    return True


def ring_neighbors(i: int, ps: int, radius: int) -> List[int]:
    return sorted({(i + d) % ps for d in range(-radius, radius + 1)})


def _best_of(indices: Sequence[int], values: np.ndarray) -> int:
    """Index with the minimum value; ties go to the lowest index."""
    best = min(indices, key=lambda j: (values[j], j))
    return best


def run_search(
    dataset: Dataset,
    model_set: ModelSet,
    config: SwarmConfig,
    seed: SeedLike,
    evaluator: Optional[BicEvaluator] = None,
) -> RunReport:
    """
    One 2D-UPSO run.

    Args:
        dataset: Identification data
        model_set: Candidate terms
        config: Swarm settings
        seed: Integer seed or caller-owned generator
        evaluator: Optional evaluator sharing a precomputed RegressorBank

    Returns:
        RunReport with the best structure, refit coefficients and the
        per-iteration trace (iteration 0 is the initial swarm)
    """
    rng = make_rng(seed)
    if evaluator is None:
        evaluator = BicEvaluator(RegressorBank(model_set, dataset))
    calls_at_start = evaluator.calls
    n = len(model_set)
    ps = config.ps

    def evaluated() -> int:
        return evaluator.calls - calls_at_start

    positions = (rng.random((ps, n)) < 0.5).astype(np.int8)
    velocities = rng.random((ps, 2, n))
    fitness = np.array([evaluator(p) for p in positions])
    particles = [
        ParticleState(positions[i], velocities[i], fitness[i], positions[i].copy(), fitness[i])
        for i in range(ps)
    ]
    pbest_values = fitness.copy()
    neighborhoods = [ring_neighbors(i, ps, config.neighborhood_radius) for i in range(ps)]
    g = _best_of(range(ps), pbest_values)
    gbest_mask, gbest_value = particles[g].pbest_mask.copy(), float(pbest_values[g])

    trace = [TracePoint(iter=0, J=gbest_value, xi=int(gbest_mask.sum()))]
    previous_fitness = fitness.copy()
    iteration = 0
    refreshes = 0

    while evaluated() < config.max_fes:
        iteration += 1
        active = min(ps, config.max_fes - evaluated())
        current_fitness = np.array([p.fitness for p in particles])
        nbest_idx = [_best_of(neighborhoods[i], pbest_values) for i in range(ps)]
        refreshed = 0

        for i in range(active):
            particle = particles[i]
            if refresh_velocity(particle, config.RG, rng):
                refreshed += 1
            beta = particle.position
            L_pbest = extract_learning_set(particle.pbest_mask, beta)
            L_gbest = extract_learning_set(gbest_mask, beta)
            L_nbest = extract_learning_set(particles[nbest_idx[i]].pbest_mask, beta)
            L_self = extract_self_learning_set(beta)
            delta = 0.0
            if iteration > 1:
                delta = compute_delta(current_fitness[i], previous_fitness[i], current_fitness)
            particle.velocity = update_velocity(
                particle.velocity, L_pbest, L_gbest, L_nbest, L_self, config.u_f, delta, rng
            )
            particle.position = update_position(particle.velocity, rng)

        previous_fitness = current_fitness
        for i in range(active):
            particle = particles[i]
            particle.fitness = evaluator(particle.position)
            if particle.fitness < particle.pbest_value:
                particle.pbest_value = particle.fitness
                particle.pbest_mask = particle.position.copy()
                pbest_values[i] = particle.fitness
                particle.stagnation_count = 0
            else:
                particle.stagnation_count += 1

        g = _best_of(range(ps), pbest_values)
        if pbest_values[g] < gbest_value:
            gbest_value = float(pbest_values[g])
            gbest_mask = particles[g].pbest_mask.copy()
        refreshes += refreshed

        xi_now = np.array([p.position.sum() for p in particles])
        trace.append(TracePoint(iter=iteration, J=gbest_value, xi=int(gbest_mask.sum())))
        logger.debug(
            f"iter {iteration}: best J={gbest_value:.4f} best xi={int(gbest_mask.sum())} "
            f"mean xi={xi_now.mean():.2f} refreshed={refreshed}"
        )

    if gbest_value >= WORST_CRITERION:
        logger.warning("2D-UPSO run found no finite-criterion structure")
    logger.debug(f"2D-UPSO finished: {iteration} iterations, {refreshes} refreshes, J={gbest_value:.4f}")
    return build_run_report(
        algorithm="2d-upso",
        seed=seed if isinstance(seed, int) else None,
        config=config.model_dump(),
        model=evaluator.fit(gbest_mask),
        trace=trace,
        fes_used=evaluated(),
    )
