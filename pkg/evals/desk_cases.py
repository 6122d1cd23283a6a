"""
Hard-coded desk-scale experiments for checking search quality end to end.

Each case names the experiment kind, its parameters and the pass condition the
runner applies. Budgets follow the standard protocol (ps=30, u_f=0.4, RG=20,
6000 evaluations) with 10 runs per experiment.
"""

from __future__ import annotations

from typing import Any, Dict, List, Literal, TypedDict

CaseKind = Literal["exact_fit", "slow_excitation", "ofr_thresholds", "baseline_ordering", "oscillator", "toy_oracle"]


class DeskCase(TypedDict):
    """Container describing one seeded desk experiment."""

    name: str
    kind: CaseKind
    description: str
    params: Dict[str, Any]
    expected_outcome: str


def _exact_fit_case(system: str, min_exact: int) -> DeskCase:
    return {
        "name": f"exact-fit-{system.lower()}",
        "kind": "exact_fit",
        "description": f"2D-UPSO on {system}, 10 seeded runs with the standard budget.",
        "params": {"system": system, "algorithm": "2d-upso", "runs": 10, "min_exact": min_exact},
        "expected_outcome": f">= {min_exact} of 10 runs recover the true structure exactly after pruning",
    }


DESK_CASES: List[DeskCase] = [
    *(_exact_fit_case(system, 9) for system in ("S1", "S2", "S3", "S4")),
    *(_exact_fit_case(system, 8) for system in ("S5", "S6")),
    {
        "name": "slow-excitation-s7",
        "kind": "slow_excitation",
        "description": "2D-UPSO on the system driven by a low-pass AR(2) input with coloured noise.",
        "params": {"system": "S7", "runs": 10},
        "expected_outcome": "best-of-10 pruned model holds all four true terms and no spurious term",
    },
    {
        "name": "ofr-threshold-sensitivity",
        "kind": "ofr_thresholds",
        "description": "OFR-ERR on one seeded S4 record at a loose and a tight ERR threshold.",
        "params": {"system": "S4", "sigmas": [0.01, 0.0065], "term": "u(k-3)^3", "min_extra_spurious": 10},
        "expected_outcome": "loose threshold misses u(k-3)^3; tight threshold includes it with >= 10 more spurious terms, below the term cap",
    },
    {
        "name": "baseline-ordering",
        "kind": "baseline_ordering",
        "description": "Exact-fit counts of 2D-UPSO, BPSO and GA over 10 runs each on S1 and S2.",
        "params": {"systems": ["S1", "S2"], "runs": 10, "max_ga_exact": 3},
        "expected_outcome": "2D-UPSO >= BPSO >= GA on each system and GA <= 3 exact fits",
    },
    {
        "name": "oscillator-duffing",
        "kind": "oscillator",
        "description": "2D-UPSO on the sampled Duffing oscillator with a (5,5,3) model set.",
        "params": {"system": "Duffing", "runs": 10, "max_nmse": 1e-2},
        "expected_outcome": "free-run validation NMSE <= 1e-2 and all five correlation tests pass",
    },
    {
        "name": "oscillator-van-der-pol",
        "kind": "oscillator",
        "description": "2D-UPSO on the sampled Van der Pol oscillator with a (5,5,3) model set.",
        "params": {"system": "VanDerPol", "runs": 10, "max_nmse": 1e-2},
        "expected_outcome": "free-run validation NMSE <= 1e-2 and all five correlation tests pass",
    },
    {
        "name": "toy-exhaustive-oracle",
        "kind": "toy_oracle",
        "description": "Every searcher on an 8-term model set against exhaustive enumeration.",
        "params": {"system": "S1", "model": [3, 4, 1], "runs": 10, "max_fes": 500, "ps": 10},
        "expected_outcome": "no searcher beats the exhaustive minimum; 2D-UPSO reaches it in 10 of 10 runs",
    },
]
