"""
Seeded generators for the benchmark identification datasets.

Polynomial difference-equation systems S1-S6, the slowly excited system S7
and the Duffing / Van der Pol oscillators, plus CSV + JSON sidecar I/O.
Every generator is a pure function of its arguments and seed.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import lfilter

from .core import DIVERGENCE_FACTOR, Dataset, ModelSet, TermSpec, evaluate_term, generate_model_set
from .errors import ConfigError, DatasetError, DivergenceError, IntegrationError, ModelSetError
from .utils import SeedLike, make_rng, read_json, spawn_rngs, write_json

logger = logging.getLogger(__name__)

DEFAULT_N = 1000
DEFAULT_N_EST = 700
MAX_INPUT_REDRAWS = 20


@dataclass(frozen=True)
class SystemSpec:
    """A benchmark system with its ground truth and excitation."""
    id: str
    true_terms: Tuple[TermSpec, ...] = ()
    true_coefficients: Tuple[float, ...] = ()
    input_spec: Dict[str, float] = field(default_factory=dict)
    noise_spec: Dict[str, float] = field(default_factory=dict)
    model: Tuple[int, int, int] = (4, 4, 3)
    # validation prediction matching where the noise enters: inside the
    # recursion (one_step) or added to the output (free_run)
    prediction: str = "one_step"

    def __post_init__(self):
        if self.true_terms and len(self.true_terms) != len(self.true_coefficients):
            raise ModelSetError(f"{self.id}: {len(self.true_terms)} terms but {len(self.true_coefficients)} coefficients")

    def model_set(self) -> ModelSet:
        return generate_model_set(*self.model)

    def true_mask(self, model_set: Optional[ModelSet] = None) -> np.ndarray:
        return (model_set or self.model_set()).mask_from_terms(self.true_terms)

    def params(self) -> Dict[str, Any]:
        return {
            "coefficients": {t.label(): c for t, c in zip(self.true_terms, self.true_coefficients)},
            "input": dict(self.input_spec),
            "noise": dict(self.noise_spec),
        }


def _system(system_id: str, terms: Dict[str, float], input_spec: Dict[str, float], noise_variance: float) -> SystemSpec:
    return SystemSpec(
        id=system_id,
        true_terms=tuple(TermSpec.parse(label) for label in terms),
        true_coefficients=tuple(terms.values()),
        input_spec=input_spec,
        noise_spec={"kind": "gaussian", "mean": 0.0, "variance": noise_variance},
    )


_UNIFORM_01 = {"kind": "uniform", "a": 0.0, "b": 1.0}
_UNIFORM_PM1 = {"kind": "uniform", "a": -1.0, "b": 1.0}
_GAUSSIAN_01 = {"kind": "gaussian", "mean": 0.0, "variance": 1.0}

SYSTEMS: Dict[str, SystemSpec] = {
    "S1": _system("S1", {
        "y(k-1)": 0.5, "u(k-1)": 0.3, "y(k-1)*u(k-1)": 0.3, "u(k-1)^2": 0.5,
    }, _UNIFORM_01, 0.002),
    "S2": _system("S2", {
        "c": 0.5, "y(k-1)": 0.5, "u(k-2)": 0.8, "u(k-1)^2": 1.0, "y(k-2)^2": -0.05,
    }, _UNIFORM_01, 0.05),
    "S3": _system("S3", {
        "y(k-1)": 0.8, "u(k-1)": 0.4, "u(k-1)^2": 0.4, "u(k-1)^3": 0.4,
    }, _GAUSSIAN_01, 0.33 ** 2),
    "S4": _system("S4", {
        "y(k-1)": 0.1586, "u(k-1)": 0.6777, "y(k-2)^2": 0.3037,
        "y(k-2)*u(k-1)^2": -0.2566, "u(k-3)^3": -0.0339,
    }, _UNIFORM_01, 0.002),
    "S5": _system("S5", {
        "y(k-1)*u(k-1)": 0.7, "y(k-2)": -0.5, "u(k-2)^2": 0.6, "y(k-2)*u(k-2)^2": -0.7,
    }, _UNIFORM_PM1, 0.004),
    "S6": _system("S6", {
        "y(k-1)^3": 0.2, "y(k-1)*u(k-1)": 0.7, "u(k-2)^2": 0.6,
        "y(k-2)*u(k-2)^2": -0.7, "y(k-2)": -0.5,
    }, _UNIFORM_PM1, 0.004),
    "S7": SystemSpec(
        id="S7",
        true_terms=tuple(TermSpec.parse(t) for t in ("u(k-1)", "u(k-2)", "u(k-2)*u(k-1)", "u(k-1)^3")),
        true_coefficients=(1.0, 0.5, 0.25, -0.3),
        input_spec={"kind": "ar2", "gain": 0.3, "a1": -1.6, "a2": 0.64, "driver_variance": 1.0},
        noise_spec={"kind": "ar1", "pole": 0.8, "mean": 0.0, "variance": 0.02},
        prediction="free_run",
    ),
}


@dataclass(frozen=True)
class OscillatorParams:
    omega_n: float = 45.0 * math.pi
    zeta: float = 0.01
    epsilon: float = 3.0
    sample_rate: float = 500.0
    # unit-variance Gaussian input scaled so the displacement reaches the cubic regime
    amplitude: float = 1000.0
    # one-sample displacement of the random force impulses, relative to the
    # undisturbed output std
    noise_ratio: float = 0.001


OSCILLATORS: Dict[str, OscillatorParams] = {
    "Duffing": OscillatorParams(),
    "VanDerPol": OscillatorParams(),
}
OSCILLATOR_MODEL = (5, 5, 3)

SYSTEM_IDS = tuple(SYSTEMS) + tuple(OSCILLATORS)


def get_system(system_id: str) -> SystemSpec:
    """Look up S1..S7 case-insensitively."""
    for key, spec in SYSTEMS.items():
        if key.lower() == str(system_id).lower():
            return spec
    raise ConfigError(f"unknown system '{system_id}'; expected one of {', '.join(SYSTEM_IDS)}")


def _oscillator_kind(system_id: str) -> Optional[str]:
    for key in OSCILLATORS:
        if key.lower() == str(system_id).lower():
            return key
    return None


# ============================================================================
# EXCITATION
# ============================================================================

def gen_white_uniform(n: int, a: float, b: float, seed: SeedLike) -> np.ndarray:
    if not a < b:
        raise ConfigError(f"uniform bounds must satisfy a < b, got ({a}, {b})")
    if n < 1:
        raise ConfigError("n must be >= 1")
    return make_rng(seed).uniform(a, b, size=n)


def gen_white_gaussian(n: int, mean: float, variance: float, seed: SeedLike) -> np.ndarray:
    if variance < 0:
        raise ConfigError(f"variance must be >= 0, got {variance}")
    if n < 1:
        raise ConfigError("n must be >= 1")
    return make_rng(seed).normal(mean, math.sqrt(variance), size=n)


def _excitation(spec: Dict[str, float], n: int, rng: np.random.Generator) -> np.ndarray:
    if spec["kind"] == "uniform":
        return gen_white_uniform(n, spec["a"], spec["b"], rng)
    return gen_white_gaussian(n, spec.get("mean", 0.0), spec["variance"], rng)


def split_dataset(u: Sequence[float], y: Sequence[float], n_est: int) -> Dataset:
    """Contiguous split: first n_est samples estimate, the rest validate."""
    n = len(u)
    if len(y) != n:
        raise DatasetError(f"u and y lengths differ ({n} vs {len(y)})")
    if not 0 < n_est < n:
        raise DatasetError(f"n_est={n_est} must lie in (0, {n})")
    return Dataset(np.asarray(u, dtype=float), np.asarray(y, dtype=float), n_est)


# ============================================================================
# DIFFERENCE-EQUATION SYSTEMS
# ============================================================================

def _recurse(spec: SystemSpec, u: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Run the system recursion from rest; raises DivergenceError past the bound."""
    n = u.shape[0]
    p = max((t.max_lag for t in spec.true_terms), default=0)
    u_pad = np.concatenate([np.zeros(p), u])
    y_pad = np.zeros(n + p)
    bound = DIVERGENCE_FACTOR * (1.0 + float(np.max(np.abs(u))))
    for k in range(p, n + p):
        value = e[k - p]
        for term, coefficient in zip(spec.true_terms, spec.true_coefficients):
            value += coefficient * evaluate_term(term, u_pad, y_pad, k)
        if not math.isfinite(value) or abs(value) > bound:
            raise DivergenceError(f"{spec.id} diverged at sample {k - p}", step=k - p)
        y_pad[k] = value
    return y_pad[p:]


def simulate_system(
    spec: SystemSpec,
    n: int = DEFAULT_N,
    seed: SeedLike = 0,
    n_est: int = DEFAULT_N_EST,
    u: Optional[Sequence[float]] = None,
    noise: bool = True,
    max_redraws: int = MAX_INPUT_REDRAWS,
) -> Dataset:
    """
    Generate (u, y) from a polynomial NARX system with zero initial conditions.

    The input and noise come from independent child streams of the seed, so
    overriding u leaves the noise sequence unchanged. When a generated input
    drives the recursion past the divergence bound, the next input record is
    drawn from the same input stream (the noise record is kept), up to
    max_redraws times.

    Raises:
        DivergenceError: If a caller-supplied input diverges, or every redraw does
    """
    if spec.id == "S7":
        return simulate_s7(n, seed, n_est=n_est, v=None, noise=noise)
    if n < 50:
        raise ConfigError(f"n must be >= 50, got {n}")
    input_rng, noise_rng = spawn_rngs(int(seed), 2)
    e = np.zeros(n)
    if noise:
        e = gen_white_gaussian(n, spec.noise_spec.get("mean", 0.0), spec.noise_spec["variance"], noise_rng)
    if u is not None:
        u = np.asarray(u, dtype=float)
        if u.shape[0] != n:
            raise DatasetError(f"input override has {u.shape[0]} samples, expected {n}")
        return split_dataset(u, _recurse(spec, u, e), n_est)

    for attempt in range(max_redraws + 1):
        u = _excitation(spec.input_spec, n, input_rng)
        try:
            y = _recurse(spec, u, e)
        except DivergenceError as err:
            logger.warning(f"{err} (seed {seed}, input draw {attempt}); redrawing the input")
            continue
        return split_dataset(u, y, n_est)
    raise DivergenceError(f"{spec.id} diverged on {max_redraws + 1} input draws for seed {seed}")


def simulate_s7(
    n: int = DEFAULT_N,
    seed: SeedLike = 0,
    n_est: int = DEFAULT_N_EST,
    v: Optional[Sequence[float]] = None,
    noise: bool = True,
) -> Dataset:
    """
    Static polynomial in a slowly varying input plus coloured output noise.

    u = 0.3 / (1 - 1.6 z^-1 + 0.64 z^-2) v with v ~ WGN(0, 1);
    y = w + e / (1 - 0.8 z^-1) with e ~ WGN(0, 0.02). Filters start at rest.
    """
    if n < 50:
        raise ConfigError(f"n must be >= 50, got {n}")
    spec = SYSTEMS["S7"]
    inp, nse = spec.input_spec, spec.noise_spec
    driver_rng, noise_rng = spawn_rngs(int(seed), 2)
    v = gen_white_gaussian(n, 0.0, inp["driver_variance"], driver_rng) if v is None else np.asarray(v, dtype=float)
    if v.shape[0] != n:
        raise DatasetError(f"driver override has {v.shape[0]} samples, expected {n}")
    u = lfilter([inp["gain"]], [1.0, inp["a1"], inp["a2"]], v)
    u1 = np.concatenate([[0.0], u[:-1]])
    u2 = np.concatenate([[0.0, 0.0], u[:-2]])
    w = u1 + 0.5 * u2 + 0.25 * u1 * u2 - 0.3 * u1 ** 3
    y = w
    if noise:
        e = gen_white_gaussian(n, nse["mean"], nse["variance"], noise_rng)
        y = w + lfilter([1.0], [1.0, -nse["pole"]], e)
    return split_dataset(u, y, n_est)


# ============================================================================
# OSCILLATORS
# ============================================================================

def _oscillator_rhs(kind: str, omega_n: float, zeta: float, epsilon: float):
    w2 = omega_n ** 2
    c = 2.0 * zeta * omega_n
    if kind == "Duffing":
        def rhs(y, dy, u):
            return u - c * dy - w2 * y - w2 * epsilon * y * y * y
    else:
        def rhs(y, dy, u):
            return u - c * (1.0 - y * y) * dy - w2 * y
    return rhs


def _integrate(rhs, u: np.ndarray, h: float, substeps: int, kicks: np.ndarray, kind: str) -> np.ndarray:
    """RK4 from rest with zero-order-held input; kicks[k] is added to the velocity at sample k."""
    n = u.shape[0]
    y = np.zeros(n)
    pos, vel = 0.0, 0.0
    for k in range(n):
        y[k] = pos
        uk = float(u[k])
        vel += float(kicks[k])
        for _ in range(substeps):
            k1p, k1v = vel, rhs(pos, vel, uk)
            k2p, k2v = vel + 0.5 * h * k1v, rhs(pos + 0.5 * h * k1p, vel + 0.5 * h * k1v, uk)
            k3p, k3v = vel + 0.5 * h * k2v, rhs(pos + 0.5 * h * k2p, vel + 0.5 * h * k2v, uk)
            k4p, k4v = vel + h * k3v, rhs(pos + h * k3p, vel + h * k3v, uk)
            pos += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
            vel += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (math.isfinite(pos) and math.isfinite(vel)):
            raise IntegrationError(f"{kind} integration produced a non-finite state at sample {k}")
    return y


def simulate_oscillator(
    kind: str,
    omega_n: float = 45.0 * math.pi,
    zeta: float = 0.01,
    epsilon: float = 3.0,
    n: int = DEFAULT_N,
    sample_rate: float = 500.0,
    seed: SeedLike = 0,
    n_est: int = DEFAULT_N_EST,
    u: Optional[Sequence[float]] = None,
    amplitude: float = 1.0,
    substeps: int = 10,
    noise_ratio: float = 0.0,
) -> Dataset:
    """
    Sampled response of a Duffing or Van der Pol oscillator.

    Duffing:     y'' + 2 zeta wn y' + wn^2 y + wn^2 eps y^3 = u
    Van der Pol: y'' + 2 zeta wn (1 - y^2) y' + wn^2 y = u  (eps unused)

    The input is zero-order held between samples (unit-variance Gaussian
    scaled by amplitude unless u is given) and the ODE is integrated with
    fixed-step RK4 at substeps steps per sample from rest. y(k) is the
    displacement at t = k / sample_rate, before u(k) is applied.

    With noise_ratio > 0 the oscillator is also hit by random force impulses:
    at every sample the velocity jumps by a white Gaussian amount sized so the
    displacement it adds over one sample has std noise_ratio * std(y) of the
    undisturbed response. The impulses come from a child stream independent
    of the input and act as white equation error on the sampled record.

    Raises:
        IntegrationError: Non-finite state during integration
    """
    kind = _oscillator_kind(kind) or kind
    if kind not in OSCILLATORS:
        raise ConfigError(f"unknown oscillator '{kind}'; expected Duffing or VanDerPol")
    if sample_rate <= 0:
        raise ConfigError("sample_rate must be positive")
    if substeps < 10:
        raise ConfigError(f"need at least 10 integrator steps per sample, got {substeps}")
    if noise_ratio < 0:
        raise ConfigError(f"noise_ratio must be >= 0, got {noise_ratio}")
    input_rng, noise_rng = spawn_rngs(int(seed), 2)
    if u is None:
        u = amplitude * input_rng.standard_normal(n)
    u = np.asarray(u, dtype=float)
    if u.shape[0] != n:
        raise DatasetError(f"input override has {u.shape[0]} samples, expected {n}")

    rhs = _oscillator_rhs(kind, omega_n, zeta, epsilon)
    h = 1.0 / (sample_rate * substeps)
    y = _integrate(rhs, u, h, substeps, np.zeros(n), kind)
    if noise_ratio > 0:
        kick_std = noise_ratio * float(np.std(y)) * sample_rate
        y = _integrate(rhs, u, h, substeps, kick_std * noise_rng.standard_normal(n), kind)
    return split_dataset(u, y, n_est)


# ============================================================================
# DISPATCH AND FILE I/O
# ============================================================================

def generate_dataset(
    system_id: str,
    n: int = DEFAULT_N,
    n_est: int = DEFAULT_N_EST,
    seed: int = 0,
) -> Tuple[Dataset, Dict[str, Any]]:
    """
    Dataset for any registered system plus its sidecar metadata.

    The sidecar records the system, its parameters, the true terms (empty for
    the oscillators), the model-set lags and the validation prediction mode
    suited to the noise model.

    Returns:
        Tuple of (dataset, sidecar dict)
    """
    kind = _oscillator_kind(system_id)
    if kind is not None:
        params = OSCILLATORS[kind]
        dataset = simulate_oscillator(
            kind, params.omega_n, params.zeta, params.epsilon, n=n,
            sample_rate=params.sample_rate, seed=seed, n_est=n_est,
            amplitude=params.amplitude, noise_ratio=params.noise_ratio,
        )
        n_u, n_y, n_l = OSCILLATOR_MODEL
        sidecar = {
            "system": kind,
            "params": {
                "omega_n": params.omega_n, "zeta": params.zeta, "epsilon": params.epsilon,
                "sample_rate": params.sample_rate, "amplitude": params.amplitude,
                "noise_ratio": params.noise_ratio, "substeps": 10,
            },
            "true_terms": [],
            "true_mask": None,
            "prediction": "one_step",
        }
    else:
        spec = get_system(system_id)
        dataset = simulate_system(spec, n=n, seed=seed, n_est=n_est)
        n_u, n_y, n_l = spec.model
        sidecar = {
            "system": spec.id,
            "params": spec.params(),
            "true_terms": [t.label() for t in spec.true_terms],
            "true_mask": [int(b) for b in spec.true_mask()],
            "prediction": spec.prediction,
        }
    sidecar.update({"seed": int(seed), "n": int(n), "n_est": int(n_est),
                    "model": {"n_u": n_u, "n_y": n_y, "n_l": n_l}})
    logger.info(f"Generated {sidecar['system']} dataset: n={n}, n_est={n_est}, seed={seed}")
    return dataset, sidecar


def write_dataset(
    dataset: Dataset,
    directory: Union[str, Path],
    stem: str,
    sidecar: Optional[Dict[str, Any]] = None,
) -> Tuple[Path, Optional[Path]]:
    """Write <stem>.csv and, when given, the <stem>.json sidecar."""
    directory = Path(directory)
    csv_path = dataset.to_csv(directory / f"{stem}.csv")
    json_path = write_json(directory / f"{stem}.json", sidecar) if sidecar is not None else None
    logger.info(f"Wrote {csv_path}" + (f" and {json_path}" if json_path else ""))
    return csv_path, json_path


def load_dataset(path: Union[str, Path], n_est: int) -> Dataset:
    """Ingest a user CSV with header k,u,y."""
    return Dataset.from_csv(path, n_est)


def sidecar_path(data_path: Union[str, Path]) -> Path:
    return Path(data_path).with_suffix(".json")


def read_sidecar(data_path: Union[str, Path]) -> Optional[Dict[str, Any]]:
    path = sidecar_path(data_path)
    if not path.exists():
        return None
    return read_json(path)


def truth_mask_for(sidecar: Optional[Dict[str, Any]], model_set: ModelSet) -> Optional[np.ndarray]:
    """Ground-truth mask over model_set, or None when unknown or not representable."""
    if not sidecar or not sidecar.get("true_terms"):
        return None
    try:
        return model_set.mask_from_terms(sidecar["true_terms"])
    except ModelSetError as e:
        logger.warning(f"Ground truth does not fit the model set: {e}")
        return None


def true_terms(system_id: str) -> List[TermSpec]:
    if _oscillator_kind(system_id) is not None:
        return []
    return list(get_system(system_id).true_terms)
