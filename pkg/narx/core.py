"""
NARX fitness engine.

Term enumeration for polynomial NARX models, regressor construction,
least-squares estimation, free-run simulation and the BIC criterion that every
structure searcher minimizes.

A candidate structure is a binary mask over a canonically ordered ModelSet.
Searchers never touch regressors directly: they hand masks to a BicEvaluator,
which owns a shared read-only RegressorBank and counts function evaluations.
"""

import logging
import math
import re
import threading
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular

from .errors import DatasetError, DegenerateDataError, ModelSetError, SingularFitError

logger = logging.getLogger(__name__)

# Largest finite float: the criterion assigned to empty, singular and divergent structures
WORST_CRITERION = float(np.finfo(float).max)
ERROR_FLOOR = 1e-300
DIVERGENCE_FACTOR = 1e6
RANK_TOLERANCE = 1e-10

# "one_step" scores validation predictions made from measured lagged outputs;
# "free_run" scores the recursive simulation seeded from the estimation tail
PredictionMode = Literal["one_step", "free_run"]
PREDICTION_MODES = ("one_step", "free_run")

_FACTOR_RE = re.compile(r"^([yu])\(k-(\d+)\)(?:\^(\d+))?$")


# ============================================================================
# TERMS AND MODEL SETS
# ============================================================================

@dataclass(frozen=True)
class TermSpec:
    """
    One polynomial NARX regressor.

    A multiset of lagged outputs and lagged inputs, stored sorted. The empty
    term is the constant.
    """
    output_lags: Tuple[int, ...] = ()
    input_lags: Tuple[int, ...] = ()

    def __post_init__(self):
        out = tuple(sorted(int(l) for l in self.output_lags))
        inp = tuple(sorted(int(l) for l in self.input_lags))
        if any(l < 1 for l in out + inp):
            raise ModelSetError(f"lags must be positive, got y{out} u{inp}")
        object.__setattr__(self, "output_lags", out)
        object.__setattr__(self, "input_lags", inp)

    @property
    def degree(self) -> int:
        return len(self.output_lags) + len(self.input_lags)

    @property
    def max_lag(self) -> int:
        return max(self.output_lags + self.input_lags, default=0)

    @property
    def is_constant(self) -> bool:
        return self.degree == 0

    def sort_key(self) -> tuple:
        return (self.degree, -len(self.output_lags), self.output_lags, self.input_lags)

    def label(self) -> str:
        """Human-readable form, e.g. "y(k-2)*u(k-1)^2"; the constant is "c"."""
        if self.is_constant:
            return "c"
        parts = []
        for name, lags in (("y", self.output_lags), ("u", self.input_lags)):
            for lag in sorted(set(lags)):
                power = lags.count(lag)
                parts.append(f"{name}(k-{lag})" + (f"^{power}" if power > 1 else ""))
        return "*".join(parts)

    @classmethod
    def parse(cls, label: str) -> "TermSpec":
        """Inverse of label()."""
        text = label.replace(" ", "")
        if text in ("c", "1", "const"):
            return cls()
        out: List[int] = []
        inp: List[int] = []
        for factor in text.split("*"):
            match = _FACTOR_RE.match(factor)
            if match is None:
                raise ModelSetError(f"cannot parse term factor '{factor}' in '{label}'")
            name, lag, power = match.group(1), int(match.group(2)), int(match.group(3) or 1)
            (out if name == "y" else inp).extend([lag] * power)
        return cls(tuple(out), tuple(inp))

    def to_json(self) -> Dict[str, List[int]]:
        return {"y": list(self.output_lags), "u": list(self.input_lags)}

    @classmethod
    def from_json(cls, payload: Dict[str, Sequence[int]]) -> "TermSpec":
        return cls(tuple(payload.get("y", ())), tuple(payload.get("u", ())))

    def __str__(self) -> str:
        return self.label()


@dataclass(frozen=True)
class ModelSet:
    """All candidate terms for (n_u, n_y, n_l) in canonical order."""
    n_u: int
    n_y: int
    n_l: int
    terms: Tuple[TermSpec, ...]
    _index: Dict[TermSpec, int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {term: i for i, term in enumerate(self.terms)}
        if len(index) != len(self.terms):
            raise ModelSetError("model set contains duplicate terms")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __getitem__(self, i: int) -> TermSpec:
        return self.terms[i]

    @property
    def max_lag(self) -> int:
        return max(self.n_u, self.n_y)

    def index_of(self, term: TermSpec) -> int:
        try:
            return self._index[term]
        except KeyError:
            raise ModelSetError(f"term {term.label()} is not in the [{self.n_u},{self.n_y},{self.n_l}] model set")

    def mask_from_terms(self, terms: Iterable[Union[TermSpec, str]]) -> np.ndarray:
        mask = np.zeros(len(self), dtype=np.int8)
        for term in terms:
            if isinstance(term, str):
                term = TermSpec.parse(term)
            mask[self.index_of(term)] = 1
        return mask

    def decode(self, mask) -> List[TermSpec]:
        bits = as_mask(mask, len(self))
        return [self.terms[i] for i in np.flatnonzero(bits)]

    def labels(self) -> List[str]:
        return [t.label() for t in self.terms]

    def to_json(self) -> dict:
        return {
            "n_u": self.n_u,
            "n_y": self.n_y,
            "n_l": self.n_l,
            "terms": [t.to_json() for t in self.terms],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ModelSet":
        return cls(
            int(payload["n_u"]),
            int(payload["n_y"]),
            int(payload["n_l"]),
            tuple(TermSpec.from_json(t) for t in payload["terms"]),
        )


def as_mask(mask, n: Optional[int] = None) -> np.ndarray:
    """Coerce to an int8 0/1 vector, checking length when n is given."""
    bits = np.asarray(mask).astype(np.int8).ravel()
    if n is not None and bits.shape[0] != n:
        raise ModelSetError(f"mask length {bits.shape[0]} does not match model set size {n}")
    if np.any((bits != 0) & (bits != 1)):
        raise ModelSetError("mask entries must be 0 or 1")
    return bits


def count_terms(n_u: int, n_y: int, n_l: int) -> int:
    """
    Number of candidate terms N_t of a polynomial NARX model set.

    Uses n_0 = 1 and n_i = n_{i-1} (n_y + n_u + i - 1) / i, summed over
    degrees 0..n_l.
    """
    if min(n_u, n_y, n_l) < 1:
        raise ModelSetError("n_u, n_y and n_l must all be >= 1")
    total = n_i = 1
    for i in range(1, n_l + 1):
        n_i = n_i * (n_y + n_u + i - 1) // i
        total += n_i
    return total


def generate_model_set(n_u: int, n_y: int, n_l: int) -> ModelSet:
    """Enumerate every monomial of degree 0..n_l over y(k-1..n_y) and u(k-1..n_u)."""
    if min(n_u, n_y, n_l) < 1:
        raise ModelSetError("n_u, n_y and n_l must all be >= 1")
    factors = [("y", lag) for lag in range(1, n_y + 1)] + [("u", lag) for lag in range(1, n_u + 1)]
    terms = []
    for degree in range(n_l + 1):
        for combo in combinations_with_replacement(factors, degree):
            terms.append(TermSpec(
                tuple(lag for name, lag in combo if name == "y"),
                tuple(lag for name, lag in combo if name == "u"),
            ))
    terms.sort(key=TermSpec.sort_key)
    return ModelSet(n_u, n_y, n_l, tuple(terms))


def evaluate_term(term: TermSpec, u: Sequence[float], y: Sequence[float], k: int) -> float:
    """
    Value of one regressor at sample k (0-based).

    Raises:
        IndexError: If any referenced sample k - lag lies outside the record
    """
    if k - term.max_lag < 0:
        raise IndexError(f"k={k} out of range for term {term.label()}")
    value = 1.0
    for lag in term.output_lags:
        value *= float(y[k - lag])
    for lag in term.input_lags:
        value *= float(u[k - lag])
    return value


def build_regressors(terms: Sequence[TermSpec], u: np.ndarray, y: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """One-step-ahead regressor matrix with one row per index in rows."""
    X = np.ones((rows.shape[0], len(terms)))
    for j, term in enumerate(terms):
        for lag in term.output_lags:
            X[:, j] *= y[rows - lag]
        for lag in term.input_lags:
            X[:, j] *= u[rows - lag]
    return X


def _input_columns(terms: Sequence[TermSpec], u: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Input-only factor of each term; samples before the record count as zero."""
    pad = max((t.max_lag for t in terms), default=0)
    u_pad = np.concatenate([np.zeros(pad), u])
    X = np.ones((rows.shape[0], len(terms)))
    for j, term in enumerate(terms):
        for lag in term.input_lags:
            X[:, j] *= u_pad[rows - lag + pad]
    return X


# ============================================================================
# DATA
# ============================================================================

@dataclass
class Dataset:
    """Input/output record split into a contiguous estimation prefix and validation suffix."""
    u: np.ndarray
    y: np.ndarray
    n_est: int

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.u.shape != self.y.shape:
            raise DatasetError(f"u and y lengths differ ({self.u.shape[0]} vs {self.y.shape[0]})")
        if not 0 < self.n_est < self.u.shape[0]:
            raise DatasetError(f"n_est={self.n_est} must lie in (0, {self.u.shape[0]})")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.y))):
            raise DatasetError("dataset contains non-finite samples")
        self.n_est = int(self.n_est)

    def __len__(self) -> int:
        return int(self.u.shape[0])

    @property
    def n_val(self) -> int:
        return len(self) - self.n_est

    @property
    def estimation(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.u[: self.n_est], self.y[: self.n_est]

    @property
    def validation(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.u[self.n_est:], self.y[self.n_est:]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k": np.arange(len(self)), "u": self.u, "y": self.y})

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path], n_est: int) -> "Dataset":
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DatasetError(f"cannot read dataset {path}: {e}") from e
        missing = {"u", "y"} - set(frame.columns)
        if missing:
            raise DatasetError(f"dataset {path} lacks column(s) {sorted(missing)}; expected header k,u,y")
        if "k" in frame.columns:
            frame = frame.sort_values("k")
        try:
            return cls(frame["u"].to_numpy(dtype=float), frame["y"].to_numpy(dtype=float), n_est)
        except ValueError as e:
            raise DatasetError(f"dataset {path} has non-numeric samples: {e}") from e


@dataclass
class IdentifiedModel:
    """A fitted structure: mask, coefficients in mask order, criterion J and validation NMSE."""
    model_set: ModelSet
    mask: np.ndarray
    coefficients: np.ndarray
    criterion: float = WORST_CRITERION
    nmse: float = WORST_CRITERION

    def __post_init__(self):
        self.mask = as_mask(self.mask, len(self.model_set))
        self.coefficients = np.asarray(self.coefficients, dtype=float).ravel()
        if self.coefficients.shape[0] != int(self.mask.sum()):
            raise ModelSetError(
                f"{self.coefficients.shape[0]} coefficients for a structure of {int(self.mask.sum())} terms"
            )

    @property
    def xi(self) -> int:
        return int(self.mask.sum())

    @property
    def terms(self) -> List[TermSpec]:
        return self.model_set.decode(self.mask)

    def equation(self) -> str:
        parts = [f"{c:+.6g}*{t.label()}" if not t.is_constant else f"{c:+.6g}"
                 for c, t in zip(self.coefficients, self.terms)]
        return "y(k) = " + (" ".join(parts) if parts else "0")


# ============================================================================
# ESTIMATION AND SIMULATION
# ============================================================================

def _least_squares(X: np.ndarray, target: np.ndarray) -> np.ndarray:
    if X.shape[1] == 0:
        raise ModelSetError("cannot estimate an empty structure")
    if X.shape[0] < X.shape[1]:
        raise SingularFitError(f"{X.shape[1]} terms but only {X.shape[0]} estimation rows")
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    # |R_jj| / ||x_j|| is the part of column j not explained by earlier columns
    norms = np.linalg.norm(X, axis=0)
    if not np.all(np.isfinite(R)) or np.any(norms == 0.0) or np.any(diag <= RANK_TOLERANCE * norms):
        raise SingularFitError("regressor matrix is rank deficient")
    theta = solve_triangular(R, Q.T @ target)
    if not np.all(np.isfinite(theta)):
        raise SingularFitError("least-squares solution is not finite")
    return theta


def estimate_parameters(model_set: ModelSet, mask, dataset: Dataset) -> np.ndarray:
    """
    Least-squares coefficients of the selected terms on the estimation set.

    Regressors are one-step-ahead (measured y on the right-hand side); the
    first max(n_u, n_y) samples are discarded.

    Raises:
        ModelSetError: Empty structure or mask length mismatch
        SingularFitError: Rank-deficient regressor matrix
        DatasetError: Estimation set shorter than the maximum lag
    """
    terms = model_set.decode(mask)
    start = model_set.max_lag
    if dataset.n_est <= start:
        raise DatasetError(f"n_est={dataset.n_est} must exceed the maximum lag {start}")
    rows = np.arange(start, dataset.n_est)
    X = build_regressors(terms, dataset.u, dataset.y, rows)
    return _least_squares(X, dataset.y[rows])


def _free_run(theta, u_cols, y_lags, seed, bound) -> Tuple[List[float], bool]:
    """
    Shared simulation kernel.

    u_cols[i][j] is the input factor of term j at step i; y_lags[j] lists the
    output lags of term j. Returns the simulated values after the seed and a
    divergence flag; on divergence the values stop before the offending step.
    """
    history = list(seed)
    start = len(history)
    out: List[float] = []
    for i, row in enumerate(u_cols):
        k = start + i
        acc = 0.0
        for j, lags in enumerate(y_lags):
            value = theta[j] * row[j]
            for lag in lags:
                value *= history[k - lag]
            acc += value
        if not math.isfinite(acc) or abs(acc) > bound:
            return out, True
        history.append(acc)
        out.append(acc)
    return out, False


def simulate_model(
    model: IdentifiedModel,
    u: Sequence[float],
    y_init: Sequence[float],
    bound: Optional[float] = None,
) -> Tuple[np.ndarray, bool]:
    """
    Free-run simulation of an identified model.

    The first len(y_init) outputs are the seed; later outputs feed back the
    model's own predictions. Inputs before the start of u count as zero.

    Args:
        model: Identified model
        u: Input sequence aligned with the returned output
        y_init: Seed outputs (at least n_y values)
        bound: Divergence bound on |y_hat|; defaults to 1e6 * (1 + max|y_init|)

    Returns:
        Tuple of (y_hat, diverged). On divergence y_hat is truncated before
        the first step whose magnitude left the bound.
    """
    seed = [float(v) for v in y_init]
    if len(seed) < model.model_set.n_y:
        raise DatasetError(f"need at least n_y={model.model_set.n_y} seed outputs, got {len(seed)}")
    u = np.asarray(u, dtype=float).ravel()
    if bound is None:
        bound = DIVERGENCE_FACTOR * (1.0 + max((abs(v) for v in seed), default=0.0))
    terms = model.terms
    rows = np.arange(len(seed), u.shape[0])
    u_cols = _input_columns(terms, u, rows).tolist()
    values, diverged = _free_run(model.coefficients.tolist(), u_cols, [t.output_lags for t in terms], seed, bound)
    if diverged:
        logger.debug(f"Free-run diverged at step {len(seed) + len(values)}")
    return np.asarray(seed[: u.shape[0]] + values), diverged


def compute_nmse(y: Sequence[float], y_hat: Sequence[float]) -> float:
    """Sum of squared errors normalized by the variance energy of y."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise DatasetError(f"length mismatch ({y.shape[0]} vs {y_hat.shape[0]})")
    if y.shape[0] < 2:
        raise DatasetError("NMSE needs at least two samples")
    energy = float(np.sum((y - y.mean()) ** 2))
    if energy == 0.0:
        raise DegenerateDataError("NMSE is undefined for a constant output")
    return float(np.sum((y - y_hat) ** 2) / energy)


def bic_value(error: float, xi: int, n_val: int) -> float:
    """J = N_v ln(E) + ln(N_v) xi, with E clamped at 1e-300."""
    return n_val * math.log(max(float(error), ERROR_FLOOR)) + math.log(n_val) * xi


# ============================================================================
# SHARED FITNESS ENGINE
# ============================================================================

class RegressorBank:
    """
    Precomputed regressors of every candidate term for one dataset.

    Read-only after construction, so a single bank is shared between runs and
    threads.
    """

    def __init__(self, model_set: ModelSet, dataset: Dataset):
        p = model_set.max_lag
        if dataset.n_est <= p:
            raise DatasetError(f"n_est={dataset.n_est} must exceed the maximum lag {p}")
        self.model_set = model_set
        self.dataset = dataset
        self.start = p
        self.n_val = dataset.n_val
        terms = model_set.terms

        est_rows = np.arange(p, dataset.n_est)
        val_rows = np.arange(dataset.n_est, len(dataset))
        self.X_est = build_regressors(terms, dataset.u, dataset.y, est_rows)
        self.y_est = dataset.y[est_rows]
        self.X_val = build_regressors(terms, dataset.u, dataset.y, val_rows)
        self.y_val = dataset.y[val_rows]
        self.U_val = _input_columns(terms, dataset.u, val_rows)
        self.y_lags = [t.output_lags for t in terms]
        self.seed = dataset.y[dataset.n_est - p: dataset.n_est].tolist()
        self.bound = DIVERGENCE_FACTOR * (1.0 + float(np.max(np.abs(dataset.y))))
        logger.debug(
            f"RegressorBank: {len(model_set)} terms, {est_rows.size} estimation rows, {self.n_val} validation rows"
        )

    def solve(self, idx: np.ndarray) -> np.ndarray:
        return _least_squares(self.X_est[:, idx], self.y_est)

    def free_run(self, idx: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, bool]:
        """Validation-segment free-run seeded with the last measured estimation outputs."""
        values, diverged = _free_run(
            theta.tolist(),
            self.U_val[:, idx].tolist(),
            [self.y_lags[i] for i in idx],
            self.seed,
            self.bound,
        )
        return np.asarray(values), diverged

    def one_step_residuals(self, idx: np.ndarray, theta: np.ndarray, segment: str = "validation") -> np.ndarray:
        if segment == "validation":
            return self.y_val - self.X_val[:, idx] @ theta
        return self.y_est - self.X_est[:, idx] @ theta


class BicEvaluator:
    """
    Callable fitness: mask -> J.

    Counts every call (the function-evaluation budget) and folds empty,
    singular and non-finite structures into WORST_CRITERION. Repeated masks are
    served from a per-evaluator cache but still count as evaluations.

    The validation error behind J comes from one-step-ahead predictions by
    default. With noise entering the recursion the free-run error rewards
    structures that smooth the noisy feedback, so the true structure is not
    its minimizer; "free_run" is kept for noise-free records and comparison.
    """

    def __init__(self, bank: RegressorBank, prediction: PredictionMode = "one_step"):
        if prediction not in PREDICTION_MODES:
            raise ValueError(f"unknown prediction mode '{prediction}'; expected one of {', '.join(PREDICTION_MODES)}")
        self.bank = bank
        self.prediction = prediction
        self.calls = 0
        self._cache: Dict[bytes, float] = {}
        self._lock = threading.Lock()

    @property
    def n_terms(self) -> int:
        return len(self.bank.model_set)

    def __call__(self, mask) -> float:
        bits = as_mask(mask, self.n_terms)
        key = np.packbits(bits).tobytes()
        with self._lock:
            self.calls += 1
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        value = self.criterion(bits)
        with self._lock:
            self._cache[key] = value
        return value

    def validation_error(self, idx: np.ndarray, theta: np.ndarray) -> float:
        """Mean squared validation error; inf when the free run diverges."""
        if self.prediction == "one_step":
            resid = self.bank.one_step_residuals(idx, theta)
            return float(np.mean(resid ** 2))
        y_hat, diverged = self.bank.free_run(idx, theta)
        if diverged:
            return math.inf
        return float(np.mean((self.bank.y_val - y_hat) ** 2))

    def criterion(self, bits: np.ndarray) -> float:
        """Uncounted evaluation of J."""
        idx = np.flatnonzero(bits)
        if idx.size == 0:
            return WORST_CRITERION
        try:
            theta = self.bank.solve(idx)
        except SingularFitError:
            return WORST_CRITERION
        error = self.validation_error(idx, theta)
        if not math.isfinite(error):
            return WORST_CRITERION
        return bic_value(error, int(idx.size), self.bank.n_val)

    def fit(self, mask) -> IdentifiedModel:
        """Refit a structure and return it with its criterion and validation NMSE (not counted)."""
        bits = as_mask(mask, self.n_terms)
        idx = np.flatnonzero(bits)
        model_set = self.bank.model_set
        if idx.size == 0:
            return IdentifiedModel(model_set, bits, np.zeros(0))
        try:
            theta = self.bank.solve(idx)
        except SingularFitError:
            logger.warning(f"Singular refit for a {idx.size}-term structure; using minimum-norm coefficients")
            theta = np.linalg.lstsq(self.bank.X_est[:, idx], self.bank.y_est, rcond=None)[0]
            return IdentifiedModel(model_set, bits, theta)
        y_hat, diverged = self.bank.free_run(idx, theta)
        nmse = WORST_CRITERION
        if not diverged:
            try:
                nmse = compute_nmse(self.bank.y_val, y_hat)
            except DegenerateDataError:
                logger.warning("Validation output is constant; NMSE undefined")
        return IdentifiedModel(model_set, bits, theta, self.criterion(bits), nmse)


def evaluate_bic(model_set: ModelSet, mask, dataset: Dataset, prediction: PredictionMode = "one_step") -> float:
    """J of one structure on one dataset (standalone form of BicEvaluator)."""
    evaluator = BicEvaluator(RegressorBank(model_set, dataset), prediction)
    return evaluator.criterion(as_mask(mask, len(model_set)))
