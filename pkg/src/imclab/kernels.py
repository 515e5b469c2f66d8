"""Markov kernel algebra on finite state spaces.

Everything downstream (tempering chains, exact asymptotic variances,
perturbation-bound checks) is built on the small set of operations here:
applying and iterating row-stochastic kernels, stationary distributions via
a direct linear solve, weighted supremum norms for functions and their dual
norms for signed measures, the induced distance between kernels, and fitted
certificates for geometric ergodicity and drift inequalities.

Operations accept either the typed containers (:class:`FiniteKernel`,
:class:`FiniteMeasure`, :class:`FiniteFunction`) or plain array-likes, and
return plain ``numpy`` arrays for function/measure-valued results.  Norm
accumulations use exactly-rounded summation (``math.fsum``) so results are
reproducible across platforms to full double precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonGeometricDecayError, ReducibleChainError

ROW_SUM_TOL = 1e-12
STATIONARY_RESIDUAL_TOL = 1e-12
_RANK_TOL = 1e-9
RHO_FLOOR = 1e-6
_DECAY_FLOOR = 1e-13


def as_matrix(kernel) -> np.ndarray:
    """Return the transition matrix of a kernel or array-like, unvalidated."""
    if isinstance(kernel, FiniteKernel):
        return kernel.rows
    return np.asarray(kernel, dtype=float)


def as_vector(obj) -> np.ndarray:
    """Return the underlying 1-d float array of a measure/function container."""
    if isinstance(obj, FiniteMeasure):
        return obj.weights
    if isinstance(obj, FiniteFunction):
        return obj.values
    return np.asarray(obj, dtype=float)


@dataclass(frozen=True)
class FiniteKernel:
    """Row-stochastic transition kernel on a finite state space.

    Rows index the current state, columns the next state.  Construction
    validates squareness, nonnegativity, and row sums within 1e-12 of one.
    """

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise ValueError(f"kernel must be a square matrix, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("kernel entries must be finite")
        if np.any(rows < 0):
            raise ValueError("kernel entries must be nonnegative")
        sums = np.array([math.fsum(row) for row in rows])
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            worst = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"row {worst} sums to {sums[worst]!r}, not 1 within {ROW_SUM_TOL}")

    @property
    def n_states(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class FiniteMeasure:
    """Nonnegative weight vector on a finite state space.

    With ``probability=True`` (default) the weights must sum to one within
    1e-12; signed measures are handled as plain arrays by the norm helpers.
    """

    weights: np.ndarray
    probability: bool = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1:
            raise ValueError("measure weights must be a 1-d array")
        if not np.all(np.isfinite(w)):
            raise ValueError("measure weights must be finite")
        if np.any(w < 0):
            raise ValueError("measure weights must be nonnegative")
        if self.probability and abs(math.fsum(w) - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"probability weights sum to {math.fsum(w)!r}, not 1")

    @property
    def n_states(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class FiniteFunction:
    """Real-valued function on a finite state space (finite entries only)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("function values must be a 1-d array")
        if not np.all(np.isfinite(v)):
            raise ValueError("function values must be finite (no NaN/inf)")


@dataclass(frozen=True)
class ErgodicityConstants:
    """Fitted geometric-ergodicity certificate (c, rho) with l = max(c, 1/(1-rho)).

    The certificate guarantees ``distance(P^n, pi) <= c * rho**n`` for every
    lag computed during the fit (including lag 0).
    """

    c: float
    rho: float
    l: float

    def __post_init__(self):
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError(f"c must be finite and >= 0, got {self.c}")
        if not (0 < self.rho < 1):
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        expected = max(self.c, 1.0 / (1.0 - self.rho))
        if self.l != expected:
            raise ValueError(f"l must equal max(c, 1/(1-rho)) = {expected}, got {self.l}")

    @classmethod
    def from_fit(cls, c: float, rho: float) -> "ErgodicityConstants":
        return cls(c=c, rho=rho, l=max(c, 1.0 / (1.0 - rho)))


@dataclass(frozen=True)
class DriftCertificate:
    """Certified drift inequality ``P v <= lam * v + b`` (pointwise)."""

    lam: float
    b: float

    def __post_init__(self):
        if not (0 < self.lam < 1):
            raise ValueError(f"lam must be in (0, 1), got {self.lam}")
        if not (self.b >= 0 and math.isfinite(self.b)):
            raise ValueError(f"b must be finite and >= 0, got {self.b}")


def apply_kernel(kernel, values) -> np.ndarray:
    """Return the function x -> sum_y P(x, y) f(y)."""
    rows = as_matrix(kernel)
    f = as_vector(values)
    if f.shape[0] != rows.shape[1]:
        raise ValueError(f"dimension mismatch: kernel {rows.shape}, function {f.shape}")
    return rows @ f


def iterate_kernel(kernel, n: int) -> FiniteKernel:
    """Return the n-step kernel P^n (the identity kernel for n = 0)."""
    if n < 0:
        raise ValueError(f"iteration count must be >= 0, got {n}")
    rows = as_matrix(kernel)
    return FiniteKernel(np.linalg.matrix_power(rows, n))


def stationary_distribution(kernel) -> np.ndarray:
    """Solve pi P = pi, sum(pi) = 1 by a direct linear solve.

    The fixed-point system ``(P^T - I) pi = 0`` is solved with one row
    replaced by the normalization constraint.  Uniqueness is verified first
    (null space of dimension one); reducible or multi-recurrent kernels
    raise :class:`ReducibleChainError`.  The returned vector satisfies
    ``||pi P - pi||_1 <= 1e-12``.
    """
    rows = as_matrix(kernel)
    n = rows.shape[0]
    a = rows.T - np.eye(n)
    svals = np.linalg.svd(a, compute_uv=False)
    null_dim = int(np.sum(svals <= _RANK_TOL * max(svals[0], 1.0)))
    if null_dim != 1:
        raise ReducibleChainError(
            f"stationary distribution is not unique (null space dimension {null_dim})"
        )
    bordered = a.copy()
    bordered[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(bordered, rhs)
    pi = np.clip(pi, 0.0, None)
    pi = pi / math.fsum(pi)
    # Residual polish by power steps; the solve is already near machine precision.
    for _ in range(100):
        residual = math.fsum(np.abs(pi @ rows - pi))
        if residual <= STATIONARY_RESIDUAL_TOL:
            return pi
        pi = pi @ rows
        pi = pi / math.fsum(pi)
    raise ReducibleChainError(f"stationary residual did not reach {STATIONARY_RESIDUAL_TOL}: {residual}")


def _require_minorized(v: np.ndarray) -> np.ndarray:
    if np.any(v < 1.0):
        raise ValueError("weight function must satisfy v >= 1 everywhere")
    return v


def v_norm_function(values, v) -> float:
    """Weighted supremum norm max_x |f(x)| / v(x), with v >= 1."""
    f = as_vector(values)
    w = _require_minorized(as_vector(v))
    if f.shape != w.shape:
        raise ValueError("function and weight must have the same length")
    return float(np.max(np.abs(f) / w))


def v_norm_measure(signed_weights, v) -> float:
    """Dual weighted norm of a signed measure: sum_x |mu(x)| * v(x)."""
    mu = np.asarray(signed_weights, dtype=float)
    w = _require_minorized(as_vector(v))
    if mu.shape != w.shape:
        raise ValueError("measure and weight must have the same length")
    return math.fsum(np.abs(mu) * w)


def v_operator_norm(matrix, v) -> float:
    """Kernel-style operator norm max_x v(x)^-1 sum_y |M(x, y)| v(y).

    Exact on finite spaces for any matrix (signed rows allowed); this is the
    norm in which kernel perturbations are measured throughout the package.
    """
    m = np.asarray(matrix, dtype=float)
    w = _require_minorized(as_vector(v))
    per_row = np.array([math.fsum(np.abs(row) * w) for row in m])
    return float(np.max(per_row / w))


def v_distance_kernels(k1, k2, v) -> float:
    """Weighted distance between two kernels on the same state space."""
    r1, r2 = as_matrix(k1), as_matrix(k2)
    if r1.shape != r2.shape:
        raise ValueError(f"kernels must share a state space: {r1.shape} vs {r2.shape}")
    return v_operator_norm(r1 - r2, v)


def convergence_profile(kernel, pi, v, alpha: float, n_max: int) -> np.ndarray:
    """Return distances d_n = ||P^n - pi||_{v^alpha} for n = 0 .. n_max."""
    rows = as_matrix(kernel)
    p = as_vector(pi)
    va = _require_minorized(as_vector(v)) ** alpha
    limit = np.outer(np.ones(rows.shape[0]), p)
    d = np.empty(n_max + 1)
    power = np.eye(rows.shape[0])
    for n in range(n_max + 1):
        d[n] = v_operator_norm(power - limit, va)
        if n < n_max:
            power = power @ rows
    return d


def fit_ergodicity_constants(kernel, pi, v, alpha: float, n_max: int) -> ErgodicityConstants:
    """Fit a certified geometric bound d_n <= c * rho**n from observed decay.

    rho is the least-squares geometric rate of ``log d_n`` over the tail half
    of the decaying lags (values at the 1e-13 numerical floor are excluded);
    c is the smallest constant making the bound hold at every computed lag
    above that floor, including lag 0, so the certificate is exact up to
    matrix-power noise rather than asymptotic.  Kernels whose distance
    profile does not decrease raise :class:`NonGeometricDecayError`.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    d = convergence_profile(kernel, pi, v, alpha, n_max)
    tail = d[1:]
    if np.all(tail <= _DECAY_FLOOR):
        # One-step coupling (e.g. constant rows): certificate only needs lag 0.
        rho = RHO_FLOOR
        c = max(1.0, float(d[0]))
        return ErgodicityConstants.from_fit(c, rho)
    if all(tail[i + 1] >= tail[i] - 1e-15 for i in range(len(tail) - 1)):
        raise NonGeometricDecayError("kernel distances to pi are non-decreasing; no geometric fit")
    # Regress only over the genuinely decaying range: lags past the first
    # crossing of the numerical floor carry matmul noise, not decay.
    last = n_max
    while last > 1 and d[last] <= _DECAY_FLOOR:
        last -= 1
    start = max(1, last // 2)
    ns = [float(n) for n in range(start, last + 1) if d[n] > _DECAY_FLOOR]
    logs = [math.log(d[n]) for n in range(start, last + 1) if d[n] > _DECAY_FLOOR]
    if len(ns) >= 2:
        slope = float(np.polyfit(ns, logs, 1)[0])
    else:
        slope = math.log(max(d[last], _DECAY_FLOOR)) / last
    if slope >= 0:
        raise NonGeometricDecayError(f"fitted decay rate exp({slope}) >= 1; no geometric fit")
    rho = max(min(math.exp(slope), 1.0 - 1e-9), RHO_FLOOR)
    c = 0.0
    for n in range(n_max + 1):
        if d[n] > _DECAY_FLOOR and rho**n > 0.0:
            c = max(c, d[n] / rho**n)
    c = max(c, float(d[0]))
    return ErgodicityConstants.from_fit(c, rho)


def fit_drift(kernel, v, lambda_floor: float = 0.5) -> DriftCertificate:
    """Fit a drift certificate P v <= lam * v + b, minimizing b / (1 - lam).

    The contraction factor is searched on the grid {0.05, ..., 0.95}; the
    score b / (1 - lam) bounds the stationary mean of v, ties go to the
    smaller factor, and the result is floored at ``lambda_floor``.  The
    certificate is re-verified pointwise before returning.
    """
    rows = as_matrix(kernel)
    w = _require_minorized(as_vector(v))
    pv = rows @ w
    best_lam, best_score = None, math.inf
    for lam in [round(0.05 * i, 2) for i in range(1, 20)]:
        b = max(float(np.max(pv - lam * w)), 0.0)
        score = b / (1.0 - lam)
        if score < best_score - 1e-15:
            best_lam, best_score = lam, score
    lam = max(best_lam, lambda_floor)
    b = max(float(np.max(pv - lam * w)), 0.0)
    if np.any(pv > lam * w + b + 1e-10):
        raise AssertionError("drift certificate failed pointwise re-verification")
    return DriftCertificate(lam=lam, b=b)


def kernel_to_json(kernel) -> str:
    """Serialize a kernel to the row-major JSON document {"n_states", "rows"}."""
    rows = as_matrix(kernel)
    return json.dumps({"n_states": rows.shape[0], "rows": rows.tolist()})


def kernel_from_json(text: str) -> FiniteKernel:
    doc = json.loads(text)
    kernel = FiniteKernel(np.asarray(doc["rows"], dtype=float))
    if kernel.n_states != doc["n_states"]:
        raise ValueError(f"n_states field {doc['n_states']} does not match rows shape {kernel.n_states}")
    return kernel


def measure_to_json(measure) -> str:
    """Serialize a measure to the JSON document {"weights": [...]}."""
    return json.dumps({"weights": as_vector(measure).tolist()})


def measure_from_json(text: str, probability: bool = True) -> FiniteMeasure:
    doc = json.loads(text)
    return FiniteMeasure(np.asarray(doc["weights"], dtype=float), probability=probability)
