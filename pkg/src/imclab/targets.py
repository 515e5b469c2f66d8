"""Target distributions, tempering, drift weights, and Metropolis kernels.

Finite targets hold a normalized positive probability vector plus the two
exponents used everywhere downstream: ``beta`` (the inverse-temperature gap
driving the interaction acceptance ratio) and ``tau`` (the exponent of the
drift weight function).  Continuous targets wrap a log-density callable and
run sampling-only; exact analysis is finite-state territory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import FiniteKernel, as_matrix

_SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class FiniteTarget:
    """Positive target distribution on a finite space with tempering exponents.

    ``weights`` may be unnormalized at construction (MCMC practice: densities
    known up to scale) and are normalized once.  ``beta`` in (0, 1] and
    ``tau`` in (0, 1).
    """

    weights: np.ndarray
    beta: float
    tau: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("target weights must be a 1-d array with at least 2 states")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("target weights must be finite and strictly positive")
        object.__setattr__(self, "weights", w / math.fsum(w))
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")

    @property
    def n_states(self) -> int:
        return self.weights.shape[0]

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)


@dataclass
class ContinuousTarget:
    """Continuous target known through its log-density (sampling only)."""

    log_density: Callable[[np.ndarray], float]
    dimension: int
    beta: float = 1.0
    tau: float = 0.5
    name: str = field(default="custom")

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")


def drift_function(target: FiniteTarget) -> np.ndarray:
    """Drift weight v(x) = (pi(x) / max pi)**(-tau); equals 1 at the mode."""
    pi = target.weights
    return (pi / pi.max()) ** (-target.tau)


def tempered_measure(target: FiniteTarget, exponent: float) -> np.ndarray:
    """Normalized measure proportional to pi**exponent (computed in log space)."""
    if not 0 < exponent <= 1:
        raise ValueError(f"exponent must be in (0, 1], got {exponent}")
    logw = exponent * target.log_weights
    w = np.exp(logw - logw.max())
    return w / math.fsum(w)


def auxiliary_target_measure(target: FiniteTarget) -> np.ndarray:
    """Limit occupation measure of the auxiliary process, pi**(1 - beta).

    For beta = 1 the exponent degenerates and the limit is uniform.
    """
    if target.beta == 1.0:
        return np.full(target.n_states, 1.0 / target.n_states)
    return tempered_measure(target, 1.0 - target.beta)


def metropolis_kernel_finite(target: FiniteTarget, proposal) -> FiniteKernel:
    """Metropolis kernel for the target with a symmetric finite proposal.

    Off-diagonal mass is q(x, y) * min(1, pi(y) / pi(x)); rejected mass is
    absorbed on the diagonal.  The result is row-stochastic and in detailed
    balance with pi.
    """
    q = as_matrix(proposal)
    n = target.n_states
    if q.shape != (n, n):
        raise ValueError(f"proposal shape {q.shape} does not match target size {n}")
    if np.max(np.abs(q - q.T)) > _SYMMETRY_TOL:
        raise ValueError("proposal kernel must be symmetric within 1e-12")
    pi = target.weights
    accept = np.minimum(1.0, pi[np.newaxis, :] / pi[:, np.newaxis])
    moves = q * accept
    rows = moves.copy()
    idx = np.arange(n)
    rows[idx, idx] += 1.0 - np.array([math.fsum(row) for row in moves])
    return FiniteKernel(rows)


def uniform_proposal(n_states: int) -> FiniteKernel:
    """Uniform symmetric proposal q(x, y) = 1/n for all pairs."""
    return FiniteKernel(np.full((n_states, n_states), 1.0 / n_states))


def srwm_step(target: ContinuousTarget, x: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    """One symmetric random-walk Metropolis step targeting density**beta.

    Consumes exactly ``dimension`` Gaussian variates (the proposal increment)
    followed by one uniform (the acceptance draw).  Non-finite log-density at
    the proposal is treated as a rejection.
    """
    if scale <= 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    x = np.asarray(x, dtype=float)
    proposal = x + scale * rng.standard_normal(target.dimension)
    log_ratio = target.beta * (target.log_density(proposal) - target.log_density(x))
    u = rng.random()
    if math.isfinite(log_ratio) and (log_ratio >= 0.0 or math.log(u) < log_ratio):
        return proposal
    return x.copy()


def _std_normal_logpdf(x: np.ndarray) -> float:
    x = np.atleast_1d(x)
    return float(-0.5 * np.dot(x, x) - 0.5 * x.size * math.log(2 * math.pi))


def _two_mode_mixture_logpdf(x: np.ndarray) -> float:
    x = np.atleast_1d(x)
    a = -0.5 * np.sum((x - 2.0) ** 2)
    b = -0.5 * np.sum((x + 2.0) ** 2)
    m = max(a, b)
    return float(m + math.log(0.5 * math.exp(a - m) + 0.5 * math.exp(b - m)))


def continuous_target(name: str, dimension: int = 1, beta: float = 1.0, tau: float = 0.5) -> ContinuousTarget:
    """Look up a built-in continuous target by name.

    Available: ``std_normal`` (isotropic standard Gaussian) and
    ``gaussian_mixture`` (equal two-component mixture at +/-2).
    """
    registry = {
        "std_normal": _std_normal_logpdf,
        "gaussian_mixture": _two_mode_mixture_logpdf,
    }
    if name not in registry:
        raise ValueError(f"unknown continuous target {name!r}; available: {sorted(registry)}")
    return ContinuousTarget(registry[name], dimension=dimension, beta=beta, tau=tau, name=name)


def target_to_json(target: FiniteTarget) -> str:
    """Serialize a finite target to {"weights", "beta", "tau"}."""
    return json.dumps({"weights": target.weights.tolist(), "beta": target.beta, "tau": target.tau})


def target_from_json(text: str) -> FiniteTarget:
    doc = json.loads(text)
    return FiniteTarget(np.asarray(doc["weights"], dtype=float), beta=doc["beta"], tau=doc["tau"])
