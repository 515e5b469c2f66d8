"""Exact asymptotic quantities of the interacting chain on finite spaces.

For a frozen occupation measure the chain kernel, its stationary law, the
centered Poisson solution, and every variance appearing in the central limit
behaviour are finite-dimensional linear-algebra objects.  This module
computes them exactly: the within-chain (martingale) variance, the
fluctuation function transferring auxiliary noise into the main chain, its
Brownian scaling constant, the first-order linearization of the stationary
law in the occupation measure, and the perturbation inequalities that
control how fast all of these move when the measure moves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InconsistencyError, ReducibleChainError
from .kernels import (
    FiniteKernel,
    as_matrix,
    as_vector,
    fit_ergodicity_constants,
    stationary_distribution,
    v_distance_kernels,
    v_norm_measure,
    v_operator_norm,
)
from .targets import FiniteTarget, auxiliary_target_measure, drift_function
from .tempering import TemperingConfig, acceptance_table, interaction_kernel

POISSON_TOL = 1e-10


@dataclass(frozen=True)
class PoissonSolution:
    """Centered solution g of g - P g = f - pi(f), with the achieved residual."""

    g: np.ndarray
    pi_f: float
    residual: float


def poisson_solve(kernel, pi, f) -> PoissonSolution:
    """Solve the Poisson equation exactly on the centered subspace pi(g) = 0.

    Uses the fundamental-matrix system (I - P + 1 pi^T) g = f - pi(f), whose
    unique solution is automatically centered; the reported residual is the
    larger of the pointwise equation defect and the centering defect.
    """
    rows = as_matrix(kernel)
    p = as_vector(pi)
    fv = as_vector(f)
    n = rows.shape[0]
    if p.shape != (n,) or fv.shape != (n,):
        raise ValueError("kernel, measure and function dimensions must agree")
    pi_f = math.fsum(p * fv)
    system = np.eye(n) - rows + np.outer(np.ones(n), p)
    try:
        g = np.linalg.solve(system, fv - pi_f)
    except np.linalg.LinAlgError as exc:
        raise ReducibleChainError(f"Poisson system is singular; kernel not ergodic: {exc}") from exc
    g = g - math.fsum(p * g)
    defect = float(np.max(np.abs(g - rows @ g - (fv - pi_f))))
    centering = abs(math.fsum(p * g))
    return PoissonSolution(g=g, pi_f=pi_f, residual=max(defect, centering))


def poisson_operator(kernel, pi) -> np.ndarray:
    """Return the matrix of the centered Poisson operator f -> g.

    Computed as inv(I - P + 1 pi^T) - 1 pi^T; applying it to f gives the
    same solution as :func:`poisson_solve`.
    """
    rows = as_matrix(kernel)
    p = as_vector(pi)
    n = rows.shape[0]
    ones_pi = np.outer(np.ones(n), p)
    try:
        z = np.linalg.inv(np.eye(n) - rows + ones_pi)
    except np.linalg.LinAlgError as exc:
        raise ReducibleChainError(f"Poisson system is singular; kernel not ergodic: {exc}") from exc
    return z - ones_pi


def step_variance(kernel, poisson_g) -> np.ndarray:
    """One-step conditional variance of the Poisson solution: P g^2 - (P g)^2."""
    rows = as_matrix(kernel)
    g = as_vector(poisson_g)
    pg = rows @ g
    return rows @ (g * g) - pg * pg


@dataclass(frozen=True)
class LimitAnalysis:
    """All limit-measure objects for one instance and one test function."""

    target: FiniteTarget
    epsilon: float
    f: np.ndarray
    theta_star: np.ndarray
    kernel_star: FiniteKernel
    pi_star: np.ndarray
    poisson: PoissonSolution
    sigma_sq: float


def analyze_limit(target: FiniteTarget, base_kernel, epsilon: float, f) -> LimitAnalysis:
    """Assemble the limit kernel, its stationary law, Poisson solution and
    within-chain variance for one instance."""
    theta_star = auxiliary_target_measure(target)
    kernel_star = interaction_kernel(base_kernel, theta_star, target, epsilon)
    pi_star = stationary_distribution(kernel_star)
    fv = as_vector(f)
    sol = poisson_solve(kernel_star, pi_star, fv)
    f_step = step_variance(kernel_star, sol.g)
    sigma_sq = max(math.fsum(pi_star * f_step), 0.0)
    return LimitAnalysis(
        target=target, epsilon=epsilon, f=fv, theta_star=theta_star,
        kernel_star=kernel_star, pi_star=pi_star, poisson=sol, sigma_sq=sigma_sq,
    )


def within_chain_variance(target: FiniteTarget, base_kernel, epsilon: float, f) -> float:
    """Martingale component of the CLT variance: pi(P g^2 - (P g)^2) at the limit."""
    return analyze_limit(target, base_kernel, epsilon, f).sigma_sq


def fluctuation_function(target: FiniteTarget, base_kernel, epsilon: float, f) -> np.ndarray:
    """Function through which auxiliary-sample noise enters the main chain.

    For each state z this integrates, against the limit stationary law, the
    acceptance-weighted change of the Poisson solution caused by replacing
    one auxiliary draw by z; it is centered under the auxiliary limit
    measure by construction.
    """
    analysis = analyze_limit(target, base_kernel, epsilon, f)
    return fluctuation_function_from(analysis)


def fluctuation_function_from(analysis: LimitAnalysis) -> np.ndarray:
    r = acceptance_table(analysis.target)
    g = analysis.poisson.g
    pi = analysis.pi_star
    pulled = pi @ r
    t = g * pulled - (pi * g) @ r
    centered = t - math.fsum(analysis.theta_star * t)
    return analysis.epsilon * centered


def fluctuation_variance(gf, theta_star, mode: str = "iid", auxiliary_kernel=None) -> float:
    """Brownian scaling constant of auxiliary partial sums of the fluctuation
    function.

    ``iid`` mode returns the plain variance under the auxiliary limit
    measure; ``markov`` mode returns the Markov-chain asymptotic variance
    under the auxiliary kernel (computed through its Poisson solution);
    ``pinned`` mode has no auxiliary fluctuation and returns zero.
    """
    g = as_vector(gf)
    w = as_vector(theta_star)
    mean = math.fsum(w * g)
    if abs(mean) > 1e-8 * max(1.0, float(np.max(np.abs(g)))):
        raise ValueError(f"fluctuation function must be centered under the auxiliary measure, got mean {mean}")
    if mode == "pinned":
        return 0.0
    if mode == "iid":
        return math.fsum(w * (g - mean) ** 2)
    if mode == "markov":
        if auxiliary_kernel is None:
            raise ConfigurationError("markov mode requires the auxiliary kernel")
        rows = as_matrix(auxiliary_kernel)
        drift = math.fsum(np.abs(w @ rows - w))
        if drift > 1e-10:
            raise ConfigurationError(
                f"auxiliary kernel is not stationary for the auxiliary measure (defect {drift})"
            )
        sol = poisson_solve(rows, w, g)
        return max(2.0 * math.fsum(w * g * sol.g) - math.fsum(w * g * g), 0.0)
    raise ConfigurationError(f"unknown auxiliary mode {mode!r}")


def linearization_residual(theta, target: FiniteTarget, base_kernel, epsilon: float, f,
                           tol: float = POISSON_TOL) -> tuple[float, float]:
    """First-order term and exact remainder of the stationary-law expansion.

    Returns ``(first_order, remainder)`` where the first-order term probes
    the kernel difference against the limit law through the Poisson
    solution, and the remainder is the exact second application of the same
    operation.  Raises if the two terms do not reproduce the true difference
    of stationary means within ``tol``.
    """
    analysis = analyze_limit(target, base_kernel, epsilon, f)
    w = as_vector(theta)
    kernel_theta = interaction_kernel(base_kernel, w, target, epsilon)
    pi_theta = stationary_distribution(kernel_theta)
    diff = kernel_theta.rows - analysis.kernel_star.rows
    g = analysis.poisson.g
    u = diff @ g
    first = math.fsum(analysis.pi_star * u)
    smoothed = poisson_solve(analysis.kernel_star, analysis.pi_star, u).g
    remainder = math.fsum(pi_theta * (diff @ smoothed))
    exact = math.fsum(pi_theta * analysis.f) - analysis.poisson.pi_f
    defect = abs(exact - first - remainder)
    if defect > tol:
        raise InconsistencyError(
            f"two-term expansion defect {defect} exceeds {tol} "
            f"(exact {exact}, first {first}, remainder {remainder})"
        )
    return first, remainder


@dataclass(frozen=True)
class BoundCheck:
    """One verified inequality: left side, right side, and the margin."""

    name: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return bool(self.lhs <= self.rhs + 1e-12 * max(1.0, abs(self.rhs)))


@dataclass(frozen=True)
class PerturbationBoundReport:
    """Perturbation inequalities for one pair of occupation measures."""

    checks: tuple
    constants: tuple
    distance: float

    @property
    def all_ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def violations(self) -> list:
        return [c for c in self.checks if not c.ok]


def check_perturbation_bounds(theta1, theta2, target: FiniteTarget, base_kernel,
                              epsilon: float, alpha: float, n_max: int = 60) -> PerturbationBoundReport:
    """Verify the kernel-perturbation inequalities for two occupation measures.

    Fits certified ergodicity constants for both induced kernels at the given
    weight exponent, then checks, against the weighted kernel distance, the
    bounds on: the stationary-law difference, the Poisson-operator
    difference, the smoothed Poisson-operator difference, the norm of each
    Poisson operator, and the kernel distance itself against the measure
    distance.  All sides are computed exactly; nothing is estimated.
    """
    w1, w2 = as_vector(theta1), as_vector(theta2)
    v = drift_function(target)
    va = v**alpha
    k1 = interaction_kernel(base_kernel, w1, target, epsilon)
    k2 = interaction_kernel(base_kernel, w2, target, epsilon)
    pi1 = stationary_distribution(k1)
    pi2 = stationary_distribution(k2)
    c1 = fit_ergodicity_constants(k1, pi1, v, alpha, n_max)
    c2 = fit_ergodicity_constants(k2, pi2, v, alpha, n_max)
    l_max = max(c1.l, c2.l)
    dist = v_distance_kernels(k1, k2, va)
    pi1_va = math.fsum(pi1 * va)
    lam1 = poisson_operator(k1, pi1)
    lam2 = poisson_operator(k2, pi2)
    checks = (
        BoundCheck("stationary_difference",
                   v_norm_measure(pi1 - pi2, va), 2.0 * l_max**4 * pi1_va * dist),
        BoundCheck("poisson_difference",
                   v_operator_norm(lam1 - lam2, va), 3.0 * l_max**6 * pi1_va * dist),
        BoundCheck("smoothed_poisson_difference",
                   v_operator_norm(k1.rows @ lam1 - k2.rows @ lam2, va),
                   5.0 * l_max**6 * pi1_va * dist),
        BoundCheck("poisson_norm_1", v_operator_norm(lam1, va), c1.l**2),
        BoundCheck("poisson_norm_2", v_operator_norm(lam2, va), c2.l**2),
        BoundCheck("kernel_distance", dist, 2.0 * v_norm_measure(w1 - w2, va)),
    )
    return PerturbationBoundReport(checks=checks, constants=(c1, c2), distance=dist)


@dataclass(frozen=True)
class VarianceReport:
    """Predicted CLT variance split into its two components.

    ``total`` is exactly ``sigma_sq + 2 * gamma_tilde_sq``: the within-chain
    martingale part plus twice the auxiliary fluctuation constant (the
    factor two is the variance of the log-weighted Brownian average through
    which auxiliary noise accumulates).
    """

    sigma_sq: float
    gamma_tilde_sq: float
    total: float
    residuals: dict = field(default_factory=dict)
    bounds: tuple = ()

    def __post_init__(self):
        if self.total != self.sigma_sq + 2.0 * self.gamma_tilde_sq:
            raise ValueError("total must equal sigma_sq + 2 * gamma_tilde_sq exactly")

    def to_json(self) -> str:
        return json.dumps({
            "sigma_sq": self.sigma_sq,
            "gamma_tilde_sq": self.gamma_tilde_sq,
            "total": self.total,
            "residuals": self.residuals,
            "bounds": [
                {"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "margin": c.margin, "ok": c.ok}
                for c in self.bounds
            ],
        })


def _require_oracle_auxiliary(cfg: TemperingConfig) -> None:
    measure = cfg.resolved_auxiliary_measure()
    star = auxiliary_target_measure(cfg.target)
    if float(np.max(np.abs(measure - star))) > 1e-12:
        raise ConfigurationError(
            "variance predictions require the auxiliary measure to be the tempered limit measure"
        )


def total_asymptotic_variance(cfg: TemperingConfig, f, include_bounds: bool = False) -> VarianceReport:
    """Predicted CLT variance for a configured finite-state run.

    The auxiliary fluctuation constant is computed for the configured
    auxiliary mechanism (iid draws, auxiliary Markov kernel, or pinned).
    With ``include_bounds`` the report also carries the perturbation checks
    for the pair (limit measure, uniform measure).
    """
    if not cfg.is_finite:
        raise ConfigurationError("exact variance predictions require a finite target")
    _require_oracle_auxiliary(cfg)
    analysis = analyze_limit(cfg.target, cfg.base_kernel, cfg.epsilon, f)
    gf = fluctuation_function_from(analysis)
    gamma = fluctuation_variance(
        gf, analysis.theta_star, mode=cfg.auxiliary_mode, auxiliary_kernel=cfg.auxiliary_kernel
    )
    n = cfg.target.n_states
    uniform = np.full(n, 1.0 / n)
    first, remainder = linearization_residual(uniform, cfg.target, cfg.base_kernel, cfg.epsilon, f)
    pi_uniform = stationary_distribution(interaction_kernel(cfg.base_kernel, uniform, cfg.target, cfg.epsilon))
    exact = math.fsum(pi_uniform * analysis.f) - analysis.poisson.pi_f
    residuals = {
        "poisson": analysis.poisson.residual,
        "linearization": abs(exact - first - remainder),
    }
    bounds = ()
    if include_bounds:
        report = check_perturbation_bounds(
            analysis.theta_star, uniform, cfg.target, cfg.base_kernel, cfg.epsilon, alpha=0.3
        )
        bounds = report.checks
    return VarianceReport(
        sigma_sq=analysis.sigma_sq,
        gamma_tilde_sq=gamma,
        total=analysis.sigma_sq + 2.0 * gamma,
        residuals=residuals,
        bounds=bounds,
    )
