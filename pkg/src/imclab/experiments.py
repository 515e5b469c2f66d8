"""Statistical verification experiments for the interacting tempering chain.

Replicated desk-scale simulations compare empirical fluctuation statistics
against the exact predictions of :mod:`imclab.asymptotics`: the full CLT for
the main chain, its martingale / stationary-fluctuation split, the law of
large numbers for the one-step conditional variance, trend diagnostics for
the regularity conditions behind those limits, and the moment decay of the
auxiliary occupation measure.

Replications are embarrassingly parallel: replication ``i`` always uses the
streams keyed by ``(config seed, i)``, so results do not depend on the
worker count and identical runs are byte-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .asymptotics import analyze_limit, poisson_solve, total_asymptotic_variance
from .errors import ConfigurationError, InconsistencyError
from .kernels import as_matrix, as_vector, stationary_distribution
from .streams import derive_stream
from .tempering import TemperingConfig, Trajectory, acceptance_table, interaction_kernel, run_chain

KS_COEFF_1PCT = 1.63  # asymptotic Kolmogorov critical coefficient at the 1% level
DEFAULT_VARIANCE_BAND = 0.15
_BLOCK = 8192


# ---------------------------------------------------------------------------
# Output-analysis primitives
# ---------------------------------------------------------------------------

def ks_distance(samples) -> float:
    """Sup distance between the empirical CDF and the standard normal CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.shape[0]
    if n < 2:
        raise ValueError("ks_distance needs at least 2 samples")
    cdf = ndtr(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def batch_means_variance(values, n_batches: int = 50) -> float:
    """Batch-means estimate of the asymptotic variance of the time average."""
    v = np.asarray(values, dtype=float)
    if n_batches < 10:
        raise ValueError("need at least 10 batches")
    m = v.shape[0] // n_batches
    if m < 1:
        raise ValueError("too few values for the requested number of batches")
    means = v[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(m * np.var(means, ddof=1))


def tail_log_slope(n_grid, values) -> float:
    """Least-squares slope of log|values| against log n over the tail half."""
    n = np.asarray(n_grid, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    start = max(0, len(n) // 2 - 1) if len(n) > 2 else 0
    keep = v[start:] > 0
    if np.sum(keep) < 2:
        return 0.0
    return float(np.polyfit(np.log(n[start:][keep]), np.log(v[start:][keep]), 1)[0])


# ---------------------------------------------------------------------------
# Exact per-step quantities along a simulated path (finite spaces)
# ---------------------------------------------------------------------------

def governing_theta_path(traj: Trajectory) -> np.ndarray:
    """Occupation measure governing each step, as an (n_steps, n_states) array.

    Step k of the run is driven by the average of the first k auxiliary
    samples (pinned runs are driven by the pinned measure at every step).
    """
    cfg = traj.config
    n_states = cfg.target.n_states
    n = traj.n_steps
    if cfg.auxiliary_mode == "pinned":
        return np.broadcast_to(cfg.resolved_auxiliary_measure(), (n, n_states)).copy()
    counts = np.zeros((n, n_states))
    counts[np.arange(n), traj.y] = 1.0
    np.cumsum(counts, axis=0, out=counts)
    return counts / np.arange(1, n + 1)[:, np.newaxis]


def _kernel_block(theta_block: np.ndarray, base_rows: np.ndarray, accept: np.ndarray,
                  epsilon: float) -> np.ndarray:
    move = accept[np.newaxis, :, :] * theta_block[:, np.newaxis, :]
    kp = (1.0 - epsilon) * base_rows[np.newaxis, :, :] + epsilon * move
    reject = 1.0 - move.sum(axis=2)
    idx = np.arange(base_rows.shape[0])
    kp[:, idx, idx] += epsilon * reject
    return kp


def _stationary_block(kp: np.ndarray) -> np.ndarray:
    m, s = kp.shape[0], kp.shape[1]
    a = np.transpose(kp, (0, 2, 1)) - np.eye(s)[np.newaxis, :, :]
    a[:, -1, :] = 1.0
    b = np.zeros((m, s, 1))
    b[:, -1, 0] = 1.0
    return np.linalg.solve(a, b)[:, :, 0]


def _poisson_block(kp: np.ndarray, pi_block: np.ndarray, f: np.ndarray) -> np.ndarray:
    s = kp.shape[1]
    pif = pi_block @ f
    a = np.eye(s)[np.newaxis, :, :] - kp + pi_block[:, np.newaxis, :]
    b = (f[np.newaxis, :] - pif[:, np.newaxis])[:, :, np.newaxis]
    g = np.linalg.solve(a, b)[:, :, 0]
    return g - np.sum(pi_block * g, axis=1, keepdims=True)


@dataclass
class _PathTables:
    base_rows: np.ndarray
    accept: np.ndarray
    epsilon: float
    f: np.ndarray


def _path_tables(cfg: TemperingConfig, f) -> _PathTables:
    return _PathTables(
        base_rows=as_matrix(cfg.base_kernel),
        accept=acceptance_table(cfg.target),
        epsilon=cfg.epsilon,
        f=as_vector(f),
    )


def _constant_theta(cfg: TemperingConfig) -> Optional[np.ndarray]:
    if cfg.epsilon == 0.0:
        return cfg.resolved_auxiliary_measure()
    if cfg.auxiliary_mode == "pinned":
        return cfg.resolved_auxiliary_measure()
    return None


def stationary_mean_path(traj: Trajectory, f) -> np.ndarray:
    """Exact stationary mean of f under the kernel governing each step."""
    cfg = traj.config
    tables = _path_tables(cfg, f)
    frozen = _constant_theta(cfg)
    if frozen is not None:
        kernel = interaction_kernel(tables.base_rows, frozen, cfg.target, cfg.epsilon)
        value = math.fsum(stationary_distribution(kernel) * tables.f)
        return np.full(traj.n_steps, value)
    theta = governing_theta_path(traj)
    out = np.empty(traj.n_steps)
    for lo in range(0, traj.n_steps, _BLOCK):
        hi = min(lo + _BLOCK, traj.n_steps)
        kp = _kernel_block(theta[lo:hi], tables.base_rows, tables.accept, cfg.epsilon)
        out[lo:hi] = _stationary_block(kp) @ tables.f
    return out


def step_variance_path(traj: Trajectory, f) -> np.ndarray:
    """One-step conditional variance of the Poisson solution along the path.

    Entry k is the conditional variance function of the kernel governing
    step k+1, evaluated at the pre-step state X_k (X_0 for the first entry).
    """
    cfg = traj.config
    tables = _path_tables(cfg, f)
    n = traj.n_steps
    x_prev = np.concatenate(([traj.x0], traj.x[:-1])).astype(np.int64)
    frozen = _constant_theta(cfg)
    out = np.empty(n)
    if frozen is not None:
        kernel = interaction_kernel(tables.base_rows, frozen, cfg.target, cfg.epsilon)
        pi = stationary_distribution(kernel)
        g = poisson_solve(kernel, pi, tables.f).g
        rows = kernel.rows[x_prev]
        out[:] = rows @ (g * g) - (rows @ g) ** 2
        return out
    theta = governing_theta_path(traj)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        kp = _kernel_block(theta[lo:hi], tables.base_rows, tables.accept, cfg.epsilon)
        pi = _stationary_block(kp)
        g = _poisson_block(kp, pi, tables.f)
        rows = np.take_along_axis(kp, x_prev[lo:hi, np.newaxis, np.newaxis], axis=1)[:, 0, :]
        out[lo:hi] = np.sum(rows * g * g, axis=1) - np.sum(rows * g, axis=1) ** 2
    return out


# ---------------------------------------------------------------------------
# Replicated CLT experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicationSums:
    """Per-replication normalized sums: full, martingale part, remainder part."""

    z: np.ndarray
    s1: Optional[np.ndarray]
    s2: Optional[np.ndarray]
    n_steps: int


def _replication_worker(args):
    cfg, f, index, pathwise, pi_star_f = args
    traj = run_chain(replace(cfg, replication_index=index))
    n = traj.n_steps
    fx = f[traj.x]
    scale = math.sqrt(n)
    z = float((np.sum(fx) - n * pi_star_f) / scale)
    if not pathwise:
        return index, z, None, None
    pif = stationary_mean_path(traj, f)
    s1 = float(np.sum(fx - pif) / scale)
    s2 = float(np.sum(pif - pi_star_f) / scale)
    return index, z, s1, s2


def replication_sums(cfg: TemperingConfig, f, n_replications: int, pathwise: bool = False,
                     threads: int = 1) -> ReplicationSums:
    """Run independent replications and collect their normalized sums.

    Replication ``i`` runs the configured chain with ``replication_index=i``
    (deterministic stream assignment).  With ``pathwise=True`` the sums are
    also split into the martingale part (against the exact stationary mean
    of the governing kernel at every step) and the stationary-fluctuation
    part; this costs one batched linear solve per step.
    """
    if n_replications < 1:
        raise ValueError("need at least one replication")
    fv = as_vector(f)
    analysis = analyze_limit(cfg.target, cfg.base_kernel, cfg.epsilon, fv)
    pi_star_f = analysis.poisson.pi_f
    jobs = [(cfg, fv, i, pathwise, pi_star_f) for i in range(n_replications)]
    if threads > 1:
        chunk = max(1, n_replications // (threads * 8))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replication_worker, jobs, chunksize=chunk))
    else:
        results = [_replication_worker(job) for job in jobs]
    results.sort(key=lambda r: r[0])
    z = np.array([r[1] for r in results])
    s1 = np.array([r[2] for r in results]) if pathwise else None
    s2 = np.array([r[3] for r in results]) if pathwise else None
    return ReplicationSums(z=z, s1=s1, s2=s2, n_steps=cfg.n_steps)


@dataclass(frozen=True)
class CLTReport:
    """Replication-level comparison of empirical and predicted CLT variance."""

    n_steps: int
    n_replications: int
    predicted_variance: float
    empirical_variance: float
    variance_ratio: float
    ks_distance: float
    passed: bool
    degenerate: bool
    per_replication_sums: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "n_replications": self.n_replications,
            "predicted_variance": self.predicted_variance,
            "empirical_variance": self.empirical_variance,
            "variance_ratio": self.variance_ratio,
            "ks_distance": self.ks_distance,
            "passed": self.passed,
            "degenerate": self.degenerate,
        }


def report_from_sums(sums: np.ndarray, predicted: float, n_steps: int,
                     variance_band: float = DEFAULT_VARIANCE_BAND,
                     ks_coeff: float = KS_COEFF_1PCT) -> CLTReport:
    """Build the pass/fail report for one set of replication sums.

    Pass requires the empirical/predicted variance ratio inside
    ``1 +/- variance_band`` and the Kolmogorov distance of the standardized
    sums below ``ks_coeff / sqrt(R)``.  A zero predicted variance is legal
    only if every sum is (numerically) zero; the report is then flagged
    degenerate and passes.
    """
    sums = np.asarray(sums, dtype=float)
    r = sums.shape[0]
    if predicted <= 1e-14:
        if float(np.max(np.abs(sums))) > 1e-9:
            raise InconsistencyError("predicted variance is zero but replication sums are not")
        return CLTReport(
            n_steps=n_steps, n_replications=r, predicted_variance=predicted,
            empirical_variance=0.0, variance_ratio=1.0, ks_distance=0.0,
            passed=True, degenerate=True, per_replication_sums=sums,
        )
    empirical = float(np.var(sums, ddof=1))
    ratio = empirical / predicted
    ks = ks_distance(sums / math.sqrt(predicted))
    passed = (1.0 - variance_band <= ratio <= 1.0 + variance_band) and ks < ks_coeff / math.sqrt(r)
    return CLTReport(
        n_steps=n_steps, n_replications=r, predicted_variance=predicted,
        empirical_variance=empirical, variance_ratio=ratio, ks_distance=ks,
        passed=passed, degenerate=False, per_replication_sums=sums,
    )


def _check_replications(n_replications: int) -> None:
    if n_replications < 100:
        raise ValueError("CLT experiments need at least 100 replications")


def clt_experiment(cfg: TemperingConfig, f, n_replications: int, threads: int = 1,
                   variance_band: float = DEFAULT_VARIANCE_BAND,
                   ks_coeff: float = KS_COEFF_1PCT) -> CLTReport:
    """Test the full CLT: normalized sums of f against the limit mean."""
    _check_replications(n_replications)
    predicted = total_asymptotic_variance(cfg, f).total
    sums = replication_sums(cfg, f, n_replications, pathwise=False, threads=threads)
    return report_from_sums(sums.z, predicted, cfg.n_steps, variance_band, ks_coeff)


def martingale_clt_experiment(cfg: TemperingConfig, f, n_replications: int, threads: int = 1,
                              variance_band: float = DEFAULT_VARIANCE_BAND,
                              ks_coeff: float = KS_COEFF_1PCT) -> CLTReport:
    """Test the martingale CLT: sums of f centered at the exact per-step
    stationary mean of the governing kernel."""
    _check_replications(n_replications)
    predicted = total_asymptotic_variance(cfg, f).sigma_sq
    sums = replication_sums(cfg, f, n_replications, pathwise=True, threads=threads)
    return report_from_sums(sums.s1, predicted, cfg.n_steps, variance_band, ks_coeff)


def pi_fluctuation_experiment(cfg: TemperingConfig, f, n_replications: int, threads: int = 1,
                              variance_band: float = DEFAULT_VARIANCE_BAND,
                              ks_coeff: float = KS_COEFF_1PCT) -> CLTReport:
    """Test the stationary-fluctuation CLT: sums of the exact per-step
    stationary means against the limit mean."""
    _check_replications(n_replications)
    report = total_asymptotic_variance(cfg, f)
    predicted = 2.0 * report.gamma_tilde_sq
    sums = replication_sums(cfg, f, n_replications, pathwise=True, threads=threads)
    return report_from_sums(sums.s2, predicted, cfg.n_steps, variance_band, ks_coeff)


# ---------------------------------------------------------------------------
# LLN, regularity diagnostics, and occupation-measure moment decay
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticSeries:
    """A labelled sequence over a grid of run lengths, with its decay slope."""

    label: str
    n_grid: np.ndarray
    values: np.ndarray
    fitted_slope: float
    extras: dict = field(default_factory=dict)


def _lln_worker(args):
    cfg, fv, index, grid = args
    traj = run_chain(replace(cfg, replication_index=index))
    fpath = step_variance_path(traj, fv)
    partial = np.cumsum(fpath)
    return partial[grid - 1] / grid


def lln_experiment(cfg: TemperingConfig, f, n_grid, n_seeds: int = 1,
                   threads: int = 1) -> DiagnosticSeries:
    """Running average of the per-step conditional variance against its limit.

    Values are deviations of the (seed-averaged) running averages from the
    predicted within-chain variance; the fitted slope of their magnitude
    should be near -1/2.
    """
    grid = np.asarray(sorted(n_grid), dtype=np.int64)
    if grid[0] < 1:
        raise ValueError("grid entries must be >= 1")
    sigma_sq = total_asymptotic_variance(cfg, f).sigma_sq
    run_cfg = replace(cfg, n_steps=int(grid[-1]))
    fv = as_vector(f)
    jobs = [(run_cfg, fv, i, grid) for i in range(n_seeds)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_lln_worker, jobs))
    else:
        rows = [_lln_worker(job) for job in jobs]
    estimates = np.mean(np.vstack(rows), axis=0)
    deviations = estimates - sigma_sq
    return DiagnosticSeries(
        label="conditional_variance_lln",
        n_grid=grid,
        values=deviations,
        fitted_slope=tail_log_slope(grid, deviations),
        extras={"estimates": estimates, "reference": sigma_sq, "n_seeds": n_seeds},
    )


def _ergodicity_l_path(kp: np.ndarray, pi_block: np.ndarray, va: np.ndarray,
                       n_lags: int) -> np.ndarray:
    """Vectorized fitted ergodicity constant L for a block of kernels."""
    m, s = kp.shape[0], kp.shape[1]
    power = np.broadcast_to(np.eye(s), (m, s, s)).copy()
    d = np.empty((m, n_lags + 1))
    for lag in range(n_lags + 1):
        diff = np.abs(power - pi_block[:, np.newaxis, :])
        d[:, lag] = np.max((diff @ va) / va[np.newaxis, :], axis=1)
        if lag < n_lags:
            power = power @ kp
    start = max(1, n_lags // 2)
    lags = np.arange(start, n_lags + 1, dtype=float)
    logs = np.log(np.clip(d[:, start:], 1e-290, None))
    lbar = lags.mean()
    slope = ((lags - lbar) * (logs - logs.mean(axis=1, keepdims=True))).sum(axis=1)
    slope /= ((lags - lbar) ** 2).sum()
    rho = np.clip(np.exp(slope), 1e-6, 1.0 - 1e-9)
    c = np.max(d / rho[:, np.newaxis] ** np.arange(n_lags + 1)[np.newaxis, :], axis=1)
    return np.maximum(c, 1.0 / (1.0 - rho))


def _diagnostics_worker(args):
    cfg, fv, index, grid, alpha, ergodicity_lags = args
    from .targets import drift_function
    from .asymptotics import poisson_operator

    n = int(grid[-1])
    traj = run_chain(replace(cfg, n_steps=n, replication_index=index))
    tables = _path_tables(cfg, fv)
    v = drift_function(cfg.target)
    va = v**alpha
    x_prev = np.concatenate(([traj.x0], traj.x[:-1])).astype(np.int64)

    analysis = analyze_limit(cfg.target, cfg.base_kernel, cfg.epsilon, tables.f)
    g_star = analysis.poisson.g
    star_rows = analysis.kernel_star.rows
    lam_star = poisson_operator(analysis.kernel_star, analysis.pi_star)

    frozen = _constant_theta(cfg)
    smoothed = np.empty((n, va.shape[0]))
    drift_term = np.empty(n)
    l_path = np.empty(n)
    remainder_vals = np.empty(n)
    if frozen is not None:
        theta = np.broadcast_to(frozen, (n, va.shape[0]))
    else:
        theta = governing_theta_path(traj)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        kp = _kernel_block(theta[lo:hi], tables.base_rows, tables.accept, cfg.epsilon)
        pi = _stationary_block(kp)
        g = _poisson_block(kp, pi, tables.f)
        smoothed[lo:hi] = np.einsum("kij,kj->ki", kp, g)
        rows_prev = np.take_along_axis(kp, x_prev[lo:hi, np.newaxis, np.newaxis], axis=1)[:, 0, :]
        drift_term[lo:hi] = rows_prev @ v
        l_path[lo:hi] = _ergodicity_l_path(kp, pi, va, ergodicity_lags)
        dk = kp - star_rows[np.newaxis, :, :]
        w1 = np.einsum("kij,j->ki", dk, g_star)
        w2 = w1 @ lam_star.T
        w3 = np.einsum("kij,kj->ki", dk, w2)
        remainder_vals[lo:hi] = np.sum(pi * w3, axis=1)

    step_norms = np.max(np.abs(np.diff(smoothed, axis=0)) / va[np.newaxis, :], axis=1)
    regularity_terms = np.concatenate(([0.0], step_norms * va[traj.x[:-1]]))
    regularity = np.cumsum(regularity_terms)[grid - 1] / np.sqrt(grid)
    containment = np.cumsum(l_path ** (2.0 / alpha) * drift_term)[grid - 1] / grid ** (1.0 / (2 * alpha))
    remainder = np.cumsum(remainder_vals)[grid - 1] / np.sqrt(grid)
    return regularity, containment, remainder


def assumption_diagnostics(cfg: TemperingConfig, f, n_grid, alpha: float = 0.3,
                           ergodicity_lags: int = 30, n_seeds: int = 1,
                           threads: int = 1) -> list[DiagnosticSeries]:
    """Partial-sum diagnostics for the regularity conditions behind the CLT.

    Returns three series over the grid, all expected to trend to zero:

    * ``poisson_regularity``: normalized sums of the weighted-norm change of
      the smoothed Poisson solution between consecutive governing kernels,
    * ``containment``: normalized sums of the fitted ergodicity constants
      (to the power 2/alpha) times the one-step drift along the path,
    * ``linearization_remainder``: normalized sums of the exact second-order
      remainder of the stationary-mean expansion.

    The remainder series is a signed single-path quantity with slow
    self-averaging; use several seeds for a stable trend (the regularity and
    containment sums are positive and already stable on one path).
    """
    grid = np.asarray(sorted(n_grid), dtype=np.int64)
    fv = as_vector(f)
    jobs = [(cfg, fv, i, grid, alpha, ergodicity_lags) for i in range(n_seeds)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_diagnostics_worker, jobs))
    else:
        rows = [_diagnostics_worker(job) for job in jobs]
    regularity = np.mean(np.vstack([r[0] for r in rows]), axis=0)
    containment = np.mean(np.vstack([r[1] for r in rows]), axis=0)
    remainder = np.mean(np.vstack([r[2] for r in rows]), axis=0)
    extras = {"n_seeds": n_seeds}
    return [
        DiagnosticSeries("poisson_regularity", grid, regularity,
                         tail_log_slope(grid, regularity), extras=dict(extras)),
        DiagnosticSeries("containment", grid, containment,
                         tail_log_slope(grid, containment), extras=dict(extras)),
        DiagnosticSeries("linearization_remainder", grid, remainder,
                         tail_log_slope(grid, remainder), extras=dict(extras)),
    ]


def vstat_moment_check(theta_star, h, k_order: int, n_grid, n_replications: int,
                       seed: int = 0, auxiliary_kernel=None) -> DiagnosticSeries:
    """Monte Carlo decay check of occupation-measure moments.

    Estimates E[((theta_n - theta_star)(h))^(2k)] over the grid and fits its
    log-log slope, which should be close to -k.  The auxiliary samples are
    iid from the limit measure, or a Markov chain started there when
    ``auxiliary_kernel`` is given (the kernel must leave the measure
    invariant).
    """
    if k_order not in (1, 2):
        raise ValueError("k_order must be 1 or 2")
    w = as_vector(theta_star)
    hv = as_vector(h)
    grid = np.asarray(sorted(n_grid), dtype=np.int64)
    n_max = int(grid[-1])
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    kernel_cdf = None
    if auxiliary_kernel is not None:
        rows = as_matrix(auxiliary_kernel)
        if float(np.abs(w @ rows - w).sum()) > 1e-10:
            raise ConfigurationError("auxiliary kernel is not stationary for the limit measure")
        kernel_cdf = np.cumsum(rows, axis=1)
        kernel_cdf[:, -1] = 1.0
    h_mean = math.fsum(w * hv)
    top = w.shape[0] - 1
    moments = np.zeros(grid.shape[0])
    for rep in range(n_replications):
        rng = derive_stream(seed, rep)
        u = rng.random(n_max)
        if kernel_cdf is None:
            draws = np.minimum(np.searchsorted(cdf, u, side="right"), top)
        else:
            draws = np.empty(n_max, dtype=np.int64)
            state = min(int(np.searchsorted(cdf, u[0], side="right")), top)
            draws[0] = state
            for k in range(1, n_max):
                state = min(int(np.searchsorted(kernel_cdf[state], u[k], side="right")), top)
                draws[k] = state
        deltas = np.cumsum(hv[draws]) / np.arange(1, n_max + 1) - h_mean
        moments += deltas[grid - 1] ** (2 * k_order)
    moments /= n_replications
    return DiagnosticSeries(
        label=f"occupation_moment_k{k_order}",
        n_grid=grid,
        values=moments,
        fitted_slope=tail_log_slope(grid, moments),
        extras={"n_replications": n_replications},
    )
