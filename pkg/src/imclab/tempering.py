"""Interacting tempering chain: auxiliary process, occupation measure, steps.

The main chain either moves through a base Markov kernel (probability
``1 - epsilon``) or, with probability ``epsilon``, proposes a jump to a state
drawn uniformly from the whole past of an auxiliary process and accepts it
with probability ``min(1, (pi(z) / pi(x))**beta)``.  The occupation measure
of the auxiliary process is the adaptation parameter: frozen, it induces the
explicit finite-state kernel built by :func:`interaction_kernel`.

Randomness contract (finite spaces): the main chain consumes one uniform for
the initial state (when not pinned by config) and then exactly three
uniforms per step, in the order branch / move / accept, whether or not the
third is used by the branch taken.  The auxiliary stream consumes one
uniform per step.  All streams derive from the config seed through
:mod:`imclab.streams`, so trajectories are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigurationError
from .kernels import FiniteKernel, as_matrix, as_vector
from .streams import ROLE_AUXILIARY, ROLE_CHAIN, chain_stream
from .targets import ContinuousTarget, FiniteTarget, auxiliary_target_measure, srwm_step

AUXILIARY_MODES = ("iid", "markov", "pinned")


class EmpiricalMeasure:
    """Append-only occupation measure with O(1) update and O(1) uniform draw.

    On finite spaces a per-state counter gives exact O(1) expectations; the
    raw sample sequence is kept for uniform draws from the past.  Single
    writer; safe to read between updates.
    """

    def __init__(self, n_states: Optional[int] = None):
        self.n_states = n_states
        self.samples: list = []
        self.count = 0
        self.counts = np.zeros(n_states, dtype=np.int64) if n_states is not None else None

    def add(self, y) -> None:
        self.samples.append(y)
        self.count += 1
        if self.counts is not None:
            self.counts[y] += 1

    def probabilities(self) -> np.ndarray:
        """Normalized per-state weights (finite spaces only)."""
        if self.counts is None:
            raise ConfigurationError("probabilities() requires a finite state space")
        if self.count == 0:
            raise ConfigurationError("empirical measure is empty")
        return self.counts / self.count

    def expectation(self, values) -> float:
        """Exact average of a state function over the stored samples."""
        v = as_vector(values)
        if self.count == 0:
            raise ConfigurationError("empirical measure is empty")
        if self.counts is not None:
            return math.fsum(self.counts * v) / self.count
        return math.fsum(v[s] for s in self.samples) / self.count

    def draw(self, u: float):
        """Return the stored sample of index floor(u * count), u in [0, 1)."""
        if self.count == 0:
            raise ConfigurationError("cannot draw from an empty empirical measure")
        return self.samples[min(int(u * self.count), self.count - 1)]


def update_empirical(theta: EmpiricalMeasure, y) -> EmpiricalMeasure:
    """Append one auxiliary sample (in place) and return the measure."""
    theta.add(y)
    return theta


def uniform_draw(theta: EmpiricalMeasure, rng: np.random.Generator):
    """Draw one sample uniformly from the stored past (one uniform consumed)."""
    return theta.draw(rng.random())


def acceptance_ratio(x, z, target: Union[FiniteTarget, ContinuousTarget]) -> float:
    """Interaction acceptance min(1, (pi(z)/pi(x))**beta), in log space."""
    if isinstance(target, FiniteTarget):
        dlog = target.log_weights[z] - target.log_weights[x]
    else:
        lx = target.log_density(np.asarray(x, dtype=float))
        lz = target.log_density(np.asarray(z, dtype=float))
        if not math.isfinite(lx):
            raise ValueError("target density vanishes at the current state")
        if not math.isfinite(lz):
            return 0.0
        dlog = lz - lx
    return float(np.exp(np.minimum(0.0, target.beta * dlog)))


def acceptance_table(target: FiniteTarget) -> np.ndarray:
    """Matrix r[x, z] of interaction acceptance probabilities."""
    logw = target.log_weights
    return np.exp(np.minimum(0.0, target.beta * (logw[np.newaxis, :] - logw[:, np.newaxis])))


def interaction_kernel(p, theta, target: FiniteTarget, epsilon: float) -> FiniteKernel:
    """Explicit kernel of the chain when the occupation measure is frozen.

    Mixes the base kernel (weight ``1 - epsilon``) with the accept/reject
    jump to a draw from ``theta`` (weight ``epsilon``); rejected interaction
    mass sits on the diagonal.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    rows_p = as_matrix(p)
    w = as_vector(theta)
    n = target.n_states
    if rows_p.shape != (n, n) or w.shape != (n,):
        raise ValueError(
            f"shape mismatch: base kernel {rows_p.shape}, measure {w.shape}, target {n} states"
        )
    move = acceptance_table(target) * w[np.newaxis, :]
    rows = (1.0 - epsilon) * rows_p + epsilon * move
    idx = np.arange(n)
    reject = np.array([1.0 - math.fsum(row) for row in move])
    rows[idx, idx] += epsilon * reject
    return FiniteKernel(rows)


@dataclass
class TemperingConfig:
    """Full parameterization of one interacting tempering run.

    ``epsilon = 0`` disables interaction (the chain is then the plain base
    chain; used as an inert control).  ``auxiliary_mode`` is one of ``iid``
    (auxiliary samples drawn from ``auxiliary_measure``), ``markov``
    (auxiliary chain with kernel ``auxiliary_kernel``), or ``pinned``
    (occupation measure frozen at ``auxiliary_measure``; interaction draws
    come from that measure instead of the past).
    """

    epsilon: float
    target: Union[FiniteTarget, ContinuousTarget]
    n_steps: int
    seed: int
    base_kernel: Optional[FiniteKernel] = None
    auxiliary_mode: str = "iid"
    auxiliary_measure: Optional[np.ndarray] = None
    auxiliary_kernel: Optional[FiniteKernel] = None
    replication_index: int = 0
    initial_state: Optional[Union[int, np.ndarray]] = None
    srwm_scale: float = 2.4
    auxiliary_srwm_scale: float = 2.4

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.auxiliary_mode not in AUXILIARY_MODES:
            raise ConfigurationError(
                f"auxiliary_mode must be one of {AUXILIARY_MODES}, got {self.auxiliary_mode!r}"
            )
        if self.is_finite:
            if self.base_kernel is None:
                raise ConfigurationError("finite targets require a base_kernel")
            n = self.target.n_states
            if self.base_kernel.n_states != n:
                raise ConfigurationError("base_kernel size does not match the target")
            if self.auxiliary_mode == "markov":
                if self.auxiliary_kernel is None:
                    raise ConfigurationError("markov auxiliary mode requires auxiliary_kernel")
                if self.auxiliary_kernel.n_states != n:
                    raise ConfigurationError("auxiliary_kernel size does not match the target")

    @property
    def is_finite(self) -> bool:
        return isinstance(self.target, FiniteTarget)

    def resolved_auxiliary_measure(self) -> np.ndarray:
        """Auxiliary source measure; defaults to the tempered limit measure."""
        if self.auxiliary_measure is not None:
            return as_vector(self.auxiliary_measure)
        if not self.is_finite:
            raise ConfigurationError("continuous targets need an explicit auxiliary mechanism")
        return auxiliary_target_measure(self.target)


@dataclass
class ChainState:
    """Live state of a chain: current point, occupation measure, step, stream."""

    x: Union[int, np.ndarray]
    theta: EmpiricalMeasure
    step: int
    rng: np.random.Generator


@dataclass
class Trajectory:
    """Simulated main and auxiliary paths, 1-indexed (x[k-1] is step k)."""

    x: np.ndarray
    y: np.ndarray
    x0: Union[int, np.ndarray]
    config: TemperingConfig

    @property
    def n_steps(self) -> int:
        return self.x.shape[0]

    def to_csv(self, path) -> None:
        """Dump step, main state, auxiliary state as CSV."""
        with open(path, "w") as fh:
            if self.x.ndim == 1:
                fh.write("step,x_state,y_state\n")
                for k in range(self.n_steps):
                    fh.write(f"{k + 1},{int(self.x[k])},{int(self.y[k])}\n")
            else:
                d = self.x.shape[1]
                xs = ",".join(f"x_{i}" for i in range(d))
                ys = ",".join(f"y_{i}" for i in range(d))
                fh.write(f"step,{xs},{ys}\n")
                for k in range(self.n_steps):
                    vals = [format(v, ".17g") for v in (*self.x[k], *self.y[k])]
                    fh.write(f"{k + 1},{','.join(vals)}\n")


def _row_cdfs(rows: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(rows, axis=1)
    cdf[:, -1] = 1.0
    return cdf


def _measure_cdf(weights: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return cdf


def _sample_index(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u, side="right")), cdf.shape[0] - 1)


class _FiniteTables:
    """Precomputed lookup tables for the finite-state step function."""

    def __init__(self, cfg: TemperingConfig):
        self.epsilon = cfg.epsilon
        self.base_cdf = _row_cdfs(cfg.base_kernel.rows)
        self.accept = acceptance_table(cfg.target)
        self.pi_cdf = _measure_cdf(cfg.target.weights)
        self.aux_cdf = _measure_cdf(cfg.resolved_auxiliary_measure())
        self.aux_kernel_cdf = (
            _row_cdfs(cfg.auxiliary_kernel.rows) if cfg.auxiliary_mode == "markov" else None
        )
        self.pinned = cfg.auxiliary_mode == "pinned"


def _step_finite(x: int, u_branch: float, u_move: float, u_accept: float,
                 tables: _FiniteTables, theta: EmpiricalMeasure) -> int:
    if u_branch >= tables.epsilon:
        return _sample_index(tables.base_cdf[x], u_move)
    if tables.pinned:
        z = _sample_index(tables.aux_cdf, u_move)
    else:
        z = theta.draw(u_move)
    return z if u_accept <= tables.accept[x, z] else x


def step_chain(state: ChainState, cfg: TemperingConfig) -> ChainState:
    """Advance the main chain by one step (three uniforms from state.rng).

    The occupation measure is used as-is; advancing the auxiliary process is
    the runner's responsibility.  Requires at least one stored auxiliary
    sample unless the mode is pinned or epsilon is zero.
    """
    if cfg.is_finite:
        if state.theta.count < 1 and not (cfg.auxiliary_mode == "pinned" or cfg.epsilon == 0.0):
            raise ConfigurationError("interaction requires a non-empty occupation measure")
        tables = _FiniteTables(cfg)
        u = state.rng.random(3)
        state.x = _step_finite(int(state.x), u[0], u[1], u[2], tables, state.theta)
    else:
        state.x = _step_continuous(state.x, state.rng, cfg, state.theta)
    state.step += 1
    return state


def _step_continuous(x: np.ndarray, rng: np.random.Generator, cfg: TemperingConfig,
                     theta: EmpiricalMeasure) -> np.ndarray:
    u_branch = rng.random()
    if u_branch >= cfg.epsilon:
        return srwm_step(
            ContinuousTarget(cfg.target.log_density, cfg.target.dimension, beta=1.0,
                             tau=cfg.target.tau, name=cfg.target.name),
            x, cfg.srwm_scale, rng,
        )
    z = theta.draw(rng.random())
    if rng.random() <= acceptance_ratio(x, z, cfg.target):
        return np.array(z, dtype=float, copy=True)
    return np.asarray(x, dtype=float).copy()


def run_chain(cfg: TemperingConfig) -> Trajectory:
    """Simulate the full interacting run: auxiliary step, then main step.

    At step k the auxiliary sample Y_k is appended to the occupation measure
    before the main move, so the measure governing X_k averages the first k
    auxiliary samples.  Identical seeds give bitwise-identical trajectories.
    """
    if cfg.is_finite:
        return _run_finite(cfg)
    return _run_continuous(cfg)


def _run_finite(cfg: TemperingConfig) -> Trajectory:
    n = cfg.n_steps
    tables = _FiniteTables(cfg)
    x_rng = chain_stream(cfg.seed, cfg.replication_index, ROLE_CHAIN)
    y_rng = chain_stream(cfg.seed, cfg.replication_index, ROLE_AUXILIARY)

    if cfg.initial_state is None:
        x = _sample_index(tables.pi_cdf, x_rng.random())
    else:
        x = int(cfg.initial_state)
    x0 = x

    uy = y_rng.random(n)
    if cfg.auxiliary_mode == "markov":
        y = np.empty(n, dtype=np.int64)
        y[0] = _sample_index(tables.aux_cdf, uy[0])
        for k in range(1, n):
            y[k] = _sample_index(tables.aux_kernel_cdf[y[k - 1]], uy[k])
    else:
        y = np.searchsorted(tables.aux_cdf, uy, side="right").astype(np.int64)
        np.minimum(y, cfg.target.n_states - 1, out=y)

    u = x_rng.random((n, 3))
    xs = np.empty(n, dtype=np.int64)
    eps = tables.epsilon
    base_cdf = tables.base_cdf
    accept = tables.accept
    aux_cdf = tables.aux_cdf
    pinned = tables.pinned
    y_list = y.tolist()
    for k in range(n):
        u0, u1, u2 = u[k]
        if u0 >= eps:
            row = base_cdf[x]
            x = min(int(np.searchsorted(row, u1, side="right")), row.shape[0] - 1)
        else:
            if pinned:
                z = min(int(np.searchsorted(aux_cdf, u1, side="right")), aux_cdf.shape[0] - 1)
            else:
                z = y_list[int(u1 * (k + 1))]
            if u2 <= accept[x, z]:
                x = z
        xs[k] = x
    return Trajectory(x=xs, y=y, x0=x0, config=cfg)


def _run_continuous(cfg: TemperingConfig) -> Trajectory:
    n = cfg.n_steps
    d = cfg.target.dimension
    x_rng = chain_stream(cfg.seed, cfg.replication_index, ROLE_CHAIN)
    y_rng = chain_stream(cfg.seed, cfg.replication_index, ROLE_AUXILIARY)
    aux_target = ContinuousTarget(
        cfg.target.log_density, d,
        beta=max(1.0 - cfg.target.beta, 1e-12), tau=cfg.target.tau, name=cfg.target.name,
    )
    x = (np.zeros(d) if cfg.initial_state is None else np.asarray(cfg.initial_state, dtype=float))
    x0 = x.copy()
    theta = EmpiricalMeasure()
    xs = np.empty((n, d))
    ys = np.empty((n, d))
    y = x.copy()
    for k in range(n):
        y = srwm_step(aux_target, y, cfg.auxiliary_srwm_scale, y_rng)
        theta.add(y.copy())
        x = _step_continuous(x, x_rng, cfg, theta)
        xs[k] = x
        ys[k] = y
    return Trajectory(x=xs, y=ys, x0=x0, config=cfg)
