"""The five-state reference instance used by tests, demos, and the suite.

Target weights proportional to (5, 4, 3, 2, 1) with tempering gap 0.5 and
drift exponent 0.5; uniform symmetric proposal; interaction probability 0.3;
iid auxiliary draws from the tempered limit measure; test function the
indicator of the heaviest state.
"""

from __future__ import annotations

import numpy as np

from .targets import FiniteTarget, metropolis_kernel_finite, uniform_proposal
from .tempering import TemperingConfig

REFERENCE_WEIGHTS = (5.0, 4.0, 3.0, 2.0, 1.0)


def reference_target() -> FiniteTarget:
    return FiniteTarget(np.array(REFERENCE_WEIGHTS), beta=0.5, tau=0.5)


def reference_f() -> np.ndarray:
    f = np.zeros(len(REFERENCE_WEIGHTS))
    f[0] = 1.0
    return f


def reference_config(n_steps: int = 20000, seed: int = 90210, epsilon: float = 0.3,
                     auxiliary_mode: str = "iid") -> TemperingConfig:
    target = reference_target()
    base = metropolis_kernel_finite(target, uniform_proposal(target.n_states))
    return TemperingConfig(
        epsilon=epsilon, target=target, n_steps=n_steps, seed=seed,
        base_kernel=base, auxiliary_mode=auxiliary_mode,
    )
