"""Deterministic random-stream derivation for reproducible replications.

All randomness in the package flows through counter-based Philox generators
keyed by a pair of 64-bit words ``(seed, channel)``.  Distinct channels are
statistically independent streams, and the mapping is injective, so a run is
fully determined by its integer seed on every platform.

Channel layout:

* chains use ``channel = 4 * replication_index + role`` with role 0 for the
  main chain and role 1 for the auxiliary process,
* generic replication streams (``derive_stream``) use
  ``channel = 2**63 + replication_index``.

Replication indices must stay below 2**61 so the two regions never overlap.
"""

from __future__ import annotations

import numpy as np

_GENERIC_BASE = 1 << 63
_MAX_INDEX = 1 << 61

ROLE_CHAIN = 0
ROLE_AUXILIARY = 1


def _philox(seed: int, channel: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & (2**64 - 1)), np.uint64(channel)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_stream(master_seed: int, replication_index: int) -> np.random.Generator:
    """Return the generic stream assigned to one replication of an experiment.

    The mapping ``(master_seed, replication_index) -> stream`` is injective
    and identical across platforms; the first variates of ``(0, 0)`` are
    frozen in a golden-file test.
    """
    if not 0 <= replication_index < _MAX_INDEX:
        raise ValueError(f"replication_index must be in [0, 2**61): got {replication_index}")
    return _philox(master_seed, _GENERIC_BASE + replication_index)


def chain_stream(seed: int, replication_index: int = 0, role: int = ROLE_CHAIN) -> np.random.Generator:
    """Return the stream for one role (main chain or auxiliary) of one chain."""
    if not 0 <= replication_index < _MAX_INDEX:
        raise ValueError(f"replication_index must be in [0, 2**61): got {replication_index}")
    if role not in (ROLE_CHAIN, ROLE_AUXILIARY):
        raise ValueError(f"unknown stream role {role}")
    return _philox(seed, 4 * replication_index + role)
