"""Deterministic random-stream derivation.

Every random draw in the lab descends from a single integer seed through
``numpy.random.SeedSequence`` spawn keys, so a (config, seed) pair pins the
full experiment byte-for-byte.  The split is:

======================  =========================================
spawn key               stream
======================  =========================================
``(0,)``                dataset / partition generation
``(1,)``                initial iterates
``(2, trial, agent)``   gradient sampling for one agent in one trial
``(3,)``                random graph topologies
======================  =========================================

Trial ``t`` of a run with base seed ``s`` therefore owns the agent streams
``(2, t, 0) .. (2, t, n-1)``; they are mutually independent and independent
across trials.  Centralized variants (CSGD, CSGDM) consume the *agent-0*
stream of their trial and draw from the pooled index space; at ``n = 1`` the
pooled space coincides with agent 0's shard, which is what makes the
single-agent reductions run on identical draws.
"""

from __future__ import annotations

import numpy as np

_DATA_DOMAIN = 0
_INIT_DOMAIN = 1
_TRIAL_DOMAIN = 2
_GRAPH_DOMAIN = 3


def _generator(seed: int, spawn_key: tuple[int, ...]) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=spawn_key)))


def data_rng(seed: int) -> np.random.Generator:
    """Stream for dataset and partition generation (shared by all trials)."""
    return _generator(seed, (_DATA_DOMAIN,))


def init_rng(seed: int) -> np.random.Generator:
    """Stream for drawing initial iterates (shared by all trials)."""
    return _generator(seed, (_INIT_DOMAIN,))


def graph_rng(seed: int) -> np.random.Generator:
    """Stream for sampling random graph topologies."""
    return _generator(seed, (_GRAPH_DOMAIN,))


def agent_rngs(seed: int, trial: int, n: int) -> list[np.random.Generator]:
    """Independent gradient-sampling streams for the ``n`` agents of a trial."""
    return [_generator(seed, (_TRIAL_DOMAIN, trial, i)) for i in range(n)]
