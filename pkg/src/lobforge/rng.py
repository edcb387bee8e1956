"""Seeded random streams.

Every stochastic consumer in a run (world agent, experimental agent,
vector decoding, synthetic data generation) draws from its own stream so
that adding one consumer never perturbs another.  Streams are derived
from the run seed through counter-based Philox generators keyed by a
fixed per-consumer index, which keeps stream assignment stable across
code changes.

World actions additionally get one generator each, keyed by the action's
ordinal.  Two runs under the same seed then draw identical randomness
for their n-th world action no matter how many draws earlier actions
consumed, so a pair of runs differing only by an injected intervention
stays on common random numbers and their paths can be compared without
the divergence an unsynchronised stream would add.
"""

from __future__ import annotations

import numpy as np

STREAM_WORLD = 0
STREAM_EXPERIMENTAL = 1
STREAM_CODEC = 2
STREAM_SYNTH = 3


def stream(seed: int, key: int) -> np.random.Generator:
    """Independent generator for consumer `key` under the run seed."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


def action_stream(seed: int, key: int, index: int) -> np.random.Generator:
    """Generator for the `index`-th action of consumer `key`."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(key, index))
    return np.random.Generator(np.random.Philox(ss))
