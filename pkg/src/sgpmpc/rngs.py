"""Named random-number streams derived from a single master seed.

Every source of randomness in the package draws from a stream obtained via
:func:`stream`, keyed by a purpose tag plus integer indices (sample id,
output dimension, ...).  Streams are independent of scheduling order, so
parallel draws stay reproducible.
"""

import numpy as np

SAMPLING = 0
NOISE = 1
MONTE_CARLO = 2
BENCH = 3


def stream(master_seed, *key):
    """Return a Generator for the sub-stream identified by ``key``."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)
