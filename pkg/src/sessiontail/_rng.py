"""Deterministic random-stream derivation.

Every stochastic routine derives its generators from (seed, stream id,
index) so that results are bit-reproducible and independent of execution
schedule.  Stream ids below keep the derived streams of different
subsystems disjoint.
"""

import numpy as np

STREAM_EV_REFERENCE = 1
STREAM_BOOTSTRAP = 2
STREAM_LOGISTIC = 3

STREAM_SIM_RPEAK = 10
STREAM_SIM_ARRIVALS = 11
STREAM_SIM_THETA = 12
STREAM_SIM_RADIUS = 13
STREAM_SIM_COUNT = 14


def derived_rng(seed, *key):
    """Generator for the stream (seed, *key); key parts must be ints ≥ 0."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
