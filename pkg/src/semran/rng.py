"""Deterministic random streams keyed by (seed, stream id).

Every stochastic draw in the simulator comes from a named stream so that runs are
reproducible bit-for-bit and so that two modules never share a stream by accident.
Streams are backed by numpy's Philox bit generator, which is counter-based: the
(seed, stream_id) pair is the 128-bit Philox key, so the sequence a stream yields
depends only on that pair, never on how many other streams exist or the order in
which they were created.
"""

from __future__ import annotations

import numpy as np

# Stream family codes. A concrete stream id is family_stream_id(family, instance),
# which keeps per-agent streams disjoint from each other and from scalar streams.
TASKS = 1           # task arrivals and sample content, per agent
FADING = 2          # per-block channel fading, per agent
NOISE = 3           # per-symbol receiver noise, per agent
ACTIONS = 4         # policy action sampling (one shared stream, agents step in order)
CODEC_INIT = 5      # codec parameter init
POLICY_INIT = 6     # policy parameter init
REF_EMBEDDER = 7    # frozen reference projection
CLASS_MEANS = 8     # synthetic class geometry
PROBES = 9          # frozen monitor probe inputs
GRAD_PROBE = 10     # gradient-norm estimation side channel
VALIDATION = 11     # frozen validation set
SCENARIO = 12       # scenario-level draws (e.g. drift shift direction)
CONTENT = 13        # task sample content, per agent (drawn at serve time)
CODEC_PRETRAIN = 14  # warm-start training batches for the codec

_INSTANCE_BITS = 20


def family_stream_id(family: int, instance: int = 0) -> int:
    """Compose a stream id from a family code and an instance index."""
    if instance < 0 or instance >= (1 << _INSTANCE_BITS):
        raise ValueError(f"instance out of range: {instance}")
    return (family << _INSTANCE_BITS) | instance


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Return the generator for (seed, stream_id).

    Calling this twice with the same pair yields generators that produce identical
    sequences, on any platform and regardless of what other streams were made first.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = np.array([np.uint64(seed), np.uint64(stream_id)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
