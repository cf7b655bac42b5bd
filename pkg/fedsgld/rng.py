# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Derivation of independent random streams.

Every random draw in the simulation comes from a stream derived from the master
seed plus a purpose tag, the day and the node; so results never depend on the
order in which nodes or days are processed.
"""

import logging
import zlib

import numpy as np


logger = logging.getLogger(__name__)

# the purposes of the different streams
DATA = "data"
SPLIT = "split"
INIT = "init"
NODE = "node"


def _tag(purpose):
    """Convert the purpose name to a stable integer."""
    return zlib.crc32(purpose.encode("utf8"))


def derive(seed, purpose, day=0, node=0):
    """Return a generator for the given master seed, purpose, day and node."""
    if seed < 0:
        raise ValueError(f"Seeds must be non-negative, got {seed}")
    logger.debug("Deriving %r stream for seed=%d day=%d node=%d", purpose, seed, day, node)
    sequence = np.random.SeedSequence([seed, _tag(purpose), day, node])
    return np.random.default_rng(sequence)


def node_streams(seed, day, num_nodes):
    """Return the list of per-node generators for a day."""
    return [derive(seed, NODE, day, node_id) for node_id in range(num_nodes)]
