"""Counter-based random streams.

Every random draw is addressed by a tuple of integers: the exploration
vectors of round t under master seed s come from the stream keyed
``(s, t)``, and point j always receives row j of that block, so results do
not depend on evaluation order or on which points end up exploring. Streams
are ``numpy.random.Philox`` generators keyed through ``SeedSequence``;
normals use numpy's ziggurat ``standard_normal``.
"""

from __future__ import annotations

import numpy as np

# tag for streams that are not tied to a round (t >= 1 for rounds)
INIT_TAG = 0


def stream(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def exploration_normals(seed: int, t: int, m: int, d: int) -> np.ndarray:
    """Standard normal block (m, d) for round ``t``; row j belongs to point j."""
    return stream(seed, t).standard_normal((m, d))


def exploration_normal(seed: int, t: int, j: int, d: int, m: int | None = None) -> np.ndarray:
    """Row ``j`` of the round-``t`` block (``m`` defaults to ``j + 1``)."""
    return exploration_normals(seed, t, max(j + 1, m or 0), d)[j]


def init_stream(seed: int) -> np.random.Generator:
    return stream(seed, INIT_TAG, 0)


def replicate_seed(base_seed: int, replicate: int) -> int:
    """Master seed of Monte-Carlo replicate ``replicate`` (0-based)."""
    if replicate == 0:
        return int(base_seed)
    return int(np.random.SeedSequence([int(base_seed), int(replicate)]).generate_state(1, dtype=np.uint32)[0])
