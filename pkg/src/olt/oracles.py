"""Brute-force oracles used to cross-check the production solvers."""

from __future__ import annotations

import itertools

import numpy as np

from .measures import DiscreteMeasure, sq_distances
from .selection import oracle_min_norm

__all__ = ["brute_force_w2", "oracle_min_norm"]


def brute_force_w2(mu: DiscreteMeasure, nu: DiscreteMeasure, max_atoms: int = 8) -> float:
    """W2^2 between two uniform measures with equally many atoms, by trying every matching.

    For uniform weights the optimal plan can be taken to be a permutation
    (Birkhoff), so the minimum over the m! matchings is exact.
    """
    m = len(mu)
    if len(nu) != m or m > max_atoms:
        raise ValueError(f"need equal sizes <= {max_atoms}")
    if not (np.allclose(mu.weights, 1.0 / m) and np.allclose(nu.weights, 1.0 / m)):
        raise ValueError("brute force needs uniform weights")
    cost = sq_distances(mu.points, nu.points)
    rows = np.arange(m)
    best = min(cost[rows, list(perm)].sum() for perm in itertools.permutations(range(m)))
    return float(best) / m
