"""Discrete probability measures on R^d and exact Wasserstein-2 transport."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .tolerances import DUPLICATE_TOL, MARGINAL_TOL, NORMALIZATION_TOL


class MeasureError(ValueError):
    """Raised for malformed measures or incompatible dimensions."""


def as_points(points) -> np.ndarray:
    """Coerce a point or a sequence of points to a float array of shape (k, d)."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise MeasureError(f"points must be 2-d, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud ``sum_k weights[k] * delta(points[k])``.

    ``points`` has shape (k, d); ``weights`` has shape (k,).
    Construction does not validate; call :func:`validate` or
    :meth:`checked` when the input is untrusted.
    """

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = as_points(points)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        pt = np.asarray(point, dtype=float).reshape(1, -1)
        return cls(pt, np.ones(1))

    @classmethod
    def checked(cls, points, weights) -> "DiscreteMeasure":
        measure = cls(as_points(points), np.asarray(weights, dtype=float))
        problem = validate(measure)
        if problem is not None:
            raise MeasureError(problem)
        return measure

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class GridSet:
    """The fixed hubs z_1, ..., z_n known to the player, shape (n, d)."""

    points: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) == 0:
            raise MeasureError("grid must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise MeasureError("grid points must be finite")
        # sort-based duplicate scan; lexsort keeps it O(n log n)
        order = np.lexsort(pts.T[::-1])
        srt = pts[order]
        close = np.all(np.abs(np.diff(srt, axis=0)) <= DUPLICATE_TOL, axis=1)
        if np.any(close):
            k = int(np.argmax(close))
            raise MeasureError(f"duplicate grid point {srt[k].tolist()}")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan between ``row_measure`` and ``col_measure``.

    ``plan[j, i]`` is the mass sent from row atom j to column atom i.
    Zero-weight atoms are kept as zero rows/columns so indices match the
    original measures.
    """

    plan: np.ndarray
    row_measure: DiscreteMeasure
    col_measure: DiscreteMeasure

    def cost(self) -> float:
        return float(np.sum(self.plan * sq_distances(self.row_measure.points, self.col_measure.points)))

    def to_json(self) -> str:
        rows, cols = np.nonzero(self.plan)
        entries = [[int(j), int(i), float(self.plan[j, i])] for j, i in zip(rows, cols)]
        return json.dumps({"rows": int(self.plan.shape[0]), "cols": int(self.plan.shape[1]), "entries": entries})


def validate(measure: DiscreteMeasure) -> str | None:
    """Return a description of the first violated invariant, or None if ok."""
    pts = np.asarray(measure.points, dtype=object if _ragged(measure.points) else float)
    if pts.dtype == object or pts.ndim != 2:
        return "points do not share one dimension"
    if pts.shape[1] < 1:
        return "dimension must be at least 1"
    w = np.asarray(measure.weights, dtype=float)
    if w.ndim != 1 or len(w) != len(pts):
        return f"{len(pts)} points but {w.size} weights"
    if len(w) == 0:
        return "measure has no atoms"
    if not np.all(np.isfinite(pts)):
        return "non-finite coordinate"
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        return "weights must be finite and nonnegative"
    total = float(np.sum(w))
    if abs(total - 1.0) > NORMALIZATION_TOL:
        return f"weights sum {total:.12g}"
    return None


def _ragged(points) -> bool:
    if isinstance(points, np.ndarray):
        return points.dtype == object
    try:
        lengths = {len(p) for p in points}
    except TypeError:
        return False
    return len(lengths) > 1


def sq_distances(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Matrix of squared Euclidean distances ``||x_j - z_i||^2``."""
    diff = x[:, None, :] - z[None, :, :]
    return np.einsum("jid,jid->ji", diff, diff)


def _check_pair(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    for name, m in (("mu", mu), ("nu", nu)):
        problem = validate(m)
        if problem is not None:
            raise MeasureError(f"{name}: {problem}")
    if mu.dim != nu.dim:
        raise MeasureError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def optimal_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    """Exact optimal plan for the squared Euclidean cost."""
    _check_pair(mu, nu)
    rows = np.flatnonzero(mu.weights > 0)
    cols = np.flatnonzero(nu.weights > 0)
    a = mu.weights[rows]
    b = nu.weights[cols]
    plan = np.zeros((len(mu), len(nu)))
    if len(rows) == 1 or len(cols) == 1:
        # single source or sink: the plan is forced
        if len(rows) == 1:
            plan[rows[0], cols] = b
        else:
            plan[rows, cols[0]] = a
        return Coupling(plan, mu, nu)
    cost = sq_distances(mu.points[rows], nu.points[cols])
    sub = _transport_lp(cost, a, b)
    plan[np.ix_(rows, cols)] = sub
    return Coupling(plan, mu, nu)


def _transport_lp(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    p, q = cost.shape
    idx = np.arange(p * q)
    row_ids = np.concatenate([idx // q, p + idx % q])
    A = coo_matrix((np.ones(2 * p * q), (row_ids, np.concatenate([idx, idx]))), shape=(p + q, p * q)).tocsr()
    # the balance constraints are rank p+q-1; rescale b to sum exactly like a
    b = b * (a.sum() / b.sum())
    res = linprog(cost.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.maximum(res.x.reshape(p, q), 0.0)
    if np.max(np.abs(plan.sum(axis=1) - a)) > MARGINAL_TOL or np.max(np.abs(plan.sum(axis=0) - b)) > MARGINAL_TOL:
        raise RuntimeError("transport LP returned a plan with inexact marginals")
    return plan


def w2_squared(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Squared Wasserstein-2 distance between two discrete measures."""
    return optimal_coupling(mu, nu).cost()


def coupling_from_json(text: str, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    data = json.loads(text)
    plan = np.zeros((data["rows"], data["cols"]))
    for j, i, mass in data["entries"]:
        plan[j, i] = mass
    return Coupling(plan, mu, nu)


def check_coupling(coupling: Coupling) -> str | None:
    """Marginal and sign check of a plan; None when the plan is admissible."""
    plan = coupling.plan
    if np.any(plan < 0):
        return "negative mass"
    if np.max(np.abs(plan.sum(axis=1) - coupling.row_measure.weights)) > MARGINAL_TOL:
        return "row marginals off"
    if np.max(np.abs(plan.sum(axis=0) - coupling.col_measure.weights)) > MARGINAL_TOL:
        return "column marginals off"
    return None


def points_equal(x: Sequence[float], y: Sequence[float], tol: float = DUPLICATE_TOL) -> bool:
    return bool(np.all(np.abs(np.asarray(x, float) - np.asarray(y, float)) <= tol))
