"""Minimum-norm subgradient selection over grid-certified constraints.

Every program here has the form

    minimize ||xi||^2   subject to   <xi, a_i> >= b_i,  i = 1..n

(optionally with a slack variable), i.e. the Euclidean projection of the
origin onto a polyhedron. The production solver is a dual active-set method
(Goldfarb-Idnani with identity Hessian) which terminates finitely and
yields a Farkas certificate on infeasible input. ``oracle_min_norm`` solves
the same program by brute-force enumeration of active sets and is meant only
for cross-checking.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .measures import GridSet, MeasureError, as_points
from .tolerances import FEASIBILITY_RTOL

log = logging.getLogger(__name__)

_ZERO_DIR_RTOL = 1e-15
_DEP_RTOL = 1e-12
# feasibility threshold for the shifted solves inside relaxed_select; the
# slack search brackets the feasibility boundary, so it must be tight
_RELAXED_RTOL = 1e-13


class SelectionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Constraints ``<xi, directions[i]> >= offsets[i]`` on xi in R^d."""

    directions: np.ndarray  # (n, d)
    offsets: np.ndarray  # (n,)

    def __post_init__(self):
        a = np.asarray(self.directions, dtype=float)
        b = np.asarray(self.offsets, dtype=float).reshape(-1)
        if a.ndim == 1:
            a = a.reshape(len(b), -1) if len(b) else a.reshape(0, 1)
        if a.ndim != 2 or a.shape[0] != b.shape[0]:
            raise SelectionError(f"{a.shape[0] if a.ndim == 2 else '?'} directions but {len(b)} offsets")
        object.__setattr__(self, "directions", a)
        object.__setattr__(self, "offsets", b)

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def __len__(self) -> int:
        return len(self.offsets)

    @property
    def scale(self) -> float:
        """``1 + max_i(||a_i||^2 + |b_i|)``, the yardstick for all tolerances."""
        if len(self) == 0:
            return 1.0
        return 1.0 + float(np.max(np.sum(self.directions**2, axis=1) + np.abs(self.offsets)))

    def violation(self, xi) -> np.ndarray:
        """Per-constraint shortfall ``b_i - <xi, a_i>`` (positive means violated)."""
        return self.offsets - self.directions @ np.asarray(xi, dtype=float)

    def is_satisfied_by(self, xi, rtol: float = FEASIBILITY_RTOL) -> bool:
        return len(self) == 0 or float(np.max(self.violation(xi))) <= rtol * self.scale

    def to_json(self) -> str:
        return json.dumps({"directions": self.directions.tolist(), "offsets": self.offsets.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ConstraintSet":
        data = json.loads(text)
        d = np.asarray(data["directions"], dtype=float).reshape(len(data["offsets"]), -1)
        return cls(d, np.asarray(data["offsets"], dtype=float))


@dataclass(frozen=True, eq=False)
class SelectionOutcome:
    """Result of a min-norm solve.

    When ``feasible``: ``xi`` is the minimizer and ``multipliers`` satisfy
    ``xi = sum_i multipliers[i] * a_i``. Otherwise ``certificate`` (if found)
    is a Farkas vector: nonnegative, ``sum_i c_i a_i = 0`` and
    ``sum_i c_i b_i > 0``.
    """

    feasible: bool
    xi: np.ndarray | None = None
    multipliers: np.ndarray | None = None
    certificate: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class RelaxedOutcome:
    xi: np.ndarray
    slack: float
    multipliers: np.ndarray

    def objective(self, eta: float) -> float:
        return float(self.xi @ self.xi) + 2.0 * self.slack / eta


# ---------------------------------------------------------------------------
# constraint builders
# ---------------------------------------------------------------------------


def build_potential_constraints(x, grid: GridSet, v_at_x: float, v_at_grid) -> ConstraintSet:
    """Grid-certified subgradient constraints of a potential at ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    v_grid = np.asarray(v_at_grid, dtype=float).reshape(-1)
    if x.shape[0] != grid.dim:
        raise MeasureError(f"point has dimension {x.shape[0]}, grid has {grid.dim}")
    if len(v_grid) != len(grid):
        raise SelectionError(f"{len(v_grid)} grid values for {len(grid)} grid points")
    if not (np.isfinite(v_at_x) and np.all(np.isfinite(v_grid))):
        raise SelectionError("potential values must be finite")
    return ConstraintSet(x[None, :] - grid.points, float(v_at_x) - v_grid)


def build_interaction_constraints(j: int, decision_points, grid: GridSet, w_points, w_grid) -> ConstraintSet:
    """Constraints for decision point ``j`` under an interaction loss.

    ``w_points[j, k] = W(x_j - x_k)`` over decision points and
    ``w_grid[i, k] = W(z_i - z_k)`` over the grid. The grid minimum runs over
    every k, the self pair included.
    """
    pts = as_points(decision_points)
    w_points = np.asarray(w_points, dtype=float)
    w_grid = np.asarray(w_grid, dtype=float)
    m, n = len(pts), len(grid)
    if pts.shape[1] != grid.dim:
        raise MeasureError(f"points have dimension {pts.shape[1]}, grid has {grid.dim}")
    if w_points.shape != (m, m) or w_grid.shape != (n, n):
        raise SelectionError("missing kernel value: tables must be (m, m) and (n, n)")
    if not (np.all(np.isfinite(w_points[j])) and np.all(np.isfinite(w_grid))):
        raise SelectionError("missing kernel value")
    offsets = w_points[j].mean() - w_grid.min(axis=1)
    return ConstraintSet(pts[j][None, :] - grid.points, offsets)


# ---------------------------------------------------------------------------
# production solver
# ---------------------------------------------------------------------------


def _prepare(c: ConstraintSet):
    """Drop/flag zero directions and merge identical directions.

    Returns ``(keep, a, b, blocker)``: ``keep`` maps reduced rows to original
    indices, ``blocker`` is the index of a zero-direction row with positive
    offset (instance infeasible) or None.
    """
    a, b = c.directions, c.offsets
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise SelectionError("non-finite constraint data")
    tol = FEASIBILITY_RTOL * c.scale
    zero = np.max(np.abs(a), axis=1, initial=0.0) <= _ZERO_DIR_RTOL * np.sqrt(c.scale)
    blocker = None
    if np.any(zero & (b > tol)):
        blocker = int(np.flatnonzero(zero & (b > tol))[np.argmax(b[zero & (b > tol)])])
    rows = np.flatnonzero(~zero)
    if len(rows) > 1:
        _, first, inverse = np.unique(a[rows], axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
        if len(first) < len(rows):
            best = {}
            for r, g in zip(rows, inverse):
                if g not in best or b[r] > b[best[g]]:
                    best[g] = r
            rows = np.array(sorted(best.values()), dtype=int)
    return rows, a[rows], b[rows], blocker


def _dual_active_set(a: np.ndarray, b: np.ndarray, tol: float, max_iter: int | None = None):
    """Goldfarb-Idnani dual active-set method for ``min ||xi||^2, a xi >= b``.

    Returns ``(status, xi, lam, cert)`` with status in
    {"optimal", "infeasible", "stalled"}; ``lam``/``cert`` are indexed like
    the rows of ``a``.
    """
    n, d = a.shape
    x = np.zeros(d)
    active: list[int] = []
    u = np.zeros(0)
    max_iter = max_iter or 50 * (n + d) + 100
    for _ in range(max_iter):
        s = a @ x - b
        p = int(np.argmin(s)) if n else 0
        if n == 0 or s[p] >= -tol:
            lam = np.zeros(n)
            lam[active] = u
            return "optimal", x, lam, None
        n_p = a[p]
        np_norm = math.sqrt(float(n_p @ n_p))
        u_p = 0.0
        # inner loop: drop constraints until p can be added
        for _ in range(max_iter):
            r, z = _split(a[active], n_p, d)
            t1, drop = math.inf, -1
            if len(r):
                pos = r > _DEP_RTOL * max(1.0, float(np.max(np.abs(r))))
                if pos.any():
                    ratios = np.where(pos, u / np.where(pos, r, 1.0), np.inf)
                    drop = int(np.argmin(ratios))
                    t1 = float(ratios[drop])
            zn = float(z @ z)  # equals <z, n_p> since z is orthogonal to the active rows
            t2 = math.inf
            if math.sqrt(zn) > _DEP_RTOL * np_norm:
                t2 = float(b[p] - n_p @ x) / zn
            t = min(t1, t2)
            if not math.isfinite(t):
                cert = np.zeros(n)
                cert[p] = 1.0
                cert[active] = np.maximum(-r, 0.0)
                return "infeasible", None, None, cert
            if math.isfinite(t2):
                x = x + t * z
            u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(p)
                u = np.append(u, u_p)
                break
            del active[drop]
            u = np.delete(u, drop)
        else:
            return "stalled", None, None, None
    return "stalled", None, None, None


def _split(A: np.ndarray, v: np.ndarray, d: int):
    """Coefficients ``r`` of the projection of ``v`` onto the row span of ``A`` and the residual ``z``."""
    k = len(A)
    if k == 0:
        return np.zeros(0), v
    if k == 1:
        a0 = A[0]
        r = np.array([float(a0 @ v) / float(a0 @ a0)])
    elif k == 2:
        # 2x2 Gram system in closed form
        g00, g01, g11 = float(A[0] @ A[0]), float(A[0] @ A[1]), float(A[1] @ A[1])
        c0, c1 = float(A[0] @ v), float(A[1] @ v)
        det = g00 * g11 - g01 * g01
        if det <= 1e-14 * g00 * g11:
            r = np.linalg.lstsq(A.T, v, rcond=None)[0]
        else:
            r = np.array([(g11 * c0 - g01 * c1) / det, (g00 * c1 - g01 * c0) / det])
    else:
        r = np.linalg.solve(A @ A.T, A @ v)
    # d independent active rows span the space; the residual is roundoff
    z = np.zeros(d) if k >= d else v - r @ A
    return r, z


def _interval_solve(a: np.ndarray, b: np.ndarray, tol: float):
    """Exact solve for d = 1: the feasible set is an interval."""
    col = a[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = b / col
    pos, neg = col > 0, col < 0
    lo_i = int(np.flatnonzero(pos)[np.argmax(ratio[pos])]) if np.any(pos) else -1
    hi_i = int(np.flatnonzero(neg)[np.argmin(ratio[neg])]) if np.any(neg) else -1
    lo = ratio[lo_i] if lo_i >= 0 else -np.inf
    hi = ratio[hi_i] if hi_i >= 0 else np.inf
    xi = min(max(0.0, lo), hi)
    n = len(b)
    if np.max(b - col * xi, initial=-np.inf) > tol:
        cert = np.zeros(n)
        cert[lo_i] = 1.0 / col[lo_i]
        cert[hi_i] = -1.0 / col[hi_i]
        return "infeasible", None, None, cert
    lam = np.zeros(n)
    if xi != 0.0:
        k = lo_i if xi == lo else hi_i
        lam[k] = xi / col[k]
    return "optimal", np.array([xi]), lam, None


def _solve_reduced(c: ConstraintSet, shift: float = 0.0, rtol: float = FEASIBILITY_RTOL):
    rows, a, b, blocker = _prepare(c)
    n = len(c)
    tol = rtol * c.scale
    if blocker is not None and c.offsets[blocker] - shift > tol:
        cert = np.zeros(n)
        cert[blocker] = 1.0
        return "infeasible", None, None, cert
    solver = _interval_solve if c.dim == 1 and len(b) else _dual_active_set
    status, xi, lam, cert = solver(a, b - shift, tol)
    if status == "optimal" and len(b) == 0:
        xi = np.zeros(c.dim)
    full_lam = full_cert = None
    if lam is not None:
        full_lam = np.zeros(n)
        full_lam[rows] = lam
    if cert is not None:
        full_cert = np.zeros(n)
        full_cert[rows] = cert
    return status, xi, full_lam, full_cert


def min_norm_select(c: ConstraintSet) -> SelectionOutcome:
    """Minimum-norm xi with ``<xi, a_i> >= b_i`` for all i, or infeasibility."""
    status, xi, lam, cert = _solve_reduced(c)
    if status == "optimal":
        return SelectionOutcome(True, xi, lam)
    if status == "stalled":
        log.warning("active-set solve stalled on n=%d d=%d; classifying as infeasible", len(c), c.dim)
    return SelectionOutcome(False, certificate=cert)


def min_norm_select_batch(directions: np.ndarray, offsets: np.ndarray):
    """Solve one program per decision point.

    ``directions`` has shape (m, n, d), ``offsets`` (m, n). Returns
    ``(xi, feasible)`` with shapes (m, d) and (m,); rows of infeasible points
    are zero. The d = 1 case is vectorized; other dimensions loop over
    :func:`min_norm_select`.
    """
    a = np.asarray(directions, dtype=float)
    b = np.asarray(offsets, dtype=float)
    m, n, d = a.shape
    if d != 1:
        xi = np.zeros((m, d))
        feasible = np.zeros(m, dtype=bool)
        for j in range(m):
            out = min_norm_select(ConstraintSet(a[j], b[j]))
            feasible[j] = out.feasible
            if out.feasible:
                xi[j] = out.xi
        return xi, feasible
    col = a[:, :, 0]
    scale = 1.0 + np.max(col**2 + np.abs(b), axis=1, initial=0.0)
    tol = FEASIBILITY_RTOL * scale
    zero = np.abs(col) <= _ZERO_DIR_RTOL * np.sqrt(scale)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = b / np.where(zero, 1.0, col)
    lo = np.max(np.where((col > 0) & ~zero, ratio, -np.inf), axis=1, initial=-np.inf)
    hi = np.min(np.where((col < 0) & ~zero, ratio, np.inf), axis=1, initial=np.inf)
    x = np.minimum(np.maximum(0.0, lo), hi)
    viol = np.where(zero, b, b - col * x[:, None])
    feasible = np.max(viol, axis=1, initial=-np.inf) <= tol
    x = np.where(feasible, x, 0.0)
    return x[:, None], feasible


def relaxed_select(c: ConstraintSet, eta: float, max_iter: int = 200) -> RelaxedOutcome:
    """Minimize ``||xi||^2 + (2/eta) s`` over ``<xi, a_i> + s >= b_i``, ``s >= 0``.

    For fixed s the best xi is a min-norm solve with offsets ``b - s``; the
    value is convex in s with slope ``2/eta - 2 * sum(multipliers)``. The
    slack is located by bisection on that slope and then set exactly from
    the linear multiplier law of the bracketing active set.
    """
    if not eta > 0:
        raise SelectionError("eta must be positive")
    n, d = len(c), c.dim
    target = 1.0 / eta
    rows, _, _, _ = _prepare(c)
    zero_rows = np.setdiff1d(np.arange(n), rows)
    floor = max(0.0, float(np.max(c.offsets[zero_rows], initial=0.0)))
    ceil = max(floor, float(np.max(c.offsets, initial=0.0)))
    status, xi, lam, _ = _solve_reduced(c, floor, _RELAXED_RTOL)
    if status == "optimal" and lam.sum() <= target:
        return RelaxedOutcome(xi, floor, lam)
    if ceil == floor:
        return RelaxedOutcome(np.zeros(d), floor, np.zeros(n))

    lo, hi = floor, ceil
    best = (np.zeros(d), ceil, np.zeros(n))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        status, xi, lam, _ = _solve_reduced(c, mid, _RELAXED_RTOL)
        if status != "optimal" or lam.sum() > target:
            lo = mid
        else:
            hi = mid
            best = (xi, mid, lam)
        if status == "optimal":
            exact = _exact_slack(c, lam, target)
            if exact is not None and lo <= exact <= hi:
                st2, xi2, lam2, _ = _solve_reduced(c, exact, _RELAXED_RTOL)
                if st2 == "optimal" and abs(lam2.sum() - target) <= 1e-9 * (1.0 + target):
                    return RelaxedOutcome(xi2, exact, lam2)
    return RelaxedOutcome(*best)


def _exact_slack(c: ConstraintSet, lam: np.ndarray, target: float) -> float | None:
    act = np.flatnonzero(lam > 0)
    if len(act) == 0:
        return None
    N = c.directions[act]
    G = N @ N.T
    try:
        M1 = np.linalg.solve(G, np.ones(len(act)))
        Mb = np.linalg.solve(G, c.offsets[act])
    except np.linalg.LinAlgError:
        return None
    denom = float(M1.sum())
    if denom <= 0:
        return None
    return (float(Mb.sum()) - target) / denom


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def oracle_min_norm(c: ConstraintSet, max_n: int = 12, max_d: int = 4) -> SelectionOutcome:
    """Enumerate every linearly independent active set and keep the KKT point.

    Exponential in n; intended for n <= 12, d <= 4.
    """
    n, d = len(c), c.dim
    if n > max_n or d > max_d:
        raise SelectionError(f"oracle budget exceeded (n={n}, d={d})")
    a, b = c.directions, c.offsets
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise SelectionError("non-finite constraint data")
    tol = FEASIBILITY_RTOL * c.scale
    best = None
    for k in range(0, min(n, d) + 1):
        for subset in itertools.combinations(range(n), k):
            idx = list(subset)
            if k == 0:
                xi, lam_s = np.zeros(d), np.zeros(0)
            else:
                A = a[idx]
                if np.linalg.matrix_rank(A, tol=1e-10 * max(1.0, np.abs(A).max())) < k:
                    continue
                # SVD least squares: min-norm xi on the active face, then its multipliers
                xi = np.linalg.lstsq(A, b[idx], rcond=None)[0]
                lam_s = np.linalg.lstsq(A.T, xi, rcond=None)[0]
                if np.min(lam_s) < -1e-10 * (1.0 + np.abs(lam_s).max()):
                    continue
            if np.max(b - a @ xi, initial=-np.inf) > tol:
                continue
            if best is None or xi @ xi < best[0] @ best[0]:
                lam = np.zeros(n)
                lam[idx] = np.maximum(lam_s, 0.0)
                best = (xi, lam)
    if best is None:
        return SelectionOutcome(False)
    return SelectionOutcome(True, best[0], best[1])
