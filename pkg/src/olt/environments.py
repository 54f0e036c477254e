"""Adversary scenarios and the zeroth-order information model.

A scenario evaluates the round-t loss anywhere, but algorithms never see a
scenario: they receive an :class:`OracleView` holding the values on the
decision points and the grid only. ``eval_potential`` exists for the harness
and tests.

Rounds are 1-based. Moving centers follow ``c_t = c_1 + drift * (t - 1)`` so
the configured ``u1`` is the round-1 center.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domains import Ball, Box, DomainSpec
from .measures import GridSet, as_points

TIME_CONVENTION = "c_t = c_1 + drift * (t - 1)"


class ScenarioError(ValueError):
    pass


def _sqnorm(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    diff = x - c
    return np.einsum("...d,...d->...", diff, diff)


def _ball_box_far_sq(center: np.ndarray, region: DomainSpec) -> float:
    """max over the region of ||x - center||^2 (attained on the boundary)."""
    if isinstance(region, Ball):
        return float((np.linalg.norm(center - region.center) + region.radius) ** 2)
    if isinstance(region, Box):
        far = np.maximum(np.abs(region.lo - center), np.abs(region.hi - center))
        return float(far @ far)
    raise ScenarioError("supremum needs a bounded region (Ball or Box)")


@dataclass(frozen=True, eq=False)
class MovingQuadratic:
    """``V_t(x) = ||x - u_t||^2`` with a linearly drifting center."""

    u1: np.ndarray
    drift: np.ndarray
    kind = "moving_quadratic"

    def __post_init__(self):
        object.__setattr__(self, "u1", np.asarray(self.u1, dtype=float).reshape(-1))
        object.__setattr__(self, "drift", np.asarray(self.drift, dtype=float).reshape(-1))

    @property
    def dim(self) -> int:
        return len(self.u1)

    def center(self, t: int) -> np.ndarray:
        return self.u1 + self.drift * (t - 1)

    def values(self, t: int, x: np.ndarray) -> np.ndarray:
        return _sqnorm(as_points(x), self.center(t))

    def sup_abs(self, T: int, region: DomainSpec) -> float:
        return max(_ball_box_far_sq(self.center(t), region) for t in range(1, T + 1))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "u1": self.u1.tolist(), "drift": self.drift.tolist()}


@dataclass(frozen=True, eq=False)
class MinOfQuadratics:
    """``V_t(x) = min(||x - u_t||^2, ||x - v_t||^2)`` with two drifting centers."""

    u1: np.ndarray
    u_drift: np.ndarray
    v1: np.ndarray
    v_drift: np.ndarray
    kind = "min_of_quadratics"

    def __post_init__(self):
        for name in ("u1", "u_drift", "v1", "v_drift"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))

    @property
    def dim(self) -> int:
        return len(self.u1)

    def centers(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        return self.u1 + self.u_drift * (t - 1), self.v1 + self.v_drift * (t - 1)

    def values(self, t: int, x: np.ndarray) -> np.ndarray:
        u, v = self.centers(t)
        x = as_points(x)
        return np.minimum(_sqnorm(x, u), _sqnorm(x, v))

    def sup_abs(self, T: int, region: DomainSpec) -> float:
        # sup of a min is at most the min of the sups; exact when one
        # quadratic dominates on the farthest boundary point
        out = 0.0
        for t in range(1, T + 1):
            u, v = self.centers(t)
            out = max(out, min(_ball_box_far_sq(u, region), _ball_box_far_sq(v, region)))
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "u1": self.u1.tolist(),
            "u_drift": self.u_drift.tolist(),
            "v1": self.v1.tolist(),
            "v_drift": self.v_drift.tolist(),
        }


@dataclass(frozen=True, eq=False)
class WShape:
    """One-dimensional double well with minima at -1 and 1.

    ``V_t(x) = a_t (x + 1)^2`` for x < 0 and ``a_t (x - 1)^2`` for x >= 0.
    ``a`` lists a_1, a_2, ...; the last entry is held for later rounds.
    """

    a: tuple[float, ...]
    epsilon: float | None = None
    kind = "wshape"

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        if not a or min(a) <= 0:
            raise ScenarioError("w-shape heights must be positive")
        eps = min(a) if self.epsilon is None else float(self.epsilon)
        if not eps > 0 or min(a) < eps:
            raise ScenarioError(f"w-shape needs a_t >= epsilon = {eps} > 0")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "epsilon", eps)

    @property
    def dim(self) -> int:
        return 1

    def height(self, t: int) -> float:
        return self.a[min(t, len(self.a)) - 1]

    def values(self, t: int, x: np.ndarray) -> np.ndarray:
        x = as_points(x)[:, 0]
        return self.height(t) * np.where(x < 0, (x + 1.0) ** 2, (x - 1.0) ** 2)

    def sup_abs(self, T: int, region: DomainSpec) -> float:
        if isinstance(region, Ball):
            lo, hi = region.center[0] - region.radius, region.center[0] + region.radius
        elif isinstance(region, Box):
            lo, hi = region.lo[0], region.hi[0]
        else:
            raise ScenarioError("supremum needs a bounded region (Ball or Box)")
        # piecewise convex: the sup sits at an endpoint or at the kink x = 0
        probe = [lo, hi] + ([0.0] if lo <= 0.0 <= hi else [])
        return max(float(np.max(self.values(t, np.array(probe)))) for t in range(1, T + 1))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": list(self.a), "epsilon": self.epsilon}


@dataclass(frozen=True, eq=False)
class QuadraticSequence:
    """Arbitrary convex quadratics ``(x - c_t)' Q_t (x - c_t) + r_t`` listed per round."""

    centers: np.ndarray  # (T, d)
    matrices: np.ndarray  # (T, d, d), symmetric PSD
    shifts: np.ndarray = None  # (T,)
    kind = "quadratic_sequence"

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        q = np.asarray(self.matrices, dtype=float)
        r = np.zeros(len(c)) if self.shifts is None else np.asarray(self.shifts, dtype=float)
        if q.shape != (len(c), c.shape[1], c.shape[1]) or r.shape != (len(c),):
            raise ScenarioError("inconsistent quadratic sequence shapes")
        if np.min(np.linalg.eigvalsh(0.5 * (q + q.transpose(0, 2, 1)))) < -1e-12:
            raise ScenarioError("quadratic sequence matrices must be PSD")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "matrices", q)
        object.__setattr__(self, "shifts", r)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _index(self, t: int) -> int:
        if not 1 <= t <= len(self.centers):
            raise ScenarioError(f"round {t} outside the listed horizon {len(self.centers)}")
        return t - 1

    def values(self, t: int, x: np.ndarray) -> np.ndarray:
        k = self._index(t)
        diff = as_points(x) - self.centers[k]
        return np.einsum("jd,de,je->j", diff, self.matrices[k], diff) + self.shifts[k]

    def gradient(self, t: int, x: np.ndarray) -> np.ndarray:
        k = self._index(t)
        q = self.matrices[k]
        return (as_points(x) - self.centers[k]) @ (q + q.T)

    def sup_abs(self, T: int, region: DomainSpec) -> float:
        out = 0.0
        for t in range(1, T + 1):
            k = self._index(t)
            if isinstance(region, Box):
                corners = np.array(list(itertools.product(*zip(region.lo, region.hi))))
                vals = self.values(t, corners)
                lo_val = min(0.0, float(self.shifts[k]))
                out = max(out, float(np.max(np.abs(vals))), abs(lo_val))
            elif isinstance(region, Ball):
                lam = float(np.max(np.linalg.eigvalsh(self.matrices[k])))
                far = _ball_box_far_sq(self.centers[k], region)
                out = max(out, lam * far + abs(float(self.shifts[k])))
            else:
                raise ScenarioError("supremum needs a bounded region (Ball or Box)")
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "centers": self.centers.tolist(),
            "matrices": self.matrices.tolist(),
            "shifts": self.shifts.tolist(),
        }


# ---------------------------------------------------------------------------
# interaction kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Kernel:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]  # (..., d) -> (...)
    convex: bool = True


def _quadratic_kernel(u: np.ndarray) -> np.ndarray:
    return np.einsum("...d,...d->...", u, u)


def _zero_kernel(u: np.ndarray) -> np.ndarray:
    return np.zeros(u.shape[:-1])


KERNELS: dict[str, Kernel] = {
    "quadratic": Kernel("quadratic", _quadratic_kernel),
    "zero": Kernel("zero", _zero_kernel),
}


def register_kernel(name: str, fn: Callable[[np.ndarray], np.ndarray], convex: bool = True) -> Kernel:
    """Make a kernel available to :class:`InteractionScenario` by name.

    ``fn`` maps an array of differences with shape (..., d) to nonnegative
    values with shape (...).
    """
    kernel = Kernel(name, fn, convex)
    KERNELS[name] = kernel
    return kernel


@dataclass(frozen=True, eq=False)
class InteractionScenario:
    """Interaction loss with ``W_t(u) = weights[t] * kernel(u)``."""

    kernel: str = "quadratic"
    weights: tuple[float, ...] = (1.0,)
    dim: int = 2
    kind = "interaction"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ScenarioError(f"unknown kernel {self.kernel!r}")
        w = tuple(float(v) for v in np.atleast_1d(self.weights))
        if not w or min(w) < 0:
            raise ScenarioError("kernel weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def convex(self) -> bool:
        return KERNELS[self.kernel].convex

    def weight(self, t: int) -> float:
        return self.weights[min(t, len(self.weights)) - 1]

    def kernel_values(self, t: int, diffs: np.ndarray) -> np.ndarray:
        out = self.weight(t) * KERNELS[self.kernel].fn(np.asarray(diffs, dtype=float))
        if np.any(out < 0) or not np.all(np.isfinite(out)):
            raise ScenarioError("kernel must be finite and nonnegative")
        return out

    def sup_abs(self, T: int, region: DomainSpec) -> float:
        if self.kernel == "zero" or max(self.weights) == 0:
            return 0.0
        if self.kernel != "quadratic":
            raise ScenarioError("closed-form supremum only for the quadratic kernel")
        if isinstance(region, Ball):
            diam_sq = (2.0 * region.radius) ** 2
        elif isinstance(region, Box):
            diam_sq = float(np.sum((region.hi - region.lo) ** 2))
        else:
            raise ScenarioError("supremum needs a bounded region (Ball or Box)")
        return max(self.weight(t) for t in range(1, T + 1)) * diam_sq

    def to_dict(self) -> dict:
        return {"kind": self.kind, "kernel": self.kernel, "weights": list(self.weights), "dim": self.dim}


PotentialScenario = MovingQuadratic | MinOfQuadratics | WShape | QuadraticSequence
Scenario = PotentialScenario | InteractionScenario


def scenario_from_dict(data: dict) -> Scenario:
    kind = data.get("kind")
    if kind == MovingQuadratic.kind:
        return MovingQuadratic(data["u1"], data["drift"])
    if kind == MinOfQuadratics.kind:
        return MinOfQuadratics(data["u1"], data["u_drift"], data["v1"], data["v_drift"])
    if kind == WShape.kind:
        return WShape(tuple(data["a"]), data.get("epsilon"))
    if kind == QuadraticSequence.kind:
        return QuadraticSequence(data["centers"], data["matrices"], data.get("shifts"))
    if kind == InteractionScenario.kind:
        return InteractionScenario(data.get("kernel", "quadratic"), tuple(data.get("weights", (1.0,))), int(data.get("dim", 2)))
    raise ScenarioError(f"unknown scenario kind {kind!r}")


# ---------------------------------------------------------------------------
# information model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OracleView:
    """Everything an algorithm may learn at round t.

    Potential games fill ``values_at_points`` (m,) and ``values_at_grid``
    (n,). Interaction games fill the kernel tables ``w_points[j, k] =
    W_t(x_j - x_k)``, ``w_grid[i, k] = W_t(z_i - z_k)`` and
    ``w_cross[j, i] = W_t(x_j - z_i)``.
    """

    round: int
    values_at_points: np.ndarray | None = None
    values_at_grid: np.ndarray | None = None
    w_points: np.ndarray | None = None
    w_grid: np.ndarray | None = None
    w_cross: np.ndarray | None = None

    @property
    def is_interaction(self) -> bool:
        return self.w_points is not None


def reveal(scenario: Scenario, t: int, points, grid: GridSet) -> OracleView:
    """Zeroth-order feedback at round ``t`` on ``points`` (m, d) and the grid."""
    if t < 1:
        raise ScenarioError("rounds start at 1")
    x = as_points(points)
    z = grid.points
    if isinstance(scenario, InteractionScenario):
        return OracleView(
            round=t,
            w_points=scenario.kernel_values(t, x[:, None, :] - x[None, :, :]),
            w_grid=scenario.kernel_values(t, z[:, None, :] - z[None, :, :]),
            w_cross=scenario.kernel_values(t, x[:, None, :] - z[None, :, :]),
        )
    return OracleView(round=t, values_at_points=scenario.values(t, x), values_at_grid=scenario.values(t, z))


def eval_potential(scenario: PotentialScenario, t: int, x) -> float:
    """Loss value at a single point; harness and test use only."""
    return float(scenario.values(t, np.asarray(x, dtype=float).reshape(1, -1))[0])


def sup_abs_bound(scenario: Scenario, T: int, region: DomainSpec) -> float:
    """``max_{t <= T} sup_{x in region} |V_t(x)|`` (an upper bound for min-of-quadratics)."""
    return scenario.sup_abs(T, region)
