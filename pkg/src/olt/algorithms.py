"""One round of play for each update rule.

All rounds are pure functions of ``(state, view, grid, config)`` (plus the
master seed for MSoE). Every variant finishes with a projection onto the
configured domain, which is the identity on ``WholeSpace``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .domains import Ball, Box, DomainSpec, WholeSpace, project
from .environments import OracleView
from .measures import DiscreteMeasure, GridSet
from .rng import exploration_normals
from .selection import (
    ConstraintSet,
    build_interaction_constraints,
    min_norm_select_batch,
    relaxed_select,
)

__all__ = [
    "Variant",
    "PlayerState",
    "AlgorithmConfig",
    "StepReport",
    "InfeasiblePoint",
    "minimal_selection_round",
    "msoe_round",
    "relaxed_round",
    "interaction_round",
    "play_round",
    "exploration_scale",
    "project",
    "WholeSpace",
    "Ball",
    "Box",
]


class Variant(str, enum.Enum):
    MINIMAL_SELECTION = "minimal_selection"
    MSOE = "msoe"
    RELAXED = "relaxed"
    INTERACTION = "interaction"


class InfeasiblePoint(RuntimeError):
    """Raised when a deterministic variant meets an infeasible decision point."""

    def __init__(self, j: int, t: int):
        super().__init__(f"decision point {j} is infeasible at round {t}; use MSoE or the relaxed variant")
        self.j = j
        self.t = t


@dataclass(frozen=True, eq=False)
class PlayerState:
    """Decision points x_1..x_m (shape (m, d)) played at round ``round``."""

    points: np.ndarray
    round: int = 1

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("player state needs an (m, d) array with m >= 1")
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure.uniform(self.points)


@dataclass(frozen=True)
class AlgorithmConfig:
    eta: float
    variant: Variant = Variant.MINIMAL_SELECTION
    domain: DomainSpec = field(default_factory=WholeSpace)

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        object.__setattr__(self, "variant", Variant(self.variant))


class MinSel(NamedTuple):
    xi: np.ndarray


class Explore(NamedTuple):
    gaussian: np.ndarray
    scale: float


class Relax(NamedTuple):
    xi: np.ndarray
    slack: float


@dataclass(frozen=True, eq=False)
class StepReport:
    """What happened to each decision point in one round.

    ``feasible[j]`` is membership of j in the feasible set; ``xi`` holds the
    selected directions (zero rows for explored points), ``gaussian`` and
    ``scale`` the exploration draws (zero for the rest), ``slack`` the
    relaxed slacks. ``gap[j] = max_i [V(x_j) - V(z_i)]_+`` for potential
    games (zero for interaction games).
    """

    round: int
    variant: Variant
    feasible: np.ndarray
    xi: np.ndarray
    gaussian: np.ndarray
    scale: np.ndarray
    slack: np.ndarray
    gap: np.ndarray
    pre_projection_points: np.ndarray

    @property
    def feasible_set(self) -> list[int]:
        return np.flatnonzero(self.feasible).tolist()

    @property
    def infeasible_count(self) -> int:
        return int(len(self.feasible) - np.count_nonzero(self.feasible))

    def actions(self) -> list[MinSel | Explore | Relax]:
        out = []
        for j in range(len(self.feasible)):
            if self.variant is Variant.RELAXED:
                out.append(Relax(self.xi[j], float(self.slack[j])))
            elif self.feasible[j]:
                out.append(MinSel(self.xi[j]))
            else:
                out.append(Explore(self.gaussian[j], float(self.scale[j])))
        return out


def exploration_scale(v_at_x: float, v_at_grid, eta: float, d: int) -> float:
    """``sqrt(eta * max_i [V(x) - V(z_i)]_+ / d)``."""
    if not eta > 0 or d < 1:
        raise ValueError("need eta > 0 and d >= 1")
    gap = max(0.0, float(v_at_x) - float(np.min(v_at_grid)))
    return float(np.sqrt(eta * gap / d))


def _potential_program(state: PlayerState, view: OracleView, grid: GridSet):
    if view.values_at_points is None or view.values_at_grid is None:
        raise ValueError("potential rounds need potential values in the view")
    if view.round != state.round:
        raise ValueError(f"view is for round {view.round}, state is at round {state.round}")
    x = state.points
    directions = x[:, None, :] - grid.points[None, :, :]
    offsets = view.values_at_points[:, None] - view.values_at_grid[None, :]
    gap = np.maximum(0.0, view.values_at_points - np.min(view.values_at_grid))
    return directions, offsets, gap


def _report(state, variant, feasible, xi, pre, gap, gaussian=None, scale=None, slack=None) -> StepReport:
    m, d = state.points.shape
    return StepReport(
        round=state.round,
        variant=variant,
        feasible=feasible,
        xi=xi,
        gaussian=np.zeros((m, d)) if gaussian is None else gaussian,
        scale=np.zeros(m) if scale is None else scale,
        slack=np.zeros(m) if slack is None else slack,
        gap=gap,
        pre_projection_points=pre,
    )


def minimal_selection_round(state: PlayerState, view: OracleView, grid: GridSet, cfg: AlgorithmConfig):
    """``x_j <- P(x_j - eta * xi_j)``; every point must be feasible."""
    directions, offsets, gap = _potential_program(state, view, grid)
    xi, feasible = min_norm_select_batch(directions, offsets)
    if not np.all(feasible):
        raise InfeasiblePoint(int(np.argmin(feasible)), state.round)
    pre = state.points - cfg.eta * xi
    new = PlayerState(project(pre, cfg.domain), state.round + 1)
    return new, _report(state, Variant.MINIMAL_SELECTION, feasible, xi, pre, gap)


def msoe_round(state: PlayerState, view: OracleView, grid: GridSet, cfg: AlgorithmConfig, seed: int):
    """Minimal selection where feasible, scaled Gaussian exploration elsewhere."""
    directions, offsets, gap = _potential_program(state, view, grid)
    xi, feasible = min_norm_select_batch(directions, offsets)
    m, d = state.points.shape
    gaussian = np.zeros((m, d))
    scale = np.zeros(m)
    if not np.all(feasible):
        explore = ~feasible
        gaussian[explore] = exploration_normals(seed, state.round, m, d)[explore]
        scale[explore] = np.sqrt(cfg.eta * gap[explore] / d)
    pre = state.points - cfg.eta * xi - scale[:, None] * gaussian
    new = PlayerState(project(pre, cfg.domain), state.round + 1)
    return new, _report(state, Variant.MSOE, feasible, xi, pre, gap, gaussian, scale)


def relaxed_round(state: PlayerState, view: OracleView, grid: GridSet, cfg: AlgorithmConfig):
    """Slack-relaxed selection; always defined."""
    directions, offsets, gap = _potential_program(state, view, grid)
    _, feasible = min_norm_select_batch(directions, offsets)
    m, d = state.points.shape
    xi = np.zeros((m, d))
    slack = np.zeros(m)
    for j in range(m):
        out = relaxed_select(ConstraintSet(directions[j], offsets[j]), cfg.eta)
        xi[j] = out.xi
        slack[j] = out.slack
    pre = state.points - cfg.eta * xi
    new = PlayerState(project(pre, cfg.domain), state.round + 1)
    return new, _report(state, Variant.RELAXED, feasible, xi, pre, gap, slack=slack)


def interaction_round(state: PlayerState, view: OracleView, grid: GridSet, cfg: AlgorithmConfig):
    """Minimal selection against the interaction constraints."""
    if not view.is_interaction:
        raise ValueError("interaction rounds need kernel tables in the view")
    m, d = state.points.shape
    directions = np.empty((m, len(grid), d))
    offsets = np.empty((m, len(grid)))
    for j in range(m):
        c = build_interaction_constraints(j, state.points, grid, view.w_points, view.w_grid)
        directions[j], offsets[j] = c.directions, c.offsets
    xi, feasible = min_norm_select_batch(directions, offsets)
    if not np.all(feasible):
        raise InfeasiblePoint(int(np.argmin(feasible)), state.round)
    pre = state.points - cfg.eta * xi
    new = PlayerState(project(pre, cfg.domain), state.round + 1)
    return new, _report(state, Variant.INTERACTION, feasible, xi, pre, np.zeros(m))


def play_round(state: PlayerState, view: OracleView, grid: GridSet, cfg: AlgorithmConfig, seed: int = 0):
    """Dispatch on ``cfg.variant``."""
    if cfg.variant is Variant.MSOE:
        return msoe_round(state, view, grid, cfg, seed)
    if cfg.variant is Variant.RELAXED:
        return relaxed_round(state, view, grid, cfg)
    if cfg.variant is Variant.INTERACTION:
        return interaction_round(state, view, grid, cfg)
    return minimal_selection_round(state, view, grid, cfg)
