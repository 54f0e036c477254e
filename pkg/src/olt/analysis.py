"""Losses, regret ledgers and the right-hand sides of the regret bounds.

A ledger is computed after a run from the recorded trajectory, so the
reference measure may depend on the whole run (best grid point in
hindsight). All bound functions take the ledger and return one value per
prefix length T = 1..len(ledger).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .algorithms import PlayerState, StepReport, Variant
from .environments import OracleView
from .measures import DiscreteMeasure, GridSet, w2_squared
from .tolerances import BOUND_TOL


class LedgerError(ValueError):
    pass


# ---------------------------------------------------------------------------
# losses and references
# ---------------------------------------------------------------------------


def potential_loss(state: PlayerState, view: OracleView) -> float:
    """Mean of the revealed values on the decision points."""
    if view.round != state.round:
        raise LedgerError(f"view round {view.round} does not match state round {state.round}")
    return float(np.mean(view.values_at_points))


def interaction_loss(state: PlayerState, view: OracleView) -> float:
    """``(1/m^2) sum_{j,k} W(x_j - x_k)``, diagonal terms included."""
    if view.w_points is None:
        raise LedgerError("missing kernel values")
    m = state.m
    if view.w_points.shape != (m, m) or not np.all(np.isfinite(view.w_points)):
        raise LedgerError("missing kernel value")
    return float(np.sum(view.w_points)) / (m * m)


@dataclass(frozen=True, eq=False)
class ReferenceMeasure:
    """Comparator measure given by weights over the grid points."""

    weights: np.ndarray  # (n,)
    provenance: str  # "best_grid_dirac" | "uniform" | "user"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise LedgerError("reference weights must be a probability vector")
        object.__setattr__(self, "weights", w)

    def measure(self, grid: GridSet) -> DiscreteMeasure:
        if len(self.weights) != len(grid):
            raise LedgerError("reference measure must be supported on the grid")
        keep = self.weights > 0
        return DiscreteMeasure(grid.points[keep], self.weights[keep])

    @classmethod
    def dirac(cls, i: int, n: int, provenance: str = "user") -> "ReferenceMeasure":
        w = np.zeros(n)
        w[i] = 1.0
        return cls(w, provenance)

    @classmethod
    def uniform(cls, n: int) -> "ReferenceMeasure":
        return cls(np.full(n, 1.0 / n), "uniform")

    @classmethod
    def from_points(cls, grid: GridSet, points, weights, tol: float = 1e-12) -> "ReferenceMeasure":
        """Map a user measure onto grid indices; every atom must be a grid point."""
        w = np.zeros(len(grid))
        for p, a in zip(np.atleast_2d(np.asarray(points, dtype=float)), weights):
            hit = np.flatnonzero(np.all(np.abs(grid.points - p) <= tol, axis=1))
            if len(hit) == 0:
                raise LedgerError(f"support point {p.tolist()} is not a grid point")
            w[hit[0]] += a
        return cls(w, "user")


def reference_loss(nu: ReferenceMeasure, view: OracleView) -> float:
    """Comparator loss: ``sum_i a_i V(z_i)``, or ``a' W_grid a`` for interaction."""
    if view.is_interaction:
        if view.w_grid.shape != (len(nu.weights),) * 2:
            raise LedgerError("reference measure must be supported on the grid")
        return float(nu.weights @ view.w_grid @ nu.weights)
    if len(view.values_at_grid) != len(nu.weights):
        raise LedgerError("reference measure must be supported on the grid")
    return float(nu.weights @ view.values_at_grid)


def best_grid_reference(grid_values: Sequence[Sequence[float]]) -> ReferenceMeasure:
    """Dirac at the grid point with the smallest cumulative value (lowest index on ties)."""
    vals = np.atleast_2d(np.asarray(grid_values, dtype=float))
    if vals.size == 0:
        raise LedgerError("need at least one recorded round")
    totals = vals.sum(axis=0)
    return ReferenceMeasure.dirac(int(np.argmin(totals)), vals.shape[1], "best_grid_dirac")


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegretLedger:
    """Per-round terms of a run against one reference measure.

    Arrays are indexed by round t = 1..T (position t-1). ``w2sq`` has T+1
    entries: ``w2sq[t-1] = W2^2(mu_t, nu)``; entries are NaN when per-round
    transport was not tracked (the first entry is always present).
    """

    eta: float
    m: int
    variant: Variant
    reference: ReferenceMeasure
    loss: np.ndarray
    ref_loss: np.ndarray
    w2sq: np.ndarray
    xi_sq_over_m: np.ndarray  # (1/m) sum_j ||xi_j||^2 (zero rows for explored points)
    slack_over_m: np.ndarray  # (1/m) sum_j s_j
    slack_sum: np.ndarray  # sum_j s_j
    gap_infeasible_over_m: np.ndarray  # (1/m) sum_{j not in S} max_i [V(x_j) - V(z_i)]_+
    infeasible_count: np.ndarray
    explore_scale_max: np.ndarray

    def __len__(self) -> int:
        return len(self.loss)

    @property
    def regret(self) -> np.ndarray:
        """Cumulative regret at each prefix."""
        return np.cumsum(self.loss - self.ref_loss)

    @property
    def infeasible_fraction(self) -> np.ndarray:
        return self.infeasible_count / self.m


def build_ledger(
    states: Sequence[PlayerState],
    views: Sequence[OracleView],
    reports: Sequence[StepReport],
    nu: ReferenceMeasure,
    grid: GridSet,
    eta: float,
    track_w2: bool = True,
) -> RegretLedger:
    """Assemble the ledger from a trajectory of T rounds (``len(states) == T + 1``)."""
    T = len(reports)
    if len(views) != T or len(states) != T + 1:
        raise LedgerError("ledger incomplete: need T views, T reports and T+1 states")
    if T == 0:
        raise LedgerError("ledger incomplete: no rounds")
    variant = reports[0].variant
    m = states[0].m
    interaction = variant is Variant.INTERACTION
    loss = np.array([(interaction_loss if interaction else potential_loss)(s, v) for s, v in zip(states, views)])
    ref = np.array([reference_loss(nu, v) for v in views])
    ref_measure = nu.measure(grid)
    w2 = np.full(T + 1, np.nan)
    for t, s in enumerate(states):
        if t == 0 or track_w2:
            w2[t] = w2_squared(s.measure(), ref_measure)
    infeasible = [~r.feasible for r in reports]
    return RegretLedger(
        eta=float(eta),
        m=m,
        variant=variant,
        reference=nu,
        loss=loss,
        ref_loss=ref,
        w2sq=w2,
        xi_sq_over_m=np.array([np.sum(r.xi**2) / m for r in reports]),
        slack_over_m=np.array([np.sum(r.slack) / m for r in reports]),
        slack_sum=np.array([float(np.sum(r.slack)) for r in reports]),
        gap_infeasible_over_m=np.array([np.sum(r.gap[inf]) / m for r, inf in zip(reports, infeasible)]),
        infeasible_count=np.array([int(np.count_nonzero(inf)) for inf in infeasible]),
        explore_scale_max=np.array([float(np.max(r.scale, initial=0.0)) for r in reports]),
    )


def _require(ledger: RegretLedger, allowed: set[Variant], name: str) -> None:
    if ledger.variant not in allowed:
        raise LedgerError(f"{name} does not apply to a {ledger.variant.value} run")


def _telescoped(ledger: RegretLedger) -> np.ndarray:
    if np.any(np.isnan(ledger.w2sq)):
        raise LedgerError("ledger incomplete: per-round transport terms were not tracked")
    return (ledger.w2sq[0] - ledger.w2sq[1:]) / (2.0 * ledger.eta)


def bound_rhs_convex(ledger: RegretLedger) -> np.ndarray:
    """Telescoped transport term plus ``(eta/2) sum_t (1/m) sum_j ||xi_j^t||^2``."""
    _require(ledger, {Variant.MINIMAL_SELECTION}, "the convex bound")
    return _telescoped(ledger) + 0.5 * ledger.eta * np.cumsum(ledger.xi_sq_over_m)


def bound_rhs_relaxed(ledger: RegretLedger) -> np.ndarray:
    """As the convex bound with per-point terms ``||xi||^2 + 2 s / eta``."""
    _require(ledger, {Variant.RELAXED}, "the slack bound")
    return _telescoped(ledger) + np.cumsum(0.5 * ledger.eta * ledger.xi_sq_over_m + ledger.slack_over_m)


def bound_rhs_interaction(ledger: RegretLedger) -> np.ndarray:
    _require(ledger, {Variant.INTERACTION}, "the interaction bound")
    return _telescoped(ledger) + 0.5 * ledger.eta * np.cumsum(ledger.xi_sq_over_m)


def bound_rhs_msoe(ledger: RegretLedger) -> np.ndarray:
    """Per-path surrogate of the expected-regret bound for exploration runs.

    ``W2^2(mu_1, nu)/(2 eta) + (eta/2) sum_t xi terms + (3/2) sum_t (1/m) sum_{j not in S} gap_j``.
    Only its mean over sample paths bounds the mean regret.
    """
    _require(ledger, {Variant.MSOE, Variant.MINIMAL_SELECTION}, "the exploration bound")
    head = ledger.w2sq[0] / (2.0 * ledger.eta)
    return head + np.cumsum(0.5 * ledger.eta * ledger.xi_sq_over_m + 1.5 * ledger.gap_infeasible_over_m)


def bound_rhs_shrinking(ledger: RegretLedger, gamma: float, B: float) -> np.ndarray:
    """Exploration bound with the infeasible tail replaced by ``3 B |[m] minus S^1| / (gamma m)``."""
    _require(ledger, {Variant.MSOE}, "the shrinking bound")
    if not 0 < gamma <= 1:
        raise LedgerError("gamma must lie in (0, 1]")
    if B < 0:
        raise LedgerError("B must be nonnegative")
    head = ledger.w2sq[0] / (2.0 * ledger.eta)
    tail = 3.0 * B / gamma * ledger.infeasible_count[0] / ledger.m
    return head + 0.5 * ledger.eta * np.cumsum(ledger.xi_sq_over_m) + tail


def bound_rhs(ledger: RegretLedger) -> np.ndarray:
    """The bound that matches the run's variant."""
    return {
        Variant.MINIMAL_SELECTION: bound_rhs_convex,
        Variant.RELAXED: bound_rhs_relaxed,
        Variant.INTERACTION: bound_rhs_interaction,
        Variant.MSOE: bound_rhs_msoe,
    }[ledger.variant](ledger)


def gamma_lower_bound(epsilon: float, eta: float) -> float:
    """``Phi(-1 / sqrt(epsilon * eta))``, the w-shape escape probability.

    Phi is evaluated with ``scipy.special.ndtr`` (Cephes erf/erfc, relative
    error near machine precision).
    """
    if not (epsilon > 0 and eta > 0):
        raise ValueError("epsilon and eta must be positive")
    return float(ndtr(-1.0 / math.sqrt(epsilon * eta)))


def infeasible_fraction_series(reports: Sequence[StepReport]) -> np.ndarray:
    return np.array([r.infeasible_count / len(r.feasible) for r in reports])


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    tol: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.tol


def check_inequality(lhs: float, rhs: float, tol: float = BOUND_TOL) -> InequalityCheck:
    return InequalityCheck(float(lhs), float(rhs), float(tol))


def check_prefixes(lhs: np.ndarray, rhs: np.ndarray, tol: float = BOUND_TOL) -> InequalityCheck:
    """Worst prefix of a pathwise bound: the check with the smallest slack."""
    k = int(np.argmin(np.asarray(rhs) - np.asarray(lhs)))
    return check_inequality(lhs[k], rhs[k], tol)


@dataclass(frozen=True)
class MonteCarloCheck:
    """Mean of (lhs - rhs) over sample paths against a 3-standard-error margin."""

    mean_lhs: float
    mean_rhs: float
    stderr: float
    samples: int
    z: float = 3.0

    @property
    def slack(self) -> float:
        return self.mean_rhs - self.mean_lhs

    @property
    def passed(self) -> bool:
        return self.mean_lhs <= self.mean_rhs + self.z * self.stderr


def monte_carlo_check(lhs: Sequence[float], rhs: Sequence[float], z: float = 3.0) -> MonteCarloCheck:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if len(lhs) == 0:
        raise LedgerError("empty ensemble")
    diff = lhs - rhs
    se = float(np.std(diff, ddof=1) / np.sqrt(len(diff))) if len(diff) > 1 else math.inf
    return MonteCarloCheck(float(lhs.mean()), float(rhs.mean()), se, len(diff), z)


@dataclass(frozen=True)
class ShrinkingReport:
    """Outcome of the non-expansion and geometric-decay checks on an ensemble."""

    monotone_paths: int
    paths: int
    mean_fraction: np.ndarray
    envelope: np.ndarray  # (1 - gamma)^(t-1) * initial fraction + 3 binomial standard errors
    gamma: float

    @property
    def non_expansion_ok(self) -> bool:
        return self.monotone_paths == self.paths

    @property
    def decay_ok(self) -> bool:
        return bool(np.all(self.mean_fraction <= self.envelope))


def shrinking_mechanism(feasible_counts: np.ndarray, m: int, gamma: float, z: float = 3.0) -> ShrinkingReport:
    """Check |S^t| monotone per path and the mean infeasible fraction envelope.

    ``feasible_counts`` has shape (paths, T) with ``|S^t|`` per path and round.
    """
    counts = np.asarray(feasible_counts)
    if counts.ndim != 2 or counts.shape[0] == 0:
        raise LedgerError("empty ensemble")
    paths, T = counts.shape
    monotone = int(np.sum(np.all(np.diff(counts, axis=1) >= 0, axis=1)))
    frac = 1.0 - counts / m
    mean = frac.mean(axis=0)
    decay = (1.0 - gamma) ** np.arange(T) * mean[0]
    p = np.clip(decay, 0.0, 1.0)
    envelope = decay + z * np.sqrt(p * (1.0 - p) / (m * paths))
    return ShrinkingReport(monotone, paths, mean, envelope, gamma)
