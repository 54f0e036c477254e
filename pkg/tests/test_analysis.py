import math

import numpy as np
import pytest

from olt.algorithms import AlgorithmConfig, PlayerState, Variant, play_round
from olt.analysis import (
    LedgerError,
    ReferenceMeasure,
    best_grid_reference,
    bound_rhs,
    bound_rhs_convex,
    bound_rhs_msoe,
    bound_rhs_relaxed,
    bound_rhs_shrinking,
    build_ledger,
    check_inequality,
    gamma_lower_bound,
    infeasible_fraction_series,
    interaction_loss,
    monte_carlo_check,
    potential_loss,
    reference_loss,
    shrinking_mechanism,
)
from olt.environments import InteractionScenario, MovingQuadratic, OracleView, WShape, reveal
from olt.measures import GridSet

W_GRID = GridSet(np.array([[-1.0], [1.0]]))


def view(values_at_points, values_at_grid=(0.0,), t=1):
    return OracleView(t, values_at_points=np.asarray(values_at_points, float), values_at_grid=np.asarray(values_at_grid, float))


def trajectory(scenario, points, grid, eta, variant, T, seed=0):
    cfg = AlgorithmConfig(eta, variant)
    state = PlayerState(np.asarray(points, float))
    states, views, reports = [state], [], []
    for t in range(1, T + 1):
        v = reveal(scenario, t, state.points, grid)
        state, rep = play_round(state, v, grid, cfg, seed)
        states.append(state)
        views.append(v)
        reports.append(rep)
    return states, views, reports


def test_potential_loss_examples():
    state = PlayerState(np.zeros((2, 1)))
    assert potential_loss(state, view([0.0, 0.0])) == 0.0
    assert potential_loss(state, view([1.0, 3.0])) == 2.0
    s = MovingQuadratic([0.3, 0.3], [0.1, 0.1])
    at_target = PlayerState(np.array([[0.3, 0.3]]))
    assert potential_loss(at_target, reveal(s, 1, at_target.points, GridSet(np.zeros((1, 2))))) == 0.0


def test_interaction_loss_examples():
    pts = np.array([[0.0], [2.0]])
    grid = GridSet(np.array([[0.0]]))
    assert interaction_loss(PlayerState(pts), reveal(InteractionScenario("zero", (1.0,), 1), 1, pts, grid)) == 0.0
    assert interaction_loss(PlayerState(pts), reveal(InteractionScenario("quadratic", (1.0,), 1), 1, pts, grid)) == pytest.approx(2.0)
    one = np.array([[0.7]])
    assert interaction_loss(PlayerState(one), reveal(InteractionScenario("quadratic", (1.0,), 1), 1, one, grid)) == 0.0


def test_reference_loss_examples():
    assert reference_loss(ReferenceMeasure.dirac(0, 2), view([0.0], [0.5, 3.0])) == 0.5
    assert reference_loss(ReferenceMeasure.uniform(2), view([0.0], [0.0, 1.0])) == 0.5
    grid = GridSet(np.array([[0.0], [1.0]]))
    v = reveal(InteractionScenario("quadratic", (2.0,), 1), 1, np.zeros((1, 1)), grid)
    assert reference_loss(ReferenceMeasure.dirac(1, 2), v) == 0.0


def test_best_grid_reference_tie_breaks_low():
    assert best_grid_reference([[3.0, 1.0, 2.0]]).weights.tolist() == [0.0, 1.0, 0.0]
    assert best_grid_reference([[1.0, 2.0, 2.0], [1.0, 0.0, 3.0]]).weights.tolist() == [1.0, 0.0, 0.0]
    w = WShape((1.0,))
    vals = [w.values(t, W_GRID.points) for t in range(1, 6)]
    assert best_grid_reference(vals).weights.tolist() == [1.0, 0.0]
    with pytest.raises(LedgerError):
        best_grid_reference(np.zeros((0, 3)))


def test_reference_from_points_validates():
    grid = GridSet(np.array([[0.0], [1.0]]))
    nu = ReferenceMeasure.from_points(grid, [[1.0]], [1.0])
    assert nu.weights.tolist() == [0.0, 1.0]
    with pytest.raises(Exception):
        ReferenceMeasure.from_points(grid, [[0.5]], [1.0])


def test_gamma_examples():
    assert gamma_lower_bound(1.0, 1.0) == pytest.approx(0.15865525393145707, abs=1e-15)
    big = [gamma_lower_bound(1.0, x) for x in (1e2, 1e4, 1e8)]
    assert all(g < 0.5 for g in big) and big == sorted(big)
    assert big[-1] == pytest.approx(0.5, abs=1e-4)
    assert gamma_lower_bound(1e-3, 1e-3) < 1e-100
    with pytest.raises(ValueError):
        gamma_lower_bound(0.0, 1.0)


def test_check_inequality_examples():
    ok = check_inequality(1.0, 2.0, 0.0)
    assert ok.passed and ok.slack == 1.0
    assert not check_inequality(2.0, 1.0, 0.0).passed
    assert check_inequality(1.0, 1.0 - 1e-12, 1e-9).passed


def test_monte_carlo_check_and_empty_ensemble():
    rng = np.random.default_rng(0)
    lhs = rng.normal(0.0, 1.0, 400)
    assert monte_carlo_check(lhs, lhs + 0.5).passed
    assert not monte_carlo_check(lhs + 1.0, lhs).passed
    with pytest.raises(LedgerError):
        monte_carlo_check([], [])


def test_infeasible_fraction_series():
    states, views, reports = trajectory(WShape((1.0,)), np.linspace(-2, 2, 10)[:, None], W_GRID, 0.1, Variant.MSOE, 1)
    frac = infeasible_fraction_series(reports)
    # points strictly inside (-1, 1) are infeasible
    assert frac[0] == pytest.approx(np.mean(np.abs(np.linspace(-2, 2, 10)) < 1))


def test_convex_bound_degenerate_cases():
    grid = GridSet(np.array([[0.0], [1.0]]))
    states, views, reports = trajectory(MovingQuadratic([0.5], [0.0]), [[0.0], [1.0]], grid, 0.5, Variant.MINIMAL_SELECTION, 1)
    ledger = build_ledger(states, views, reports, ReferenceMeasure.uniform(2), grid, 0.5)
    # both points sit on the grid at equal height, so xi stays zero
    assert ledger.xi_sq_over_m[0] == 0.0
    assert bound_rhs_convex(ledger)[0] == pytest.approx((ledger.w2sq[0] - ledger.w2sq[1]) / 1.0)
    assert bound_rhs_convex(ledger)[0] == pytest.approx(0.0)


def test_convex_bound_holds_on_a_short_run():
    grid = GridSet(np.array([[x, y] for x in np.linspace(-1, 1, 7) for y in np.linspace(-1, 1, 7)]))
    s = MovingQuadratic([-0.5, -0.5], [0.1, 0.1])
    pts = np.random.default_rng(3).uniform(-1, 1, (6, 2))
    states, views, reports = trajectory(s, pts, grid, 0.2, Variant.MINIMAL_SELECTION, 6)
    for nu in (best_grid_reference([v.values_at_grid for v in views]), ReferenceMeasure.uniform(len(grid))):
        ledger = build_ledger(states, views, reports, nu, grid, 0.2)
        assert np.all(ledger.regret <= bound_rhs(ledger) + 1e-8)


def test_msoe_bound_reduces_when_all_feasible():
    grid = GridSet(np.array([[0.0], [1.0], [2.0]]))
    states, views, reports = trajectory(MovingQuadratic([1.0], [0.0]), [[0.3], [1.7]], grid, 0.2, Variant.MSOE, 3)
    ledger = build_ledger(states, views, reports, ReferenceMeasure.dirac(1, 3), grid, 0.2)
    assert ledger.infeasible_count.sum() == 0
    head = ledger.w2sq[0] / 0.4
    np.testing.assert_allclose(bound_rhs_msoe(ledger), head + 0.1 * np.cumsum(ledger.xi_sq_over_m))


def test_shrinking_term_example():
    states, views, reports = trajectory(WShape((1.0,)), [[0.0]] + [[2.0]] * 9, W_GRID, 0.1, Variant.MSOE, 1)
    ledger = build_ledger(states, views, reports, ReferenceMeasure.dirac(0, 2), W_GRID, 0.1, track_w2=False)
    assert ledger.infeasible_count[0] == 1
    base = ledger.w2sq[0] / 0.2 + 0.05 * ledger.xi_sq_over_m[0]
    assert bound_rhs_shrinking(ledger, 1.0, 1.0)[0] == pytest.approx(base + 0.3)
    with pytest.raises(LedgerError):
        bound_rhs_shrinking(ledger, 0.0, 1.0)


def test_relaxed_bound_equals_convex_form_without_slack():
    grid = GridSet(np.array([[-1.0], [0.0], [1.0]]))
    states, views, reports = trajectory(MovingQuadratic([0.0], [0.0]), [[0.2], [-0.4]], grid, 0.1, Variant.RELAXED, 3)
    ledger = build_ledger(states, views, reports, ReferenceMeasure.dirac(1, 3), grid, 0.1)
    assert np.all(ledger.slack_sum == 0)
    expected = (ledger.w2sq[0] - ledger.w2sq[1:]) / 0.2 + 0.05 * np.cumsum(ledger.xi_sq_over_m)
    np.testing.assert_allclose(bound_rhs_relaxed(ledger), expected)


def test_bound_variant_mismatch_and_missing_terms():
    states, views, reports = trajectory(WShape((1.0,)), [[0.0], [2.0]], W_GRID, 0.1, Variant.MSOE, 2)
    ledger = build_ledger(states, views, reports, ReferenceMeasure.dirac(0, 2), W_GRID, 0.1, track_w2=False)
    with pytest.raises(LedgerError):
        bound_rhs_convex(ledger)
    with pytest.raises(LedgerError):
        build_ledger(states[:-1], views, reports, ReferenceMeasure.dirac(0, 2), W_GRID, 0.1)


def test_shrinking_mechanism_on_synthetic_paths():
    counts = np.array([[2, 3, 5], [1, 1, 4]])
    rep = shrinking_mechanism(counts, 5, 0.5)
    assert rep.non_expansion_ok
    np.testing.assert_allclose(rep.mean_fraction, [0.7, 0.6, 0.1])
    bad = shrinking_mechanism(np.array([[3, 2, 5]]), 5, 0.5)
    assert not bad.non_expansion_ok
    with pytest.raises(LedgerError):
        shrinking_mechanism(np.zeros((0, 3)), 5, 0.5)
    assert math.isclose(rep.gamma, 0.5)
