import numpy as np
import pytest

from olt.algorithms import (
    AlgorithmConfig,
    Explore,
    InfeasiblePoint,
    MinSel,
    PlayerState,
    Variant,
    exploration_scale,
    interaction_round,
    minimal_selection_round,
    msoe_round,
    play_round,
    relaxed_round,
)
from olt.domains import Ball
from olt.environments import InteractionScenario, MinOfQuadratics, MovingQuadratic, OracleView, WShape, reveal
from olt.measures import GridSet
from olt.rng import exploration_normal
from olt.selection import build_potential_constraints, min_norm_select

W_GRID = GridSet(np.array([[-1.0], [1.0]]))
DISK = GridSet(np.array([[x, y] for x in np.linspace(-1, 1, 9) for y in np.linspace(-1, 1, 9) if x * x + y * y <= 1]))


def test_single_point_quadratic_step():
    grid = GridSet(np.array([[0.0, 0.0], [0.5, 0.5], [-1.0, 0.0]]))
    scenario = MovingQuadratic([0.0, 0.0], [0.0, 0.0])
    state = PlayerState(np.array([[1.0, 0.0]]))
    view = reveal(scenario, 1, state.points, grid)
    xi = min_norm_select(build_potential_constraints(state.points[0], grid, view.values_at_points[0], view.values_at_grid)).xi
    new, report = minimal_selection_round(state, view, grid, AlgorithmConfig(0.5))
    np.testing.assert_allclose(new.points[0], np.array([1.0, 0.0]) - 0.5 * xi)
    assert new.round == 2
    assert isinstance(report.actions()[0], MinSel)


def test_no_movement_when_offsets_nonpositive():
    state = PlayerState(np.array([[1.0], [-1.0]]))
    view = reveal(WShape((1.0,)), 1, state.points, W_GRID)
    new, report = minimal_selection_round(state, view, W_GRID, AlgorithmConfig(0.3))
    np.testing.assert_array_equal(new.points, state.points)
    np.testing.assert_array_equal(report.xi, 0.0)


def test_projection_onto_ball():
    grid = GridSet(np.array([[2.0, 0.0]]))
    state = PlayerState(np.array([[0.0, 0.0]]))
    view = OracleView(1, values_at_points=np.array([2.0]), values_at_grid=np.array([0.0]))
    # constraint <xi, (-2, 0)> >= 2 gives xi = (-1, 0); step 2 lands at (2, 0)
    new, report = minimal_selection_round(state, view, grid, AlgorithmConfig(2.0, domain=Ball([0.0, 0.0], 1.0)))
    np.testing.assert_allclose(report.pre_projection_points, [[2.0, 0.0]])
    np.testing.assert_allclose(new.points, [[1.0, 0.0]])


def test_minimal_selection_raises_on_infeasible_point():
    state = PlayerState(np.array([[2.0], [0.0]]))
    view = reveal(WShape((1.0,)), 1, state.points, W_GRID)
    with pytest.raises(InfeasiblePoint) as err:
        minimal_selection_round(state, view, W_GRID, AlgorithmConfig(0.1))
    assert err.value.j == 1 and err.value.t == 1


def test_exploration_scale_examples():
    assert exploration_scale(0.0, [0.0, 1.0], 0.04, 1) == 0.0
    assert exploration_scale(1.0, [0.0, 1.0], 0.04, 1) == pytest.approx(0.2)
    assert exploration_scale(1.0, [0.0, 1.0], 0.04, 4) == pytest.approx(0.1)


def test_msoe_equals_minimal_selection_when_all_feasible():
    state = PlayerState(np.array([[1.5], [-2.0], [1.1]]))
    view = reveal(WShape((1.0,)), 1, state.points, W_GRID)
    cfg = AlgorithmConfig(0.1, Variant.MSOE)
    a, _ = minimal_selection_round(state, view, W_GRID, cfg)
    b, report = msoe_round(state, view, W_GRID, cfg, seed=7)
    np.testing.assert_array_equal(a.points, b.points)
    assert report.infeasible_count == 0


def test_msoe_exploration_step_formula():
    state = PlayerState(np.array([[0.0]]))
    view = reveal(WShape((1.0,)), 1, state.points, W_GRID)
    new, report = msoe_round(state, view, W_GRID, AlgorithmConfig(0.04, Variant.MSOE), seed=3)
    assert report.feasible_set == []
    g = report.gaussian[0, 0]
    assert report.scale[0] == pytest.approx(0.2)
    assert new.points[0, 0] == pytest.approx(-0.2 * g)
    assert isinstance(report.actions()[0], Explore)


def test_msoe_step_with_unit_draw(monkeypatch):
    monkeypatch.setattr("olt.algorithms.exploration_normals", lambda seed, t, m, d: np.ones((m, d)))
    state = PlayerState(np.array([[0.0]]))
    view = reveal(WShape((1.0,)), 1, state.points, W_GRID)
    new, _ = msoe_round(state, view, W_GRID, AlgorithmConfig(0.04, Variant.MSOE), seed=0)
    assert new.points[0, 0] == pytest.approx(-0.2)


def test_msoe_is_reproducible_and_order_free():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.9, 0.9, (20, 1))
    cfg = AlgorithmConfig(0.1, Variant.MSOE)
    view = reveal(WShape((1.0,)), 4, pts, W_GRID)
    a, ra = msoe_round(PlayerState(pts, 4), view, W_GRID, cfg, seed=11)
    b, _ = msoe_round(PlayerState(pts, 4), view, W_GRID, cfg, seed=11)
    np.testing.assert_array_equal(a.points, b.points)
    # a point's draw depends on (seed, round, index) only, not on which others explore
    moved = pts.copy()
    moved[0] = 5.0
    _, rb = msoe_round(PlayerState(moved, 4), reveal(WShape((1.0,)), 4, moved, W_GRID), W_GRID, cfg, seed=11)
    explored = ~ra.feasible & ~rb.feasible
    assert explored.sum() == 19
    np.testing.assert_array_equal(ra.gaussian[explored], rb.gaussian[explored])
    np.testing.assert_array_equal(ra.gaussian[3], exploration_normal(11, 4, 3, 1, m=20))


def test_relaxed_matches_minimal_selection_when_multipliers_are_small():
    scenario = MovingQuadratic([0.2, -0.1], [0.0, 0.0])
    state = PlayerState(np.random.default_rng(1).uniform(-0.7, 0.7, (8, 2)))
    view = reveal(scenario, 1, state.points, DISK)
    eta = 0.2
    a, _ = minimal_selection_round(state, view, DISK, AlgorithmConfig(eta))
    b, rb = relaxed_round(state, view, DISK, AlgorithmConfig(eta, Variant.RELAXED))
    small = []
    for j, x in enumerate(state.points):
        c = build_potential_constraints(x, DISK, view.values_at_points[j], view.values_at_grid)
        small.append(min_norm_select(c).multipliers.sum() <= 1.0 / eta)
    small = np.array(small)
    assert small.any() and not small.all()
    np.testing.assert_array_equal(rb.slack[small], 0.0)
    np.testing.assert_allclose(a.points[small], b.points[small], atol=1e-8)
    # elsewhere the relaxed program trades norm for slack
    assert np.all(rb.slack[~small] > 0)


def test_relaxed_round_is_defined_at_infeasible_points():
    state = PlayerState(np.array([[0.0], [0.3]]))
    view = reveal(WShape((1.0,)), 1, state.points, W_GRID)
    new, report = relaxed_round(state, view, W_GRID, AlgorithmConfig(0.1, Variant.RELAXED))
    assert report.infeasible_count == 2
    assert np.all(report.slack > 0)


def test_interaction_round_examples():
    grid = GridSet(np.array([[1.0]]))
    state = PlayerState(np.array([[0.0], [2.0]]))
    view = reveal(InteractionScenario("quadratic", (1.0,), 1), 1, state.points, grid)
    new, report = interaction_round(state, view, grid, AlgorithmConfig(0.1, Variant.INTERACTION))
    assert report.xi[0, 0] == pytest.approx(-2.0)
    assert new.points[0, 0] == pytest.approx(0.2)
    zero = reveal(InteractionScenario("zero", (1.0,), 1), 1, state.points, grid)
    same, r0 = interaction_round(state, zero, grid, AlgorithmConfig(0.1, Variant.INTERACTION))
    np.testing.assert_array_equal(same.points, state.points)


def test_play_round_dispatch_and_view_checks():
    state = PlayerState(np.array([[0.5, 0.5]]))
    scenario = MinOfQuadratics([0.0, 0.0], [0.1, 0.0], [0.0, 0.0], [0.0, 0.1])
    view = reveal(scenario, 1, state.points, DISK)
    new, report = play_round(state, view, DISK, AlgorithmConfig(0.05, Variant.MSOE), seed=0)
    assert report.variant is Variant.MSOE
    with pytest.raises(ValueError):
        play_round(PlayerState(state.points, 2), view, DISK, AlgorithmConfig(0.05))
    with pytest.raises(ValueError):
        AlgorithmConfig(0.0)
    with pytest.raises(ValueError):
        PlayerState(np.zeros((0, 2)))
