import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from olt.domains import Ball, Box, WholeSpace, domain_from_dict, project
from olt.environments import (
    InteractionScenario,
    MinOfQuadratics,
    MovingQuadratic,
    QuadraticSequence,
    ScenarioError,
    WShape,
    eval_potential,
    register_kernel,
    reveal,
    scenario_from_dict,
    sup_abs_bound,
)
from olt.measures import GridSet

C = -1.0 / math.sqrt(2.0)


# --- domains ----------------------------------------------------------------


def test_projection_examples():
    ball = Ball([0.0, 0.0], 1.0)
    np.testing.assert_array_equal(project(np.array([0.3, -0.2]), ball), [0.3, -0.2])
    np.testing.assert_allclose(project(np.array([2.0, 0.0]), ball), [1.0, 0.0])
    np.testing.assert_array_equal(project(np.array([3.0, -1.0]), Box([0.0, 0.0], [2.0, 2.0])), [2.0, 0.0])
    np.testing.assert_array_equal(project(np.array([5.0]), WholeSpace()), [5.0])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=2), st.floats(0.1, 3.0))
def test_ball_projection_is_idempotent_and_nearest(p, radius):
    ball = Ball([0.5, -0.5], radius)
    q = project(np.array(p), ball)
    assert np.linalg.norm(q - ball.center) <= radius + 1e-12
    np.testing.assert_allclose(project(q, ball), q, atol=1e-12)
    # no boundary sample is closer than the projection
    angles = np.linspace(0, 2 * np.pi, 64)
    ring = ball.center + radius * np.c_[np.cos(angles), np.sin(angles)]
    assert np.linalg.norm(q - p) <= np.min(np.linalg.norm(ring - p, axis=1)) + 1e-9


def test_domain_round_trip_and_errors():
    for dom in (WholeSpace(), Ball([0.0], 2.0), Box([-1.0], [1.0])):
        assert domain_from_dict(dom.to_dict()).to_dict() == dom.to_dict()
    with pytest.raises(ValueError):
        Box([1.0], [0.0])
    with pytest.raises(ValueError):
        Ball([0.0], -1.0)


# --- potentials -------------------------------------------------------------


def test_wshape_values():
    w = WShape((1.0,))
    np.testing.assert_allclose(w.values(1, np.array([[0.0], [1.0], [-1.0]])), [1.0, 0.0, 0.0])
    assert eval_potential(WShape((2.0,)), 1, [1.5]) == pytest.approx(0.5)


def test_wshape_holds_last_height():
    w = WShape((1.0, 2.0, 3.0))
    assert w.height(2) == 2.0 and w.height(10) == 3.0
    with pytest.raises(ScenarioError):
        WShape((1.0, 0.5), epsilon=1.0)


def test_min_of_quadratics_values():
    s = MinOfQuadratics([0.0, 0.0], [0.0, 0.0], [2.0, 0.0], [0.0, 0.0])
    assert eval_potential(s, 1, [1.0, 0.0]) == pytest.approx(1.0)
    assert eval_potential(s, 1, [0.0, 0.0]) == 0.0


def test_time_convention_starts_at_printed_center():
    s = MovingQuadratic([C, C], [0.15, 0.15])
    np.testing.assert_allclose(s.center(1), [C, C])
    np.testing.assert_allclose(s.center(3), [C + 0.3, C + 0.3])
    t = scenario_from_dict({"kind": "min_of_quadratics", "u1": [C, C], "u_drift": [0.165, 0.11], "v1": [C, C], "v_drift": [0.11, 0.165]})
    u, v = t.centers(2)
    np.testing.assert_allclose(u, [C + 0.165, C + 0.11])
    np.testing.assert_allclose(v, [C + 0.11, C + 0.165])


def test_sup_abs_examples():
    # exact sup of (|x| - 1)^2 over [-2, 2] is 1, attained at -2, 0 and 2
    assert sup_abs_bound(WShape((1.0,)), 5, Box([-2.0], [2.0])) == pytest.approx(1.0)
    s = MovingQuadratic([0.3, 0.0], [0.1, 0.0])
    R = np.linalg.norm(s.center(4))
    assert sup_abs_bound(s, 4, Ball([0.0, 0.0], 1.0)) == pytest.approx((1.0 + R) ** 2)
    assert sup_abs_bound(InteractionScenario("zero"), 3, Ball([0.0, 0.0], 1.0)) == 0.0
    with pytest.raises(ScenarioError):
        sup_abs_bound(s, 4, WholeSpace())


def test_wshape_sup_matches_dense_sampling():
    w = WShape((1.0, 1.7))
    xs = np.linspace(-2, 1.5, 20001)
    dense = max(np.max(w.values(t, xs)) for t in (1, 2, 3))
    assert sup_abs_bound(w, 3, Box([-2.0], [1.5])) == pytest.approx(dense, rel=1e-9)


def test_min_of_quadratics_sup_is_an_upper_bound():
    s = MinOfQuadratics([C, C], [0.165, 0.11], [C, C], [0.11, 0.165])
    ang = np.linspace(0, 2 * np.pi, 721)
    r = np.linspace(0, 1, 41)
    pts = np.array([[ri * np.cos(a), ri * np.sin(a)] for ri in r for a in ang])
    dense = max(np.max(s.values(t, pts)) for t in range(1, 20))
    assert sup_abs_bound(s, 19, Ball([0.0, 0.0], 1.0)) >= dense - 1e-12


def test_quadratic_sequence_gradient_and_validation():
    q = QuadraticSequence([[1.0, 0.0]], [[[2.0, 0.0], [0.0, 1.0]]], [0.5])
    x = np.array([[0.0, 1.0]])
    assert q.values(1, x)[0] == pytest.approx(2.0 + 1.0 + 0.5)
    np.testing.assert_allclose(q.gradient(1, x), [[-4.0, 2.0]])
    with pytest.raises(ScenarioError):
        QuadraticSequence([[0.0]], [[[-1.0]]])
    with pytest.raises(ScenarioError):
        q.values(2, x)


def test_scenario_dict_round_trip():
    for s in (
        MovingQuadratic([0.0, 1.0], [0.1, 0.1]),
        WShape((1.0, 2.0), 0.5),
        InteractionScenario("quadratic", (1.0, 0.5), 2),
        QuadraticSequence([[0.0]], [[[1.0]]]),
    ):
        assert scenario_from_dict(s.to_dict()).to_dict() == s.to_dict()


# --- interaction and reveal -------------------------------------------------


def test_reveal_potential_and_interaction():
    grid = GridSet(np.array([[0.0], [1.0]]))
    v = reveal(WShape((1.0,)), 1, np.array([[0.0], [2.0]]), grid)
    np.testing.assert_allclose(v.values_at_points, [1.0, 1.0])
    np.testing.assert_allclose(v.values_at_grid, [1.0, 0.0])
    assert not v.is_interaction
    w = reveal(InteractionScenario("quadratic", (1.0,), 1), 1, np.array([[0.0], [2.0]]), GridSet(np.array([[1.0]])))
    assert w.is_interaction
    np.testing.assert_allclose(w.w_points, [[0.0, 4.0], [4.0, 0.0]])
    np.testing.assert_allclose(w.w_cross, [[1.0], [1.0]])
    with pytest.raises(ScenarioError):
        reveal(WShape((1.0,)), 0, np.zeros((1, 1)), grid)


def test_registered_kernel_is_used():
    register_kernel("abs1", lambda u: np.abs(u).sum(axis=-1))
    s = InteractionScenario("abs1", (2.0,), 1)
    np.testing.assert_allclose(s.kernel_values(1, np.array([[-1.5]])), [3.0])
    with pytest.raises(ScenarioError):
        InteractionScenario("nope")
