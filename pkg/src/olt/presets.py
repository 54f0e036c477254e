"""Built-in run configurations.

The figure presets use the parameters of the published experiments: the
moving quadratic with drift (0.15, 0.15), the two-well potential with drifts
(0.165, 0.11) and (0.11, 0.165), both wells starting at (-1/sqrt 2, -1/sqrt 2),
m = 10 decision points and the n = 797 lattice points of the closed unit disk.
"""

from __future__ import annotations

import math

from .harness import ConfigError, RunConfig

_C = -1.0 / math.sqrt(2.0)
DISK_GRID = {"kind": "disk_lattice", "per_axis": 33, "center": [0.0, 0.0], "radius": 1.0, "expect_n": 797}
UNIT_BALL = {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0}
DISK_INIT = {"kind": "uniform_ball", "center": [0.0, 0.0], "radius": 1.0}
MOVING = {"kind": "moving_quadratic", "u1": [_C, _C], "drift": [0.15, 0.15]}
TWO_WELLS = {"kind": "min_of_quadratics", "u1": [_C, _C], "u_drift": [0.165, 0.11], "v1": [_C, _C], "v_drift": [0.11, 0.165]}
W_SHAPE = {"kind": "wshape", "a": [1.0], "epsilon": 1.0}
W_GRID = {"kind": "explicit", "points": [[-1.0], [1.0]]}
W_INIT = {"kind": "uniform_box", "lo": [-1.0], "hi": [1.0]}
W_BOX = {"kind": "box", "lo": [-2.0], "hi": [2.0]}

_PRESETS = {
    "fig-convex": dict(
        scenario=MOVING, grid=DISK_GRID, m=10, init=DISK_INIT, variant="minimal_selection", eta=0.2, T=7
    ),
    # targets leave the unit disk after about ten rounds
    "fig-convex-projected": dict(
        scenario=MOVING, grid=DISK_GRID, m=10, init=DISK_INIT, variant="minimal_selection", eta=0.2, T=14, domain=UNIT_BALL
    ),
    "fig-nonconvex": dict(
        scenario=TWO_WELLS,
        grid=DISK_GRID,
        m=10,
        init=DISK_INIT,
        variant="msoe",
        eta=0.05,
        T=19,
        domain=UNIT_BALL,
        replicates=500,
    ),
    "relaxed-nonconvex": dict(
        scenario=TWO_WELLS, grid=DISK_GRID, m=10, init=DISK_INIT, variant="relaxed", eta=0.05, T=19, domain=UNIT_BALL
    ),
    "wshape": dict(
        scenario=W_SHAPE,
        grid=W_GRID,
        m=200,
        init=W_INIT,
        variant="msoe",
        eta=0.1,
        T=20,
        epsilon=1.0,
        replicates=1000,
    ),
    "wshape-box": dict(
        scenario=W_SHAPE,
        grid=W_GRID,
        m=200,
        init=W_INIT,
        variant="msoe",
        eta=0.1,
        T=20,
        epsilon=1.0,
        domain=W_BOX,
        bound_region=W_BOX,
        replicates=1000,
    ),
    "relaxed-wshape": dict(
        scenario=W_SHAPE, grid=W_GRID, m=50, init=W_INIT, variant="relaxed", eta=0.1, T=20
    ),
    # a single hub keeps every constraint direction x_j - z nonzero
    "interaction": dict(
        scenario={"kind": "interaction", "kernel": "quadratic", "weights": [1.0], "dim": 2},
        grid={"kind": "explicit", "points": [[0.0, 0.0]]},
        m=10,
        init={"kind": "uniform_box", "lo": [1.0, 1.0], "hi": [2.0, 2.0]},
        variant="interaction",
        eta=0.05,
        T=50,
    ),
}


def preset_names() -> list[str]:
    return list(_PRESETS)


def preset(name: str, **overrides) -> RunConfig:
    try:
        base = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(_PRESETS)}") from None
    return RunConfig.from_dict({"name": name, **base, **overrides})
