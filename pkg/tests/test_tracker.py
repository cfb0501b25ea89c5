import math

import numpy as np
import pytest

from hybridplanner.command import CommandParams, tracking_command
from hybridplanner.global_planner import time_parameterize
from hybridplanner.kinematics import yoshikawa
from hybridplanner.tracker import (ErrorRate, PathIndex, TrackerParams, lookahead,
                                   lookahead_step, nearest_config, path_curvature, pd_velocity,
                                   tracking_velocity)

P = TrackerParams()


def line_path(N=100, n=3):
    return np.linspace(0, 1, N)[:, None] * np.ones(n)


def test_nearest_exact_hit():
    C = line_path()
    q, x = nearest_config(PathIndex(C), C[7])
    assert x == 7 and np.array_equal(q, C[7])


def test_nearest_tie_prefers_lower_index():
    C = np.arange(10.0)[:, None] * np.ones(3)
    assert nearest_config(PathIndex(C), 0.5 * (C[3] + C[4]))[1] == 3


def test_nearest_matches_linear_scan(rng):
    C = np.cumsum(rng.normal(scale=0.05, size=(500, 7)), axis=0)
    index = PathIndex(C)
    for q in C[rng.integers(0, 500, 1000)] + rng.normal(scale=0.1, size=(1000, 7)):
        assert nearest_config(index, q)[1] == int(np.argmin(np.linalg.norm(C - q, axis=1)))


def test_lookahead_straight_path_speed_term():
    assert lookahead_step(1000, 10, 0.4, 0.0, P) == 7


def test_lookahead_reversal_clamps_to_s_min():
    assert lookahead_step(1000, 10, 0.0, math.pi, P) == 1


def test_lookahead_terminal_hold():
    C = line_path()
    q_next, x, s = lookahead(C, C[-1], np.zeros(3), P)
    assert x == len(C) - 1 and s == 0 and np.array_equal(q_next, C[-1])


def test_lookahead_stays_in_bounds(rng):
    C = np.cumsum(rng.normal(scale=0.05, size=(60, 4)), axis=0)
    for _ in range(200):
        q = C[rng.integers(0, 60)] + rng.normal(scale=0.05, size=4)
        _, x, s = lookahead(C, q, rng.normal(size=4), P)
        assert x <= x + s <= min(x + P.s_max, len(C) - 1)


def test_curvature_range_and_degenerate_segments():
    C = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    assert path_curvature(C, 1) == pytest.approx(math.pi)
    assert path_curvature(C, 2) == 0.0
    assert path_curvature(C, 0) == 0.0


def test_pd_law():
    q = np.zeros(3)
    np.testing.assert_allclose(pd_velocity(q, q, np.zeros(3), P), 0.0)
    p = TrackerParams(K_D=0.0)
    np.testing.assert_allclose(pd_velocity(np.array([0.01, 0, 0]), q, np.zeros(3), p), [2.0, 0, 0])


def test_error_rate_backward_difference():
    rate = ErrorRate(0.01)
    np.testing.assert_allclose(rate(np.ones(2)), 0.0)
    np.testing.assert_allclose(rate(np.array([1.02, 1.0])), [2.0, 0.0])


def test_tracking_velocity_solves_implicit_law():
    q_next, q, ref = np.array([0.1, -0.2]), np.zeros(2), np.array([0.3, 0.1])
    qd = tracking_velocity(q_next, q, ref, P)
    np.testing.assert_allclose(qd, P.K_P * (q_next - q) + P.K_D * (ref - qd))


def test_invalid_params():
    with pytest.raises(ValueError):
        TrackerParams(s_min=5, s_max=2)
    with pytest.raises(ValueError):
        TrackerParams(K_P=-1.0)


def test_tracking_converges_to_final_config(arm):
    """Closed loop on a short path: distance to the final configuration
    shrinks every step on the final stretch and ends below 1e-3 rad."""
    q0 = np.radians([0, -30, 90, -20, 10, -40, 0])
    q1 = q0 + np.radians([20, 10, -15, 10, 5, 10, 20])
    tp = time_parameterize(np.vstack([q0, q1]), arm.qd_max, arm.qdd_max, 0.01)
    index = PathIndex(tp.configs)
    vel = np.vstack([tp.velocities, np.zeros((1, arm.n))])
    cp = CommandParams()
    q, qd = q0.copy(), np.zeros(arm.n)
    dists = []
    for _ in range(1000):
        q_next, x, s = lookahead(tp.configs, q, qd, P, index)
        qd = tracking_command(tracking_velocity(q_next, q, vel[x + s], P), q, qd, arm, cp,
                              yoshikawa(arm, q)).qd
        q = q + 0.01 * qd
        if x == len(tp) - 1:
            dists.append(np.linalg.norm(q - q1))
    assert dists[-1] < 1e-3
    d = np.array(dists)
    d = d[d > 1e-9]
    assert np.all(np.diff(d) < 0)
