import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridplanner.geometry import (Box, MotionProfile, Obstacle, Sphere, WorldState,
                                    capsule_distance, clearance_batch, min_distance,
                                    obstacle_velocity, segment_box_closest, step_world)
from hybridplanner.kinematics import Pose, rpy_matrix

from conftest import random_config


def sphere(id_, center, radius, **motion):
    return Obstacle(id_, Sphere(radius), Pose(np.eye(3), np.asarray(center, float)),
                    MotionProfile(**motion) if motion else MotionProfile())


def box(id_, center, half, rpy=(0, 0, 0)):
    return Obstacle(id_, Box(np.asarray(half, float)),
                    Pose(rpy_matrix(*rpy), np.asarray(center, float)))


def brute_segment_box(a, b, half, n=20001):
    t = np.linspace(0, 1, n)[:, None]
    p = a + t * (b - a)
    q = np.clip(p, -half, half)
    return np.min(np.linalg.norm(p - q, axis=1))


def test_capsule_sphere_closed_form():
    obs = sphere(1, [0.0, 0.5, 0.0], 0.1)
    w = capsule_distance([[-1, 0, 0]], [[1, 0, 0]], 0.05, obs)
    assert w.distance == pytest.approx(0.5 - 0.1 - 0.05, abs=1e-12)
    np.testing.assert_allclose(w.d, [0, 0.35, 0], atol=1e-12)
    np.testing.assert_allclose(w.point_on_link, [0, 0.05, 0], atol=1e-12)


def test_capsule_sphere_endpoint_region():
    obs = sphere(1, [2.0, 0.0, 0.0], 0.1)
    w = capsule_distance([[-1, 0, 0]], [[1, 0, 0]], 0.05, obs)
    assert w.distance == pytest.approx(1.0 - 0.15, abs=1e-12)


def test_penetration_reports_zero():
    obs = sphere(1, [0.0, 0.1, 0.0], 0.1)
    w = capsule_distance([[-1, 0, 0]], [[1, 0, 0]], 0.05, obs)
    assert w.distance == 0.0
    np.testing.assert_allclose(w.point_on_link, w.point_on_obstacle)


def test_capsule_box_face():
    obs = box(1, [0, 0, 0], [0.1, 0.2, 0.3])
    w = capsule_distance([[0.5, -1, 0]], [[0.5, 1, 0]], 0.05, obs)
    assert w.distance == pytest.approx(0.5 - 0.1 - 0.05, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=6, max_size=6),
       st.lists(st.floats(0.05, 0.4), min_size=3, max_size=3))
def test_segment_box_matches_sampling(ends, half):
    a = np.array(ends[:3])
    b = np.array(ends[3:])
    half = np.array(half)
    _, p, q, dist = segment_box_closest(a[None], b[None], half)
    ref = brute_segment_box(a, b, half)
    assert dist[0] <= ref + 1e-12
    assert dist[0] >= ref - 1e-3 * max(np.linalg.norm(b - a), 1e-9)
    assert np.linalg.norm(p[0] - q[0]) == pytest.approx(dist[0], abs=1e-12)


def test_rotated_box_distance():
    obs = box(1, [1.0, 0, 0], [0.1, 0.1, 0.1], rpy=(0, 0, math.pi / 4))
    # a point capsule on the x axis faces the box edge at distance 0.1*sqrt(2)
    w = capsule_distance([[0.0, 0, 0]], [[0.0, 0, 0]], 0.01, obs)
    assert w.distance == pytest.approx(1.0 - 0.1 * math.sqrt(2) - 0.01, abs=1e-9)


def test_min_distance_empty_world(arm):
    assert min_distance(arm, np.zeros(7), WorldState(())) == []


def test_min_distance_tie_breaks_by_lower_id(planar):
    a = sphere(2, [0.5, 0.3, 0], 0.05)
    b = sphere(1, [0.5, -0.3, 0], 0.05)
    ws = min_distance(planar, np.zeros(2), WorldState((a, b)))
    assert ws[0].obstacle_id == 1


def test_witness_vector_is_consistent(arm, rng):
    world = WorldState((sphere(1, [0.5, 0.2, 0.6], 0.1), box(2, [-0.4, 0.3, 0.5], [0.1, 0.2, 0.1])))
    for _ in range(10):
        for w in min_distance(arm, random_config(arm, rng), world):
            assert w.distance == pytest.approx(np.linalg.norm(w.d), abs=1e-12)
            np.testing.assert_allclose(w.point_on_obstacle - w.point_on_link, w.d, atol=1e-12)


def test_clearance_batch_matches_min_distance(arm, rng):
    world = WorldState((sphere(1, [0.5, 0.2, 0.6], 0.1), box(2, [-0.4, 0.3, 0.5], [0.1, 0.2, 0.1])))
    Q = np.array([random_config(arm, rng) for _ in range(10)])
    batch = clearance_batch(arm, Q, world.active())
    for q, c in zip(Q, batch):
        assert c == pytest.approx(min(w.distance for w in min_distance(arm, q, world)), abs=1e-12)


def test_sinusoid_peak_speed_equals_speed():
    m = MotionProfile("sinusoid", np.array([0, 0, 1.0]), amplitude=0.15, speed=0.3)
    t = np.linspace(0, 10, 100001)
    z = np.array([m.displacement(x)[2] for x in t])
    assert np.max(np.abs(np.diff(z) / np.diff(t))) == pytest.approx(0.3, rel=1e-3)
    assert np.max(np.abs(z)) == pytest.approx(0.15, rel=1e-6)


def test_bounce_constant_speed_and_bounds():
    m = MotionProfile("bounce", np.array([1.0, 0, 0]), amplitude=0.1, speed=0.2)
    t = np.linspace(0, 5, 5001)
    x = np.array([m.displacement(s)[0] for s in t])
    assert np.all(np.abs(x) <= 0.1 + 1e-12)
    v = np.abs(np.diff(x) / np.diff(t))
    assert np.median(v) == pytest.approx(0.2, rel=1e-6)


def test_random_waypoint_is_deterministic():
    m = MotionProfile("random-waypoint", amplitude=0.2, speed=0.1, seed=7)
    a = [m.displacement(t) for t in (0.0, 1.3, 7.7)]
    b = [m.displacement(t) for t in (0.0, 1.3, 7.7)]
    np.testing.assert_array_equal(a, b)
    assert all(np.all(np.abs(x) <= 0.2) for x in a)


def test_obstacle_velocity_backward_difference():
    obs = sphere(1, [0, 0, 0], 0.1, style="sinusoid", axis=np.array([1.0, 0, 0]),
                 amplitude=0.1, speed=0.1)
    dt = 0.01
    w = step_world(WorldState((obs,), 1.0), dt)
    expected = (obs.pose_at(1.0 + dt).translation - obs.pose_at(1.0).translation) / dt
    np.testing.assert_allclose(obstacle_velocity(w, 1, dt), expected)


def test_spawn_time_hides_obstacle():
    obs = Obstacle(1, Sphere(0.1), Pose(), spawn_time=0.5)
    assert WorldState((obs,), 0.4).active() == []
    assert len(WorldState((obs,), 0.5).active()) == 1


def test_invalid_shapes_rejected():
    with pytest.raises(ValueError):
        Sphere(0.0)
    with pytest.raises(ValueError):
        Box(np.array([0.1, -0.1, 0.1]))
    with pytest.raises(ValueError):
        MotionProfile("orbit")
    with pytest.raises(ValueError):
        WorldState((sphere(1, [0, 0, 0], 0.1), sphere(1, [1, 0, 0], 0.1)))
