import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridplanner.geometry import DistanceWitness
from hybridplanner.kinematics import Pose, ellipsoid_from_jacobian, jacobian, rpy_matrix
from hybridplanner.vpf_local import (FieldParams, RankDeficiencyError, adjust_toward_mobility,
                                     aggregate_repulsive, attractive_velocity,
                                     baseline_field_params, detect_trap, distance_sigmoid,
                                     escape_velocity, mobility, mobility_ratio,
                                     parallel_gain, pose_error, pose_from_error,
                                     projected_major_axis, repulsive_link_velocity)

from conftest import random_config

FP = FieldParams()
BOUND = math.sqrt((FP.K_rep0 + FP.K_rep1) ** 2 + FP.K_rep2 ** 2)


def witness(d):
    d = np.asarray(d, dtype=float)
    return DistanceWitness(1, 1, np.zeros(3), d, d, float(np.linalg.norm(d)))


def test_link_weights_are_renormalised():
    assert FP.link_weights.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(FP.link_weights, np.array([0, 0.1, 0.2, 0.4, 0.6, 0.8, 1]) / 3.1)


def test_pose_error_zero_for_equal_poses():
    P = Pose.from_xyz_rpy([0.1, 0.2, 0.3], [0.3, -0.2, 0.1])
    np.testing.assert_allclose(pose_error(P, P), 0.0, atol=1e-15)


def test_pose_error_translation_drives_toward_goal():
    cur = Pose.from_xyz_rpy([0, 0, 0], [0.4, 0.1, -0.3])
    goal = cur @ Pose(np.eye(3), np.array([0.1, 0, 0]))
    e = pose_error(cur, goal)
    np.testing.assert_allclose(e, [-0.1, 0, 0, 0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(attractive_velocity(e, 1.5)[:3], [0.15, 0, 0], atol=1e-12)


def test_pose_error_roundtrip(rng):
    for _ in range(100):
        cur = Pose.from_xyz_rpy(rng.normal(size=3), rng.uniform(-1.2, 1.2, 3))
        goal = Pose.from_xyz_rpy(rng.normal(size=3), rng.uniform(-1.2, 1.2, 3))
        assert pose_from_error(cur, pose_error(cur, goal)).is_close(goal, 1e-9)


def test_attractive_law():
    np.testing.assert_allclose(attractive_velocity([0.1, 0, 0, 0, 0, 0], 1.5), [-0.15, 0, 0, 0, 0, 0])


def test_repulsion_at_d_min_and_d_max():
    u = np.array([0.0, 0.0, 1.0])
    v = repulsive_link_velocity(witness(-0.01 * u), np.zeros(3), FP)
    assert np.linalg.norm(v) == pytest.approx(0.4950, abs=5e-5)
    np.testing.assert_allclose(v / np.linalg.norm(v), u)
    v = repulsive_link_velocity(witness(-0.2 * u), np.zeros(3), FP)
    assert np.linalg.norm(v) == pytest.approx(0.02371, abs=5e-6)


def test_parallel_gain_ordering():
    approaching = parallel_gain(0.3, FP)
    static = parallel_gain(0.0, FP)
    receding = parallel_gain(-0.3, FP)
    assert approaching == pytest.approx(0.5 + 0.2 * math.tanh(0.3), abs=1e-12)
    assert receding == pytest.approx(0.5 - 0.2 * math.tanh(0.3), abs=1e-12)
    assert approaching > static > receding


def test_approach_sign_convention():
    # obstacle at +x of the link, moving toward it along -x
    w = witness([0.1, 0, 0])
    toward = repulsive_link_velocity(w, np.array([-0.3, 0, 0]), FP)
    away = repulsive_link_velocity(w, np.array([0.3, 0, 0]), FP)
    assert np.linalg.norm(toward) > np.linalg.norm(away)
    np.testing.assert_allclose(toward[1:], 0.0, atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.floats(0.0, 0.5))
def test_repulsion_is_bounded(d, v_obs, scale):
    d = np.array(d)
    if np.linalg.norm(d) > 0:
        d = d / np.linalg.norm(d) * scale
    v = repulsive_link_velocity(witness(d), np.array(v_obs), FP, np.array([1.0, 0, 0]))
    assert np.linalg.norm(v) <= BOUND + 1e-12


def test_parallel_term_decreases_with_distance():
    s = [distance_sigmoid(d, FP) for d in np.linspace(0.0, 0.5, 200)]
    assert np.all(np.diff(s) <= 0)
    assert s[0] > s[-1]


def test_contact_uses_fallback_direction():
    v = repulsive_link_velocity(witness([0, 0, 0]), np.zeros(3), FP, np.array([0, 2.0, 0]))
    np.testing.assert_allclose(v / np.linalg.norm(v), [0, 1, 0])


def test_aggregate():
    R = rpy_matrix(0.2, -0.4, 1.0)
    V = np.zeros((7, 3))
    assert np.all(aggregate_repulsive(V, R, FP.link_weights) == 0)
    V[6] = [0.1, -0.2, 0.3]
    w = np.zeros(7)
    w[6] = 1.0
    np.testing.assert_allclose(aggregate_repulsive(V, np.eye(3), w), [0.1, -0.2, 0.3, 0, 0, 0])
    out = aggregate_repulsive(np.random.default_rng(0).normal(size=(7, 3)), R, FP.link_weights)
    assert np.all(out[3:] == 0)


def test_mobility_examples():
    E = np.diag([2.0, 1.0, 1.0])
    assert mobility(E, np.array([1.0, 0, 0])) == pytest.approx(2.0)
    assert mobility(E, np.array([1.0, 1.0, 0]) / math.sqrt(2)) == pytest.approx(1.2649, abs=1e-4)
    assert mobility(E, np.array([3.0, 3.0, 0])) == pytest.approx(mobility(E, np.array([1.0, 1.0, 0])))
    with pytest.raises(RankDeficiencyError):
        mobility(np.diag([1.0, 1.0, 0.0]), np.array([1.0, 0, 0]))


def test_mobility_ratio_bounded(rng):
    for _ in range(1000):
        E = rng.normal(size=(3, 3))
        assert 0 < mobility_ratio(E, rng.normal(size=3)) <= 1.0


def test_adjust_rotates_onto_major_axis():
    E = np.diag([0.2, 1.0, 0.1])
    v = np.array([1.0, 0, 0, 0.3, 0, 0])
    out, phi = adjust_toward_mobility(E, v, np.array([0, -1.0, 0]), FP)
    assert phi == pytest.approx(math.pi / 2)
    np.testing.assert_allclose(out[:3], [0, 1, 0], atol=1e-12)
    assert out[3] == 0.3


def test_adjust_gate_and_norm(rng):
    E = np.diag([1.0, 0.95, 0.9])
    v = np.array([0.0, 0.0, 1.0])
    out, phi = adjust_toward_mobility(E, v, np.zeros(3), FP)
    assert phi == 0.0 and np.array_equal(out, v)
    for _ in range(100):
        E = rng.normal(size=(3, 3))
        v = rng.normal(size=6)
        out, _ = adjust_toward_mobility(E, v, rng.normal(size=3), FP)
        assert np.linalg.norm(out[:3]) == pytest.approx(np.linalg.norm(v[:3]))


def test_adjust_never_reduces_mobility_without_penalty(rng):
    for _ in range(200):
        E = rng.normal(size=(3, 3))
        v = rng.normal(size=3)
        out, _ = adjust_toward_mobility(E, v, -v, FP)
        if np.linalg.norm(out) > 0 and out @ -v <= 0:
            assert mobility(E, out) >= mobility(E, v) - 1e-12


def test_detect_trap():
    a = np.array([0.1, 0.2, -0.1, 0, 0, 0])
    assert detect_trap(a, -a, FP)
    assert not detect_trap(a, np.zeros(6), FP)
    assert not detect_trap(a, -0.5 * a, FP)


def test_projected_axis_example():
    rho = projected_major_axis(np.diag([2.0, 1.0, 0.5]), np.array([0, 0, 1.0]))
    np.testing.assert_allclose(np.abs(rho), [2, 0, 0], atol=1e-12)


def test_escape_perpendicular_and_speed(arm, rng):
    for _ in range(50):
        q = random_config(arm, rng)
        J = jacobian(arm, q)
        E_t = ellipsoid_from_jacobian(J).translational_block
        v_att = rng.normal(size=6)
        v, ok = escape_velocity(E_t, v_att, q, q + rng.normal(scale=0.1, size=7), J, 0.01, 0.1)
        assert ok
        assert abs(v[:3] @ v_att[:3]) / np.linalg.norm(v_att[:3]) < 1e-9
        assert np.linalg.norm(v) == pytest.approx(0.1)
        assert np.all(v[3:] == 0)


def test_escape_picks_side_toward_next_config(arm, rng):
    q = random_config(arm, rng)
    J = jacobian(arm, q)
    E_t = ellipsoid_from_jacobian(J).translational_block
    v_att = np.array([0, 0, 1.0, 0, 0, 0])
    v, _ = escape_velocity(E_t, v_att, q, q, J, 0.01, 0.1)
    Jp = np.linalg.pinv(J)
    target = q + 0.01 * Jp @ (-v)  # the opposite side's step becomes the target
    v2, _ = escape_velocity(E_t, v_att, q, target, J, 0.01, 0.1)
    np.testing.assert_allclose(v2, -v)


def test_escape_degenerate_projection():
    v, ok = escape_velocity(np.zeros((3, 3)), np.array([1.0, 0, 0, 0, 0, 0]), np.zeros(2),
                            np.zeros(2), np.zeros((6, 2)), 0.01, 0.1)
    assert not ok and np.all(v == 0)


def test_param_validation():
    with pytest.raises(ValueError):
        FieldParams(K_rep0=0.1, K_rep1=0.2)
    with pytest.raises(ValueError):
        FieldParams(d_min=0.3, d_max=0.2)
    with pytest.raises(ValueError):
        FieldParams(zeta=0.0)
    base = baseline_field_params()
    assert base.K_rep1 == 0 and not base.mobility_adjustment and not base.trap_escape
