import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridplanner.kinematics import (DegenerateConfigurationError, Pose, ellipsoid,
                                      ellipsoid_from_jacobian, forward_kinematics, jacobian,
                                      link_transforms, manipulability_gradient, matrix_rpy,
                                      rpy_matrix, yoshikawa)

from conftest import L1, L2, random_config


def fd_jacobian(model, q, h=1e-6):
    """Central differences of the end-effector pose, in the EE frame."""
    T0 = forward_kinematics(model, q)
    J = np.zeros((6, model.n))
    for i in range(model.n):
        dq = np.zeros(model.n)
        dq[i] = h
        Tp = forward_kinematics(model, q + dq)
        Tm = forward_kinematics(model, q - dq)
        J[:3, i] = T0.rotation.T @ (Tp.translation - Tm.translation) / (2 * h)
        dR = (Tp.rotation - Tm.rotation) / (2 * h)
        W = T0.rotation.T @ dR
        J[3:, i] = [W[2, 1], W[0, 2], W[1, 0]]
    return J


def test_bundled_model_shape(arm):
    assert arm.n == 7
    assert np.all(arm.q_min < arm.q_max)
    assert len(arm.capsules) == 7


def test_zero_config_planar(planar):
    T = forward_kinematics(planar, np.zeros(2))
    np.testing.assert_allclose(T.translation, [L1 + L2, 0, 0], atol=1e-12)


def test_planar_fk_closed_form(planar, rng):
    for _ in range(20):
        q = rng.uniform(-math.pi, math.pi, 2)
        p = forward_kinematics(planar, q).translation
        x = L1 * math.cos(q[0]) + L2 * math.cos(q[0] + q[1])
        y = L1 * math.sin(q[0]) + L2 * math.sin(q[0] + q[1])
        np.testing.assert_allclose(p, [x, y, 0], atol=1e-12)


def test_jacobian_matches_finite_differences(arm, rng):
    for _ in range(20):
        q = random_config(arm, rng)
        np.testing.assert_allclose(jacobian(arm, q), fd_jacobian(arm, q), atol=1e-6)


def test_planar_manipulability_closed_form(planar, rng):
    for _ in range(50):
        q = rng.uniform(-math.pi, math.pi, 2)
        assert yoshikawa(planar, q) == pytest.approx(L1 * L2 * abs(math.sin(q[1])), abs=1e-9)
        g = manipulability_gradient(planar, q)
        expected = [0.0, L1 * L2 * math.cos(q[1]) * math.copysign(1.0, math.sin(q[1]))]
        np.testing.assert_allclose(g, expected, atol=1e-9)


def test_gradient_undefined_at_singularity(planar):
    with pytest.raises(DegenerateConfigurationError):
        manipulability_gradient(planar, np.array([0.3, 0.0]))


def test_manipulability_is_nonnegative(arm, rng):
    for _ in range(20):
        assert yoshikawa(arm, random_config(arm, rng)) >= 0.0


def test_fk_rejects_bad_shape(arm):
    with pytest.raises(ValueError):
        forward_kinematics(arm, np.zeros(3))


def test_link_transforms_batch_matches_single(arm, rng):
    Q = np.array([random_config(arm, rng) for _ in range(5)])
    batch = link_transforms(arm, Q)
    for q, T in zip(Q, batch):
        np.testing.assert_allclose(T, link_transforms(arm, q), atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.tuples(*[st.floats(-1.5, 1.5)] * 3))
def test_rpy_roundtrip(rpy):
    R = rpy_matrix(*rpy)
    np.testing.assert_allclose(rpy_matrix(*matrix_rpy(R)), R, atol=1e-9)


def test_pose_inverse_and_compose(rng):
    P = Pose.from_xyz_rpy(rng.normal(size=3), rng.uniform(-1, 1, 3))
    assert (P @ P.inverse()).is_close(Pose())


def test_ellipsoid_reconstructs_jjt(arm, rng):
    q = random_config(arm, rng)
    J = jacobian(arm, q)
    E = ellipsoid_from_jacobian(J)
    np.testing.assert_allclose(E.matrix @ E.matrix.T, J @ J.T, atol=1e-10)
    Et = E.translational_block
    np.testing.assert_allclose(Et @ Et.T, J[:3] @ J[:3].T, atol=1e-10)


def test_ellipsoid_sign_convention(arm, rng):
    E = ellipsoid(arm, random_config(arm, rng))
    idx = np.argmax(np.abs(E.axes), axis=0)
    assert np.all(E.axes[idx, np.arange(E.axes.shape[1])] >= 0)
