"""Serial-chain revolute robot model: forward kinematics, Jacobians and
manipulability measures.

All task-space velocities are 6-vectors ``[vx, vy, vz, wx, wy, wz]``
expressed in the end-effector frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

SINGULAR_TOL = 1e-12


class DegenerateConfigurationError(ValueError):
    """Raised when a quantity is undefined at a singular configuration."""


# --------------------------------------------------------------------------
# Rigid transforms
# --------------------------------------------------------------------------


def skew(w):
    """Cross-product matrix of a 3-vector (or a stack of them)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def axis_angle(axis, angle):
    """Rotation matrices about a unit ``axis`` for an array of angles."""
    angle = np.asarray(angle, dtype=float)
    K = skew(axis)
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def rpy_matrix(roll, pitch, yaw):
    """Cardan XYZ rotation ``Rx(roll) @ Ry(pitch) @ Rz(yaw)``."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rx @ Ry @ Rz


def matrix_rpy(R, gimbal_tol=1e-6):
    """Inverse of :func:`rpy_matrix`.

    Near ``|pitch| = pi/2`` roll is set to zero and the combined rotation
    about the (aligned) x/z axes is reported as yaw.
    """
    sp = float(np.clip(R[0, 2], -1.0, 1.0))
    pitch = np.arcsin(sp)
    if abs(abs(pitch) - np.pi / 2) < gimbal_tol:
        roll = 0.0
        yaw = np.arctan2(R[1, 0], R[1, 1])
        return np.array([roll, pitch, yaw])
    roll = np.arctan2(-R[1, 2], R[2, 2])
    yaw = np.arctan2(-R[0, 1], R[0, 0])
    return np.array([roll, pitch, yaw])


@dataclass(frozen=True)
class Pose:
    """Element of SE(3): ``x_world = rotation @ x_local + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3].copy(), T[:3, 3].copy())

    @classmethod
    def from_xyz_rpy(cls, xyz, rpy):
        return cls(rpy_matrix(*rpy), np.asarray(xyz, dtype=float))

    @property
    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other):
        if isinstance(other, Pose):
            return Pose(self.rotation @ other.rotation,
                        self.rotation @ other.translation + self.translation)
        return NotImplemented

    def inverse(self):
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def apply(self, points):
        """Transform points given in this frame into the parent frame."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def is_close(self, other, tol=1e-9):
        return (np.allclose(self.rotation, other.rotation, atol=tol)
                and np.allclose(self.translation, other.translation, atol=tol))


def _homogeneous(R, t):
    T = np.zeros(R.shape[:-2] + (4, 4))
    T[..., :3, :3] = R
    T[..., :3, 3] = t
    T[..., 3, 3] = 1.0
    return T


# --------------------------------------------------------------------------
# Robot model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Joint:
    axis: np.ndarray
    origin: Pose


@dataclass(frozen=True)
class Capsule:
    """Segment ``a``-``b`` (link frame) swept by a sphere of ``radius``."""

    link: int
    a: np.ndarray
    b: np.ndarray
    radius: float


@dataclass(frozen=True)
class RobotModel:
    """Immutable serial chain of revolute joints.

    Link ``i`` (1..n) is the body moved by joint ``i``; link 0 is the fixed
    base.  Link ``n`` composed with ``tool`` is the end-effector frame.
    ``task_axes`` selects the Jacobian rows used by manipulability measures
    (all six for a spatial arm, ``[0, 1]`` for a planar one).
    """

    joints: tuple
    capsules: tuple
    q_min: np.ndarray
    q_max: np.ndarray
    qd_max: np.ndarray
    qdd_max: np.ndarray
    base: Pose = field(default_factory=Pose)
    tool: Pose = field(default_factory=Pose)
    task_axes: tuple = (0, 1, 2, 3, 4, 5)
    name: str = "robot"

    def __post_init__(self):
        n = len(self.joints)
        if n < 2:
            raise ValueError("a robot model needs at least two joints")
        for arr in (self.q_min, self.q_max, self.qd_max, self.qdd_max):
            if np.shape(arr) != (n,):
                raise ValueError("limit vectors must have one entry per joint")
        if np.any(self.q_min >= self.q_max):
            raise ValueError("joint limits require q_min < q_max")
        if np.any(self.qd_max <= 0) or np.any(self.qdd_max <= 0):
            raise ValueError("velocity and acceleration limits must be positive")
        for cap in self.capsules:
            if cap.radius <= 0:
                raise ValueError("capsule radii must be positive")
            if not 1 <= cap.link <= n:
                raise ValueError(f"capsule attached to unknown link {cap.link}")
        # cached arrays for the vectorised kinematics
        object.__setattr__(self, "_origins", np.stack([j.origin.matrix for j in self.joints]))
        object.__setattr__(self, "_axes", np.stack([j.axis for j in self.joints]))
        object.__setattr__(self, "_skews", skew(self._axes))
        object.__setattr__(self, "_skews2", self._skews @ self._skews)
        object.__setattr__(self, "_cap_link", np.array([c.link for c in self.capsules], dtype=int))
        object.__setattr__(self, "_cap_a", np.array([c.a for c in self.capsules]).reshape(-1, 3))
        object.__setattr__(self, "_cap_b", np.array([c.b for c in self.capsules]).reshape(-1, 3))
        object.__setattr__(self, "_cap_r", np.array([c.radius for c in self.capsules]))

    @property
    def n(self):
        return len(self.joints)

    def check_config(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ValueError(f"expected {self.n} joint angles, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("joint angles must be finite")
        return q

    def within_limits(self, q, tol=0.0):
        q = np.asarray(q)
        return bool(np.all(q >= self.q_min - tol) and np.all(q <= self.q_max + tol))

    def with_base(self, base):
        """Copy of the model mounted at a different base pose."""
        return RobotModel(self.joints, self.capsules, self.q_min, self.q_max,
                          self.qd_max, self.qdd_max, base, self.tool,
                          self.task_axes, self.name)


def model_from_dict(doc):
    """Build a :class:`RobotModel` from the JSON model document.

    Angles in the document (origin roll-pitch-yaw and all limits) are in
    degrees.
    """
    joints = []
    for j in doc["joints"]:
        axis = np.asarray(j["axis"], dtype=float)
        axis = axis / np.linalg.norm(axis)
        origin = j.get("origin", {})
        joints.append(Joint(axis, Pose.from_xyz_rpy(origin.get("xyz", [0, 0, 0]),
                                                     np.radians(origin.get("rpy", [0, 0, 0])))))

    def _pose(key):
        p = doc.get(key)
        if p is None:
            return Pose()
        return Pose.from_xyz_rpy(p.get("xyz", [0, 0, 0]), np.radians(p.get("rpy", [0, 0, 0])))

    capsules = tuple(Capsule(int(c["link"]), np.asarray(c["a"], dtype=float),
                             np.asarray(c["b"], dtype=float), float(c["radius"]))
                     for c in doc.get("capsules", []))
    lim = doc["limits"]
    pos = np.radians(np.asarray(lim["position_deg"], dtype=float))
    n = len(joints)
    vel = np.radians(np.broadcast_to(np.asarray(lim["velocity_deg_s"], dtype=float), (n,)))
    acc = np.radians(np.broadcast_to(np.asarray(lim["acceleration_deg_s2"], dtype=float), (n,)))
    return RobotModel(
        joints=tuple(joints),
        capsules=capsules,
        q_min=pos[:, 0].copy(),
        q_max=pos[:, 1].copy(),
        qd_max=vel.copy(),
        qdd_max=acc.copy(),
        base=_pose("base"),
        tool=_pose("tool"),
        task_axes=tuple(doc.get("task_axes", (0, 1, 2, 3, 4, 5))),
        name=doc.get("name", "robot"),
    )


def load_model(path=None):
    """Load a robot model file; ``None`` or ``"bundled"`` gives the bundled
    generic 7-DOF arm."""
    if path is None or path == "bundled":
        text = resources.files("hybridplanner.data").joinpath("generic7dof.json").read_text()
    else:
        text = Path(path).read_text()
    return model_from_dict(json.loads(text))


# --------------------------------------------------------------------------
# Forward kinematics and Jacobians
# --------------------------------------------------------------------------


def link_transforms(model, Q):
    """Homogeneous transforms of links ``0..n`` in the base frame.

    ``Q`` has shape ``(n,)`` or ``(B, n)``; the result has shape
    ``(n + 1, 4, 4)`` or ``(B, n + 1, 4, 4)``.  Entry ``n`` includes the
    tool offset, so it is the end-effector frame.
    """
    Q = np.asarray(Q, dtype=float)
    single = Q.ndim == 1
    Q = np.atleast_2d(Q)
    B, n = Q.shape
    # all joint rotations at once (Rodrigues), then chain
    s = np.sin(Q)[..., None, None]
    c = np.cos(Q)[..., None, None]
    rot = np.eye(3) + s * model._skews + (1.0 - c) * model._skews2
    local = np.empty((B, n, 4, 4))
    local[:] = model._origins
    local[..., :3, :3] = model._origins[:, :3, :3] @ rot
    out = np.empty((B, n + 1, 4, 4))
    T = np.broadcast_to(model.base.matrix, (B, 4, 4))
    out[:, 0] = T
    for i in range(n):
        T = T @ local[:, i]
        out[:, i + 1] = T
    out[:, n] = out[:, n] @ model.tool.matrix
    return out[0] if single else out


def forward_kinematics(model, q, link_index=None):
    """Pose of link ``link_index`` (default: end effector, index ``n``)."""
    q = model.check_config(q)
    if link_index is None:
        link_index = model.n
    if not 0 <= link_index <= model.n:
        raise IndexError(f"link index {link_index} outside 0..{model.n}")
    return Pose.from_matrix(link_transforms(model, q)[link_index])


def jacobian_world(model, Q):
    """Jacobian with linear and angular rows expressed in the base frame.

    Returns ``(J, T_ee)`` with ``J`` of shape ``(..., 6, n)``.
    """
    Ts = link_transforms(model, Q)
    n = model.n
    # joint i rotates about its axis located at (link i-1 frame @ origin_i)
    pre = Ts[..., :n, :, :] @ model._origins
    R = pre[..., :3, :3]
    p = pre[..., :3, 3]
    z = np.einsum("...ij,...j->...i", R, model._axes)
    T_ee = Ts[..., n, :, :]
    p_ee = T_ee[..., :3, 3]
    lin = np.cross(z, p_ee[..., None, :] - p)
    J = np.concatenate([np.swapaxes(lin, -1, -2), np.swapaxes(z, -1, -2)], axis=-2)
    return J, T_ee


def jacobian(model, q):
    """6 x n Jacobian expressed in the end-effector frame."""
    q = model.check_config(q)
    return jacobian_batch(model, q)


def jacobian_batch(model, Q):
    """End-effector-frame Jacobians for one or many configurations."""
    J, T_ee = jacobian_world(model, Q)
    Rt = np.swapaxes(T_ee[..., :3, :3], -1, -2)
    out = np.empty_like(J)
    out[..., :3, :] = Rt @ J[..., :3, :]
    out[..., 3:, :] = Rt @ J[..., 3:, :]
    return out


def _task_rows(model, J):
    return J[..., list(model.task_axes), :]


def yoshikawa_from_jacobian(J):
    """``sqrt(det(J J^T))`` as the product of singular values; exactly zero
    when the smallest one is at most ``SINGULAR_TOL``."""
    J = np.asarray(J, dtype=float)
    if J.shape[-2] > J.shape[-1]:
        return np.zeros(J.shape[:-2]) if J.ndim > 2 else 0.0
    s = np.linalg.svd(J, compute_uv=False)
    return np.where(s[..., -1] <= SINGULAR_TOL, 0.0, np.prod(s, axis=-1))


def yoshikawa(model, q):
    q = model.check_config(q)
    return float(yoshikawa_from_jacobian(_task_rows(model, jacobian_batch(model, q))))


def manipulability_gradient(model, q, h=1e-6):
    """Central finite-difference gradient of the Yoshikawa measure."""
    q = model.check_config(q)
    mu, grad = manipulability_and_gradient(model, q, h)
    if mu <= 0.0:
        raise DegenerateConfigurationError("manipulability is zero; gradient direction undefined")
    return grad


def manipulability_and_gradient(model, q, h=1e-6):
    """``(mu(q), grad mu(q))`` from one batched Jacobian evaluation."""
    n = model.n
    Q = np.empty((2 * n + 1, n))
    Q[:] = q
    idx = np.arange(n)
    Q[1 + idx, idx] += h
    Q[1 + n + idx, idx] -= h
    mus = yoshikawa_from_jacobian(_task_rows(model, jacobian_batch(model, Q)))
    grad = (mus[1:n + 1] - mus[n + 1:]) / (2 * h)
    return float(mus[0]), grad


# --------------------------------------------------------------------------
# Manipulability ellipsoid
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipsoidBasis:
    """SVD basis of a Jacobian: ``E = axes[:, :k] * magnitudes``.

    ``translational_block`` is ``U_t Sigma_t`` of the translational rows,
    so that ``E_t E_t^T = J_t J_t^T``.
    """

    axes: np.ndarray
    magnitudes: np.ndarray
    right: np.ndarray
    translational_block: np.ndarray

    @property
    def matrix(self):
        k = len(self.magnitudes)
        return self.axes[:, :k] * self.magnitudes

    @property
    def major_translational_axis(self):
        """Largest semiaxis vector of the translational ellipsoid."""
        return self.translational_block[:, 0]


def _signed_svd(J):
    U, s, Vt = np.linalg.svd(J)
    k = len(s)
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[idx, np.arange(U.shape[1])] < 0, -1.0, 1.0)
    U = U * signs
    Vt = Vt.copy()
    Vt[:k] *= signs[:k, None]
    return U, s, Vt


def ellipsoid_from_jacobian(J, translational_rows=3):
    """Deterministic SVD basis of an arbitrary Jacobian matrix.

    Each column of ``U`` is flipped so its largest-magnitude entry is
    nonnegative.
    """
    J = np.asarray(J, dtype=float)
    U, s, Vt = _signed_svd(J)
    rows = min(translational_rows, J.shape[0])
    Ut, st, _ = _signed_svd(J[:rows])
    Et = np.zeros((rows, rows))
    kt = len(st)
    Et[:, :kt] = Ut[:, :kt] * st
    return EllipsoidBasis(U, s, Vt, Et)


def ellipsoid(model, q):
    q = model.check_config(q)
    J = jacobian_batch(model, q)
    return ellipsoid_from_jacobian(_task_rows(model, J))
