"""Velocity potential field in task space: attraction, obstacle-velocity
aware repulsion, mobility-directed adjustment and trap escape.

Spatial velocities are 6-vectors ``[v, w]`` in the end-effector frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import Pose, matrix_rpy, skew

GRID_POINTS = 65


class RankDeficiencyError(ValueError):
    """The translational ellipsoid is degenerate."""


def _default_weights():
    return np.array([0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0]) / 7.0


@dataclass(frozen=True)
class FieldParams:
    """Field gains.  Link weights are rescaled to sum to one on
    construction (ratios preserved)."""

    K_att: float = 1.5
    K_rep0: float = 0.5
    K_rep1: float = 0.2
    K_rep2: float = 0.1
    d_min: float = 0.01
    d_max: float = 0.2
    alpha: float = 200.0
    beta: float = 12.5
    gamma1: float = 1.0
    gamma2: float = 1.0
    link_weights: np.ndarray = field(default_factory=_default_weights)
    zeta: float = 0.7
    omega1: float = 1.0
    omega2: float = 1.0
    v_def: float = 0.1
    trap_ratio: float = 0.1
    trap_angle: float = math.radians(170.0)
    mobility_adjustment: bool = True
    trap_escape: bool = True
    escape_hold: float = 0.5

    def __post_init__(self):
        if self.K_rep1 != 0.0 and not self.K_rep0 > self.K_rep1 > 0:
            raise ValueError("repulsive gains need K_rep0 > K_rep1 > 0")
        if self.K_rep0 <= 0:
            raise ValueError("K_rep0 must be positive")
        if not 0 < self.d_min < self.d_max:
            raise ValueError("distances need 0 < d_min < d_max")
        if not 0 < self.zeta <= 1:
            raise ValueError("zeta must lie in (0, 1]")
        w = np.asarray(self.link_weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("link weights must be nonnegative and not all zero")
        object.__setattr__(self, "link_weights", w / w.sum())


def baseline_field_params(**overrides):
    """Constant-gain repulsion without mobility adjustment or trap escape
    (the plain velocity potential field)."""
    base = dict(K_att=1.5, K_rep0=0.5, K_rep1=0.0, K_rep2=0.0, d_max=0.2,
                mobility_adjustment=False, trap_escape=False)
    base.update(overrides)
    return FieldParams(**base)


# --------------------------------------------------------------------------
# Attraction
# --------------------------------------------------------------------------


def pose_error(current, goal):
    """Error 6-vector between two poses, in the current end-effector frame.

    With ``T = current^-1 goal`` the error is ``-[t(T), rpy(R(T))]``, so the
    attractive law ``-K_att e`` moves toward the goal.
    """
    rel = current.inverse() @ goal
    return -np.concatenate([rel.translation, matrix_rpy(rel.rotation)])


def pose_from_error(current, e):
    """Inverse of :func:`pose_error` away from gimbal lock."""
    from .kinematics import rpy_matrix

    rel = Pose(rpy_matrix(*(-e[3:])), -np.asarray(e[:3]))
    return current @ rel


def attractive_velocity(e, K_att):
    return -K_att * np.asarray(e, dtype=float)


# --------------------------------------------------------------------------
# Repulsion
# --------------------------------------------------------------------------


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.zeros_like(v)


def parallel_gain(approach_rate, params):
    """``K_rep0 + K_rep1 tanh(gamma1 a)``; ``a > 0`` means approaching."""
    return params.K_rep0 + params.K_rep1 * math.tanh(params.gamma1 * approach_rate)


def distance_sigmoid(dist, params):
    """Distance shaping ``1 / (1 + exp(alpha d_max (|d| - beta d_min)))``."""
    x = params.alpha * params.d_max * (dist - params.beta * params.d_min)
    if x > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(x))


def repulsive_link_velocity(witness, v_obs, params, fallback_direction=None):
    """Translational repulsive velocity (world frame) for one link.

    ``fallback_direction`` gives the away-from-obstacle direction to use
    when the witness vector vanishes (contact).
    """
    d = np.asarray(witness.d, dtype=float)
    dist = float(witness.distance)
    if np.linalg.norm(d) > 0:
        u = -d / np.linalg.norm(d)
    elif fallback_direction is not None and np.linalg.norm(fallback_direction) > 0:
        u = _unit(np.asarray(fallback_direction, dtype=float))
    else:
        u = np.array([0.0, 0.0, 1.0])
    v_obs = np.asarray(v_obs, dtype=float)
    a = float(v_obs @ u)
    par = parallel_gain(a, params) * distance_sigmoid(dist, params) * u
    if params.K_rep2 == 0.0:
        return par
    c = np.cross(v_obs, u)
    cn = np.linalg.norm(c)
    if cn < 1e-15:
        return par
    return par + params.K_rep2 * math.tanh(params.gamma2 * cn) * (c / cn)


def aggregate_repulsive(link_velocities, ee_rotation, weights):
    """Weighted sum of world-frame link velocities, expressed in the
    end-effector frame; angular part zero."""
    V = np.atleast_2d(np.asarray(link_velocities, dtype=float))
    w = np.asarray(weights, dtype=float)
    v_world = w @ V if len(V) else np.zeros(3)
    return np.concatenate([np.asarray(ee_rotation).T @ v_world, np.zeros(3)])


# --------------------------------------------------------------------------
# Mobility
# --------------------------------------------------------------------------


def mobility(E, v):
    """Distance from the ellipsoid centre to its surface along ``v``.

    ``E`` is the translational block (3 x 3) for 3-vectors or the full
    matrix for 6-vectors.
    """
    E = np.asarray(E, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape[0] == 6 and E.shape[0] == 3:
        v = v[:3]
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("mobility is undefined for a zero vector")
    M = E @ E.T
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] <= 1e-12 * max(s[0], 1e-300):
        raise RankDeficiencyError("ellipsoid matrix is singular")
    q = float(v @ np.linalg.solve(M, v))
    return nv / math.sqrt(q)


def major_semiaxis(E_t):
    """Largest semiaxis vector of the ellipsoid ``E_t E_t^T``."""
    U, s, _ = np.linalg.svd(np.asarray(E_t, dtype=float))
    return U[:, 0] * s[0]


def mobility_ratio(E_t, v):
    """``mobility(E_t, v) / |e_max|`` in (0, 1]."""
    s0 = np.linalg.svd(np.asarray(E_t, dtype=float), compute_uv=False)[0]
    return min(1.0, mobility(E_t, v) / s0)


def rodrigues(axis, angle):
    K = skew(axis)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def adjust_toward_mobility(E_t, v, d, params):
    """Rotate the translational part of ``v`` toward the closer major
    semiaxis when its mobility ratio is below ``zeta``.

    The angle minimises ``-w1 v_new.e_max + w2 max(0, v_new.d)`` over a
    uniform grid on ``[0, pi/2]`` with unit ``e_max`` and ``d``.  Returns
    ``(v_new, phi)``.
    """
    v = np.asarray(v, dtype=float)
    vt = v[:3]
    if np.linalg.norm(vt) == 0:
        raise ValueError("translational velocity must be nonzero")
    if mobility_ratio(E_t, vt) >= params.zeta:
        return v.copy(), 0.0
    e = _unit(major_semiaxis(E_t))
    if vt @ e < 0:
        e = -e
    k = np.cross(vt, e)
    if np.linalg.norm(k) < 1e-9:
        return v.copy(), 0.0
    k = k / np.linalg.norm(k)
    d_hat = _unit(np.asarray(d, dtype=float))
    phis = np.linspace(0.0, math.pi / 2, GRID_POINTS)
    K = skew(k)
    s = np.sin(phis)[:, None, None]
    c = np.cos(phis)[:, None, None]
    R = np.eye(3) + s * K + (1.0 - c) * (K @ K)
    cand = R @ vt
    f = -params.omega1 * (cand @ e) + params.omega2 * np.maximum(0.0, cand @ d_hat)
    i = int(np.argmin(f))
    out = v.copy()
    out[:3] = cand[i]
    return out, float(phis[i])


# --------------------------------------------------------------------------
# Trap handling
# --------------------------------------------------------------------------


def detect_trap(v_att, v_rep, params):
    """Attraction and repulsion nearly cancel (translational parts)."""
    a = np.asarray(v_att, dtype=float)[:3]
    r = np.asarray(v_rep, dtype=float)[:3]
    na, nr = np.linalg.norm(a), np.linalg.norm(r)
    if na <= 1e-6 or nr == 0:
        return False
    if np.linalg.norm(a + r) >= params.trap_ratio * max(na, nr):
        return False
    angle = math.acos(max(-1.0, min(1.0, float(a @ r) / (na * nr))))
    return angle > params.trap_angle


def projected_major_axis(E_t, normal):
    """Major semiaxis of the ellipse obtained by projecting ``E_t`` onto the
    plane with the given unit normal; ``None`` when degenerate."""
    u = _unit(np.asarray(normal, dtype=float))
    P = np.eye(3) - np.outer(u, u)
    U, s, _ = np.linalg.svd(P @ np.asarray(E_t, dtype=float))
    if s[0] <= 1e-12:
        return None
    rho = U[:, 0] * s[0]
    # remove round-off leakage along the normal
    return rho - (rho @ u) * u


def escape_velocity(E_t, v_att, q, q_next, J, dt, v_def):
    """Escape velocity along the projected ellipse's major axis.

    Of the two opposite candidates, the one whose one-step joint update
    (through the pseudo-inverse of ``J``) ends closer to ``q_next`` wins.
    Returns ``(v_esc, ok)``; ``ok`` is False when the projection is
    degenerate and the velocity is zero.
    """
    vt = np.asarray(v_att, dtype=float)[:3]
    if np.linalg.norm(vt) == 0:
        return np.zeros(6), False
    rho = projected_major_axis(E_t, vt)
    if rho is None:
        return np.zeros(6), False
    r = _unit(rho) * v_def
    Jp = np.linalg.pinv(J, rcond=1e-8)
    best, best_err = None, math.inf
    for cand in (r, -r):
        v = np.concatenate([cand, np.zeros(3)])
        err = float(np.linalg.norm(q + dt * (Jp @ v) - q_next))
        if err < best_err:
            best, best_err = v, err
    return best, True
