"""Joint-velocity commands: damped least squares, the box-constrained
redundancy QP and the tracking/avoidance switch."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

# bounds are shrunk by this relative margin so round-off in later
# differencing never reports a violation
BOUND_MARGIN = 1e-9
TRACKING, AVOIDANCE = "tracking", "avoidance"


class InfeasibleBoxError(RuntimeError):
    """The per-joint constraint intervals do not intersect."""


@dataclass(frozen=True)
class CommandParams:
    epsilon: float = 0.01
    lambda_max: float = 0.5
    alpha_null: float = 0.01
    k_m: float = 0.1
    dt: float = 0.01
    d_max: float = 0.2
    hysteresis: bool = False

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.lambda_max < 0 or self.alpha_null < 0:
            raise ValueError("lambda_max and alpha_null must be nonnegative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class CommandResult:
    qd: np.ndarray
    dls_active: bool
    lambda_used: float
    constraints_active: frozenset = field(default_factory=frozenset)
    mode: str = TRACKING


def damping_factor(mu, epsilon, lambda_max):
    """``(1 - (mu/eps)^2) lambda_max`` below the threshold, else 0."""
    if mu < 0:
        raise ValueError("manipulability must be nonnegative")
    if mu < epsilon:
        return (1.0 - (mu / epsilon) ** 2) * lambda_max
    return 0.0


def dls_velocity(J, v, lam):
    """``J^T (J J^T + lam I)^-1 v``."""
    J = np.asarray(J, dtype=float)
    M = J @ J.T + lam * np.eye(J.shape[0])
    if lam == 0.0:
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] <= 1e-12 * max(s[0], 1e-300):
            raise np.linalg.LinAlgError("J J^T is singular and no damping was given")
    return J.T @ np.linalg.solve(M, np.asarray(v, dtype=float))


def braking_bound(dist, qdd_max, dt):
    """Largest speed toward a limit ``dist`` away that can still be braked
    to rest at ``qdd_max`` with commands held for ``dt``.  Never exceeds
    ``dist / dt``."""
    dist = np.maximum(dist, 0.0)
    return qdd_max * (-dt + np.sqrt(dt * dt + 2.0 * dist / qdd_max))


def joint_velocity_bounds(q, qd_prev, model, dt):
    """Per-joint interval intersecting the position, velocity and
    acceleration constraints.  Returns ``(lo, hi, tags)`` where ``tags``
    names the binding constraint of each side."""
    q = np.asarray(q, dtype=float)
    qd_prev = np.asarray(qd_prev, dtype=float)
    m = 1.0 - BOUND_MARGIN
    pos_hi = braking_bound(model.q_max - q, model.qdd_max, dt) * m
    pos_lo = -braking_bound(q - model.q_min, model.qdd_max, dt) * m
    vel = model.qd_max * m
    acc = model.qdd_max * dt * m
    cands_hi = np.stack([pos_hi, vel, qd_prev + acc])
    cands_lo = np.stack([pos_lo, -vel, qd_prev - acc])
    hi = cands_hi.min(axis=0)
    lo = cands_lo.max(axis=0)
    if np.any(lo > hi):
        bad = int(np.argmax(lo > hi))
        raise InfeasibleBoxError(f"empty velocity interval for joint {bad + 1}")
    names = np.array(["position", "velocity", "acceleration"])
    return lo, hi, (names[cands_lo.argmax(axis=0)], names[cands_hi.argmin(axis=0)])


def _active(x, lo, hi, tags, tol=1e-12):
    out = set()
    for i in range(len(x)):
        if x[i] <= lo[i] + tol:
            out.add((i, "lower", str(tags[0][i])))
        if x[i] >= hi[i] - tol:
            out.add((i, "upper", str(tags[1][i])))
    return frozenset(out)


def null_projector(J, rcond=1e-8):
    n = J.shape[1]
    return np.eye(n) - np.linalg.pinv(J, rcond=rcond) @ J


def box_least_squares(A, b, lo, hi):
    """``argmin |A x - b|^2`` over the box.  The minimum-norm unconstrained
    solution is returned when it is feasible."""
    x = np.linalg.lstsq(A, b, rcond=None)[0]
    if np.all(x >= lo) and np.all(x <= hi):
        return x
    res = lsq_linear(A, b, bounds=(lo, hi), method="bvls", tol=1e-12, max_iter=200)
    return np.clip(res.x, lo, hi)


def qp_velocity(J, v, q, qd_prev, model, params, qd0=None, mu=None, mode=AVOIDANCE):
    """Redundancy-resolving damped least squares under joint limits.

    Minimises ``|J x - v|^2 + lam |x|^2 + alpha |N (qd0 - x)|^2`` over the
    constraint box, with ``N`` the null-space projector of ``J`` and
    ``lam`` from :func:`damping_factor`.
    """
    J = np.asarray(J, dtype=float)
    n = J.shape[1]
    if mu is None:
        mu = math.sqrt(max(np.linalg.det(J @ J.T), 0.0))
    lam = damping_factor(mu, params.epsilon, params.lambda_max)
    lo, hi, tags = joint_velocity_bounds(q, qd_prev, model, params.dt)
    blocks = [J]
    rhs = [np.asarray(v, dtype=float)]
    if lam > 0:
        blocks.append(math.sqrt(lam) * np.eye(n))
        rhs.append(np.zeros(n))
    if params.alpha_null > 0 and qd0 is not None:
        N = null_projector(J)
        sa = math.sqrt(params.alpha_null)
        blocks.append(sa * N)
        rhs.append(sa * (N @ np.asarray(qd0, dtype=float)))
    x = box_least_squares(np.vstack(blocks), np.concatenate(rhs), lo, hi)
    return CommandResult(x, lam > 0, lam, _active(x, lo, hi, tags), mode)


def tracking_command(qd_global, q, qd_prev, model, params, mu):
    """Constrain a joint-space tracking command.

    Near singularities the command is damped by ``1 / (1 + lam)`` (the
    joint-space minimiser of ``|x - qd|^2 + lam |x|^2``).  It is then
    scaled uniformly into the constraint box, keeping its direction; when
    no common scale fits, each joint is clipped.
    """
    lam = damping_factor(mu, params.epsilon, params.lambda_max)
    x = np.asarray(qd_global, dtype=float) / (1.0 + lam)
    lo, hi, tags = joint_velocity_bounds(q, qd_prev, model, params.dt)
    if not (np.all(x >= lo) and np.all(x <= hi)):
        x = _scale_into_box(x, lo, hi)
    return CommandResult(x, lam > 0, lam, _active(x, lo, hi, tags), TRACKING)


def _scale_into_box(x, lo, hi):
    # feasible scales c in [0, 1] with lo <= c x <= hi, per joint
    c_lo, c_hi = 0.0, 1.0
    for xi, l, h in zip(x, lo, hi):
        if xi > 0:
            c_hi = min(c_hi, h / xi)
            c_lo = max(c_lo, l / xi)
        elif xi < 0:
            c_hi = min(c_hi, l / xi)
            c_lo = max(c_lo, h / xi)
        elif not l <= 0.0 <= h:
            c_hi = -1.0
    if c_lo <= c_hi and c_hi >= 0:
        return np.clip(c_hi * x, lo, hi)
    return np.clip(x, lo, hi)


def select_mode(min_distance, d_max, previous=None, hysteresis=False, band=1.1):
    """1 (avoidance) when an obstacle is closer than ``d_max``.

    With ``hysteresis`` the mode stays in avoidance until the distance
    exceeds ``band * d_max``.
    """
    if min_distance < 0:
        raise ValueError("distance must be nonnegative")
    if hysteresis and previous == 1:
        return 1 if min_distance < band * d_max else 0
    return 1 if min_distance < d_max else 0


def compose_command(nu, qd_global, qd_local):
    if nu not in (0, 1):
        raise ValueError("switch value must be 0 or 1")
    return np.asarray(qd_local if nu == 1 else qd_global, dtype=float).copy()
