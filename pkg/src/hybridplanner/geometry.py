"""Moving convex obstacles, capsule distance queries and obstacle velocity
estimation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kinematics import Pose, link_transforms

MOTION_STYLES = ("static", "sinusoid", "bounce", "random-waypoint")


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Box:
    half_extents: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=float)
        if h.shape != (3,) or np.any(h <= 0):
            raise ValueError("box half extents must be three positive numbers")
        object.__setattr__(self, "half_extents", h)


@dataclass(frozen=True)
class MotionProfile:
    """How an obstacle moves about its initial position.

    ``sinusoid``: ``p0 + axis * amplitude * sin(speed * t / amplitude + phase)``
    (peak speed equals ``speed``).
    ``bounce``: triangle wave between ``-amplitude`` and ``+amplitude`` at
    constant ``speed``, starting at ``p0`` (plus ``phase`` radians of the cycle).
    ``random-waypoint``: straight moves at ``speed`` between seeded random
    points inside a cube of half-width ``amplitude``.
    """

    style: str = "static"
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    amplitude: float = 0.0
    speed: float = 0.0
    phase: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.style not in MOTION_STYLES:
            raise ValueError(f"unknown motion style {self.style!r}")
        axis = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("motion axis must be a unit vector")
        object.__setattr__(self, "axis", axis)
        if self.speed < 0 or self.amplitude < 0:
            raise ValueError("speed and amplitude must be nonnegative")
        if self.style != "static" and self.speed > 0 and self.amplitude <= 0:
            raise ValueError("moving profiles need a positive amplitude")

    def displacement(self, t):
        if self.style == "static" or self.speed == 0.0:
            return np.zeros(3)
        A, v = self.amplitude, self.speed
        if self.style == "sinusoid":
            return self.axis * (A * np.sin(v * t / A + self.phase))
        if self.style == "bounce":
            period = 4.0 * A / v
            # phase shifts the cycle; s in [0, 1)
            s = (t / period + self.phase / (2 * np.pi)) % 1.0
            tri = 4.0 * s if s < 0.25 else (2.0 - 4.0 * s if s < 0.75 else 4.0 * s - 4.0)
            return self.axis * (A * tri)
        return _random_waypoint_displacement(self.seed, A, v, t)


_WAYPOINT_CACHE: dict = {}


def _random_waypoint_displacement(seed, amplitude, speed, t):
    key = (seed, amplitude)
    points = _WAYPOINT_CACHE.get(key)
    if points is None:
        rng = np.random.default_rng(seed)
        points = np.vstack([np.zeros(3), rng.uniform(-amplitude, amplitude, size=(256, 3))])
        _WAYPOINT_CACHE[key] = points
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1) / speed
    total = seg.sum()
    t = t % total
    ends = np.cumsum(seg)
    i = int(np.searchsorted(ends, t, side="right"))
    i = min(i, len(seg) - 1)
    start = ends[i] - seg[i]
    frac = 0.0 if seg[i] == 0 else (t - start) / seg[i]
    return points[i] + frac * (points[i + 1] - points[i])


@dataclass(frozen=True)
class Obstacle:
    """Convex obstacle; ``spawn_time`` delays its appearance in the world."""

    id: int
    shape: object
    pose: Pose
    motion: MotionProfile = field(default_factory=MotionProfile)
    spawn_time: float = 0.0

    def pose_at(self, t):
        return Pose(self.pose.rotation, self.pose.translation + self.motion.displacement(t))

    def active_at(self, t):
        return t >= self.spawn_time


@dataclass(frozen=True)
class DistanceWitness:
    """Closest-point pair between a robot link and an obstacle.

    ``d`` points from the link to the obstacle and ``distance == |d|``;
    penetrating pairs report ``distance == 0`` with coincident points.
    """

    link_index: int
    obstacle_id: int
    point_on_link: np.ndarray
    point_on_obstacle: np.ndarray
    d: np.ndarray
    distance: float


@dataclass(frozen=True)
class WorldState:
    """Immutable snapshot of the obstacle world at ``time``."""

    obstacles: tuple
    time: float = 0.0
    poses: tuple = None
    previous_poses: tuple = None

    def __post_init__(self):
        ids = [o.id for o in self.obstacles]
        if len(set(ids)) != len(ids):
            raise ValueError("obstacle ids must be unique")
        if self.poses is None:
            object.__setattr__(self, "poses", tuple(o.pose_at(self.time) for o in self.obstacles))
        if self.previous_poses is None:
            object.__setattr__(self, "previous_poses", self.poses)

    def index_of(self, obstacle_id):
        for i, o in enumerate(self.obstacles):
            if o.id == obstacle_id:
                return i
        raise KeyError(f"unknown obstacle id {obstacle_id}")

    def active(self):
        """``(obstacle, pose)`` pairs present at the current time."""
        return [(o, p) for o, p in zip(self.obstacles, self.poses) if o.active_at(self.time)]

    def at_time(self, t):
        """Snapshot at absolute time ``t`` with no velocity history."""
        return WorldState(self.obstacles, t)


def step_world(world, dt):
    """Advance every obstacle along its motion profile by ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = world.time + dt
    poses = tuple(o.pose_at(t) for o in world.obstacles)
    return WorldState(world.obstacles, t, poses, world.poses)


def obstacle_velocity(world, obstacle_id, dt):
    """Backward difference of the obstacle's measured position."""
    i = world.index_of(obstacle_id)
    return (world.poses[i].translation - world.previous_poses[i].translation) / dt


# --------------------------------------------------------------------------
# Distance queries (vectorised over segments)
# --------------------------------------------------------------------------


def _unit_or(v, fallback):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(n > 1e-15, n, 1.0)
    return np.where(n > 1e-15, v / safe, fallback)


def segment_point_closest(a, b, c):
    """Closest points on segments ``a``-``b`` to points ``c`` (broadcast)."""
    ab = b - a
    denom = np.einsum("...i,...i->...", ab, ab)
    t = np.einsum("...i,...i->...", c - a, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(np.where(denom > 0, t, 0.0), 0.0, 1.0)
    return a + t[..., None] * ab


def segment_box_closest(a, b, half):
    """Exact closest points between segments and an axis-aligned box.

    ``a``, ``b`` have shape ``(M, 3)`` in box coordinates.  The squared
    distance from the segment point ``p(t)`` to the box is a convex,
    piecewise quadratic function of ``t`` whose pieces change only where a
    coordinate crosses a face plane, so it is minimised exactly on each
    piece.  Returns ``(t, point_on_segment, point_on_box, dist)``.
    """
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    M = a.shape[0]
    delta = b - a
    with np.errstate(divide="ignore", invalid="ignore"):
        cross_lo = (-half - a) / delta
        cross_hi = (half - a) / delta
    brk = np.concatenate([cross_lo, cross_hi], axis=1)
    brk = np.where(np.isfinite(brk), np.clip(brk, 0.0, 1.0), 0.0)
    knots = np.sort(np.concatenate([np.zeros((M, 1)), brk, np.ones((M, 1))], axis=1), axis=1)
    lo = knots[:, :-1]
    hi = knots[:, 1:]
    mid = 0.5 * (lo + hi)
    # active face set and its side on each piece, from the piece midpoint
    pm = a[:, None, :] + mid[..., None] * delta[:, None, :]
    side = np.sign(pm) * (np.abs(pm) > half)
    target = side * half
    act = side != 0
    dd = np.where(act, delta[:, None, :], 0.0)
    num = -np.sum(dd * (a[:, None, :] - target), axis=-1)
    den = np.sum(dd * dd, axis=-1)
    t_star = np.where(den > 0, num / np.where(den > 0, den, 1.0), lo)
    t_star = np.clip(t_star, lo, hi)
    p = a[:, None, :] + t_star[..., None] * delta[:, None, :]
    q = np.clip(p, -half, half)
    f = np.sum((p - q) ** 2, axis=-1)
    k = np.argmin(f, axis=1)
    rows = np.arange(M)
    t = t_star[rows, k]
    p = p[rows, k]
    q = q[rows, k]
    return t, p, q, np.sqrt(f[rows, k])


def capsules_vs_obstacle(A, B, radius, obstacle, pose):
    """Surface distance from capsules ``(A[i], B[i], radius[i])`` (world
    frame) to one obstacle.

    Returns ``(distance, point_on_link, point_on_obstacle)`` arrays.
    Penetrating capsules get distance 0 and coincident points halfway
    between the two surfaces along the closest-point line.
    """
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    radius = np.broadcast_to(radius, (A.shape[0],))
    if isinstance(obstacle.shape, Sphere):
        c = pose.translation
        p = segment_point_closest(A, B, c)
        gap = c - p
        core = np.linalg.norm(gap, axis=-1)
        n = _unit_or(gap, np.array([1.0, 0.0, 0.0]))
        surf_link = p + radius[:, None] * n
        surf_obs = c - obstacle.shape.radius * n
        sep = core - radius - obstacle.shape.radius
    else:
        R, c = pose.rotation, pose.translation
        al = (A - c) @ R
        bl = (B - c) @ R
        _, p_l, q_l, core = segment_box_closest(al, bl, obstacle.shape.half_extents)
        p = p_l @ R.T + c
        q = q_l @ R.T + c
        n = _unit_or(q - p, np.array([1.0, 0.0, 0.0]))
        surf_link = p + radius[:, None] * n
        surf_obs = q
        sep = core - radius
    hit = sep <= 0.0
    mid = 0.5 * (surf_link + surf_obs)
    pl = np.where(hit[:, None], mid, surf_link)
    po = np.where(hit[:, None], mid, surf_obs)
    return np.maximum(sep, 0.0), pl, po


def capsule_distance(a, b, radius, obstacle, pose=None, link_index=0):
    """Witness between one world-frame capsule and one obstacle."""
    if pose is None:
        pose = obstacle.pose
    dist, pl, po = capsules_vs_obstacle(np.asarray(a, float), np.asarray(b, float),
                                        radius, obstacle, pose)
    d = po[0] - pl[0]
    return DistanceWitness(link_index, obstacle.id, pl[0], po[0], d, float(np.linalg.norm(d)))


def capsule_segments(model, Q):
    """World-frame capsule endpoints for one or many configurations.

    Returns arrays of shape ``(..., C, 3)`` for ``A`` and ``B``.
    """
    Ts = link_transforms(model, Q)
    links = model._cap_link
    if len(links) == 0:
        shape = Ts.shape[:-3] + (0, 3)
        return np.zeros(shape), np.zeros(shape)
    T = Ts[..., links, :, :]
    # the stored end-effector transform includes the tool; capsules of the
    # last link live in the joint frame
    if model.n in links:
        pre_tool = Ts[..., model.n, :, :] @ model.tool.inverse().matrix
        T = T.copy()
        T[..., links == model.n, :, :] = pre_tool[..., None, :, :]
    R = T[..., :3, :3]
    t = T[..., :3, 3]
    A = np.einsum("...ij,...j->...i", R, model._cap_a) + t
    B = np.einsum("...ij,...j->...i", R, model._cap_b) + t
    return A, B


def min_distance(model, q, world):
    """Per-link witness against the nearest active obstacle.

    Ties are broken by the lower obstacle id.  An empty world gives an
    empty list.
    """
    active = world.active()
    if not active:
        return []
    A, B = capsule_segments(model, np.asarray(q, dtype=float))
    r = model._cap_r
    best = None
    for obstacle, pose in sorted(active, key=lambda op: op[0].id):
        dist, pl, po = capsules_vs_obstacle(A, B, r, obstacle, pose)
        if best is None:
            best = [dist, pl, po, np.full(len(dist), obstacle.id)]
            continue
        better = dist < best[0]
        best[0] = np.where(better, dist, best[0])
        best[1] = np.where(better[:, None], pl, best[1])
        best[2] = np.where(better[:, None], po, best[2])
        best[3] = np.where(better, obstacle.id, best[3])
    out = []
    for i, link in enumerate(model._cap_link):
        d = best[2][i] - best[1][i]
        out.append(DistanceWitness(int(link), int(best[3][i]), best[1][i], best[2][i], d,
                                   float(np.linalg.norm(d))))
    return out


def clearance_batch(model, Q, obstacles_with_poses):
    """Minimum capsule-obstacle distance for each configuration in ``Q``."""
    Q = np.atleast_2d(Q)
    if not obstacles_with_poses or len(model._cap_link) == 0:
        return np.full(Q.shape[0], np.inf)
    A, B = capsule_segments(model, Q)
    nb, nc = A.shape[:2]
    A = A.reshape(-1, 3)
    B = B.reshape(-1, 3)
    r = np.tile(model._cap_r, nb)
    out = np.full(nb, np.inf)
    spheres = [(o.shape.radius, p.translation) for o, p in obstacles_with_poses
               if isinstance(o.shape, Sphere)]
    if spheres:
        rad = np.array([s[0] for s in spheres])
        cen = np.array([s[1] for s in spheres])
        p = segment_point_closest(A[:, None, :], B[:, None, :], cen[None])
        core = np.linalg.norm(cen[None] - p, axis=-1)
        sep = (core - rad[None]).min(axis=1) - r
        out = np.minimum(out, np.maximum(sep, 0.0).reshape(nb, nc).min(axis=1))
    for obstacle, pose in obstacles_with_poses:
        if isinstance(obstacle.shape, Sphere):
            continue
        R, c = pose.rotation, pose.translation
        core = segment_box_closest((A - c) @ R, (B - c) @ R, obstacle.shape.half_extents)[3]
        sep = np.maximum(core - r, 0.0)
        out = np.minimum(out, sep.reshape(nb, nc).min(axis=1))
    return out


def with_motion(obstacle, **changes):
    return replace(obstacle, motion=replace(obstacle.motion, **changes))
