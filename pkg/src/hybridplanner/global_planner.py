"""Joint-space RRT* with a normalised multi-term path cost, clamped cubic
B-spline smoothing and trapezoidal time parameterisation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .geometry import clearance_batch
from .kdtree import GrowingKDTree
from .kinematics import _task_rows, jacobian_batch, yoshikawa_from_jacobian


class InfeasibleEndpointError(ValueError):
    """Start or goal configuration is in collision or outside the limits."""


@dataclass(frozen=True)
class PlannerParams:
    """RRT* settings and path-cost weights.

    ``*_scale`` are the sigmoid scales of the three cost terms; a ``None``
    length scale means "straight-line joint distance from start to goal".
    """

    max_iterations: int = 1500
    step_size: float = 0.2
    gamma: float = 2.0
    neighbor_radius: float = None
    goal_bias: float = 0.05
    goal_tolerance: float = 1e-6
    w_path: float = 1.0
    w_manip: float = 0.1
    w_obstacle: float = 0.0
    length_scale: float = None
    manip_scale: float = 10.0
    obstacle_scale: float = 10.0
    clearance: float = 0.0
    samples_per_segment: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if min(self.w_path, self.w_manip, self.w_obstacle) < 0:
            raise ValueError("cost weights must be nonnegative")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")


@dataclass
class PlanResult:
    success: bool
    waypoints: np.ndarray = None
    cost: float = math.inf
    iterations: int = 0
    nodes: int = 0
    reason: str = ""
    cost_history: list = field(default_factory=list)


def sigmoid(x, scale):
    return 1.0 / (1.0 + math.exp(-x / scale))


def _inv(x):
    return math.inf if x <= 0 else 1.0 / x


def _cost_from_terms(L, mean_mu, dmin, params, length_scale):
    c = params.w_path * sigmoid(L, length_scale)
    if params.w_manip > 0:
        c += params.w_manip * sigmoid(min(_inv(mean_mu), 1e300), params.manip_scale)
    if params.w_obstacle > 0:
        c += params.w_obstacle * sigmoid(min(_inv(dmin), 1e300), params.obstacle_scale)
    return c


def _length_scale(params, q_start, q_goal):
    if params.length_scale is not None:
        return params.length_scale
    d = float(np.linalg.norm(np.asarray(q_goal) - np.asarray(q_start)))
    return d if d > 0 else 1.0


def _manipulability(model, Q):
    return yoshikawa_from_jacobian(_task_rows(model, jacobian_batch(model, np.atleast_2d(Q))))


def path_terms(model, path, world=None):
    """Raw ``(L, mean manipulability, min obstacle distance)`` of a path."""
    P = np.atleast_2d(np.asarray(path, dtype=float))
    L = float(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1)))
    M = float(np.mean(_manipulability(model, P)))
    active = world.active() if world is not None else []
    D = float(clearance_batch(model, P, active).min()) if active else math.inf
    return L, M, D


def path_cost(model, path, world=None, params=PlannerParams(), length_scale=None):
    """Weighted sum of sigmoid-normalised length, inverse manipulability and
    inverse clearance terms."""
    P = np.atleast_2d(np.asarray(path, dtype=float))
    if len(P) == 0:
        raise ValueError("path must not be empty")
    if length_scale is None:
        length_scale = _length_scale(params, P[0], P[-1])
    L = float(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1)))
    M = float(np.mean(_manipulability(model, P))) if params.w_manip > 0 else 1.0
    D = math.inf
    if params.w_obstacle > 0 and world is not None and world.active():
        D = float(clearance_batch(model, P, world.active()).min())
    return _cost_from_terms(L, M, D, params, length_scale)


class SnapshotChecker:
    """Collision test against a frozen set of obstacle poses."""

    def __init__(self, model, world, clearance=0.0):
        self.model = model
        self.obstacles = world.active() if world is not None else []
        self.clearance = clearance
        self.checks = 0

    def clearance_of(self, Q):
        Q = np.atleast_2d(Q)
        self.checks += len(Q)
        return clearance_batch(self.model, Q, self.obstacles)

    def free(self, Q):
        Q = np.atleast_2d(Q)
        ok = np.all(Q >= self.model.q_min, axis=1) & np.all(Q <= self.model.q_max, axis=1)
        if self.obstacles:
            ok &= self.clearance_of(Q) > self.clearance
        return ok

    def edge_free(self, a, b, resolution):
        """Check the samples of segment ``a``-``b`` at the given spacing
        (``a`` itself is assumed checked)."""
        if not self.obstacles:
            return True
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / resolution)))
        s = np.arange(1, n + 1)[:, None] / n
        return bool(np.all(self.free(a + s * (b - a))))


class _Tree:
    """Node storage with per-node path statistics."""

    def __init__(self, n):
        self.q = []
        self.parent = []
        self.children = []
        self.L = []
        self.musum = []
        self.count = []
        self.dmin = []
        self.mu = []
        self.d = []
        self.index = GrowingKDTree(n)

    def add(self, q, parent, mu, d):
        i = len(self.q)
        self.q.append(q)
        self.parent.append(parent)
        self.children.append([])
        self.mu.append(mu)
        self.d.append(d)
        self.L.append(0.0)
        self.musum.append(mu)
        self.count.append(1)
        self.dmin.append(d)
        if parent >= 0:
            self.children[parent].append(i)
            self._set_stats(i, parent)
        self.index.add(q)
        return i

    def _set_stats(self, i, p):
        self.L[i] = self.L[p] + float(np.linalg.norm(self.q[i] - self.q[p]))
        self.musum[i] = self.musum[p] + self.mu[i]
        self.count[i] = self.count[p] + 1
        self.dmin[i] = min(self.dmin[p], self.d[i])

    def via(self, p, q, mu, d):
        """Statistics of a node at ``q`` attached below ``p``."""
        return (self.L[p] + float(np.linalg.norm(q - self.q[p])), self.musum[p] + mu,
                self.count[p] + 1, min(self.dmin[p], d))

    def reparent(self, i, p):
        old = self.parent[i]
        self.children[old].remove(i)
        self.parent[i] = p
        self.children[p].append(i)
        stack = [i]
        while stack:
            j = stack.pop()
            self._set_stats(j, self.parent[j])
            stack.extend(self.children[j])

    def ancestors(self, i):
        out = set()
        while i >= 0:
            out.add(i)
            i = self.parent[i]
        return out

    def path_to(self, i):
        out = []
        while i >= 0:
            out.append(self.q[i])
            i = self.parent[i]
        return np.array(out[::-1])


def plan_rrt_star(model, world, q_start, q_goal, params=PlannerParams()):
    """Plan a collision-free joint-space path against a static snapshot.

    The goal configuration becomes a regular tree node once a neighbour
    connects to it, so later rewiring keeps improving the route.  The best
    goal route seen so far is returned; its cost never increases.
    """
    q_start = model.check_config(q_start).copy()
    q_goal = model.check_config(q_goal).copy()
    checker = SnapshotChecker(model, world, params.clearance)
    for name, q in (("start", q_start), ("goal", q_goal)):
        if not model.within_limits(q):
            raise InfeasibleEndpointError(f"{name} configuration outside joint limits")
        if not checker.free(q)[0]:
            raise InfeasibleEndpointError(f"{name} configuration in collision")

    n = model.n
    rng = np.random.default_rng(params.seed)
    res = params.step_size / 4.0
    Ls = _length_scale(params, q_start, q_goal)
    need_mu = params.w_manip > 0
    need_d = params.w_obstacle > 0 and bool(checker.obstacles)

    def node_terms(q):
        mu = float(_manipulability(model, q)[0]) if need_mu else 1.0
        d = float(checker.clearance_of(q)[0]) if need_d else math.inf
        return mu, d

    def cost(stats):
        L, musum, count, dmin = stats
        return _cost_from_terms(L, musum / count, dmin, params, Ls)

    tree = _Tree(n)
    tree.add(q_start, -1, *node_terms(q_start))
    result = PlanResult(False, reason="iteration budget exhausted without reaching the goal")

    if np.linalg.norm(q_goal - q_start) <= params.goal_tolerance:
        result.success = True
        result.waypoints = q_start[None, :].copy()
        result.cost = cost((0.0, tree.musum[0], 1, tree.dmin[0]))
        result.nodes = 1
        result.reason = ""
        return result

    goal = -1
    goal_terms = node_terms(q_goal)
    if checker.edge_free(q_start, q_goal, res):
        goal = tree.add(q_goal, 0, *goal_terms)

    def node_cost(i):
        return cost((tree.L[i], tree.musum[i], tree.count[i], tree.dmin[i]))

    def record(it):
        if goal >= 0:
            c = node_cost(goal)
            if c < result.cost:
                result.cost = c
                result.waypoints = tree.path_to(goal)
                result.success = True
                result.reason = ""
        result.cost_history.append(result.cost)

    record(0)
    lo, hi = model.q_min, model.q_max
    it = 0
    for it in range(1, params.max_iterations + 1):
        if rng.random() < params.goal_bias:
            sample = q_goal
        else:
            sample = rng.uniform(lo, hi)
        near_i, near_d = tree.index.nearest(sample)
        if near_d < 1e-12:
            record(it)
            continue
        q_near = tree.q[near_i]
        step = min(1.0, params.step_size / near_d)
        q_new = q_near + step * (sample - q_near)
        if not checker.free(q_new)[0] or not checker.edge_free(q_near, q_new, res):
            record(it)
            continue
        k = len(tree.q) + 1
        r = params.gamma * (math.log(k) / k) ** (1.0 / n)
        if params.neighbor_radius is not None:
            r = min(r, params.neighbor_radius)
        r = max(r, params.step_size)
        near = tree.index.query_radius(q_new, r)
        mu_new, d_new = node_terms(q_new)

        # choose the cheapest collision-free parent, checking lazily
        cands = sorted(((cost(tree.via(j, q_new, mu_new, d_new)), j) for j in near))
        parent = near_i
        for c, j in cands:
            if j == near_i or checker.edge_free(tree.q[j], q_new, res):
                parent = j
                break
        new = tree.add(q_new, parent, mu_new, d_new)

        if goal < 0 and np.linalg.norm(q_new - q_goal) <= params.goal_tolerance:
            goal = new
        # rewire neighbours through the new node
        anc = tree.ancestors(new)
        new_stats = (tree.L[new], tree.musum[new], tree.count[new], tree.dmin[new])
        for j in near:
            if j in anc:
                continue
            cand = (new_stats[0] + float(np.linalg.norm(tree.q[j] - q_new)),
                    new_stats[1] + tree.mu[j], new_stats[2] + 1, min(new_stats[3], tree.d[j]))
            if cost(cand) < node_cost(j) - 1e-12 and checker.edge_free(q_new, tree.q[j], res):
                tree.reparent(j, new)
        # try to attach the goal itself
        if goal < 0 and np.linalg.norm(q_new - q_goal) <= r and checker.edge_free(q_new, q_goal, res):
            goal = tree.add(q_goal, new, *goal_terms)
        elif goal >= 0 and goal != new and np.linalg.norm(q_new - q_goal) <= r and goal not in anc:
            cand = tree.via(new, q_goal, *goal_terms)
            if cost(cand) < node_cost(goal) - 1e-12 and checker.edge_free(q_new, q_goal, res):
                tree.reparent(goal, new)
        record(it)

    result.iterations = it
    result.nodes = len(tree.q)
    return result


# --------------------------------------------------------------------------
# Smoothing
# --------------------------------------------------------------------------


def _clamped_spline(ctrl, degree):
    m = len(ctrl)
    inner = np.linspace(0.0, 1.0, m - degree + 1)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), inner, np.ones(degree + 1)])
    return BSpline(knots, ctrl, degree), knots


def _densify(P, resolution):
    """Insert linear samples so consecutive configs are at most
    ``resolution`` apart.  Returns the dense path and, per dense point, the
    index of the input segment it came from."""
    out = [P[:1]]
    seg = [np.zeros(1, dtype=int)]
    for k, (a, b) in enumerate(zip(P[:-1], P[1:])):
        m = max(1, int(math.ceil(np.linalg.norm(b - a) / resolution)))
        s = np.arange(1, m + 1)[:, None] / m
        out.append(a + s * (b - a))
        seg.append(np.full(m, k))
    return np.vstack(out), np.concatenate(seg)


def smooth_bspline(waypoints, samples_per_segment=10, checker=None, resolution=0.05, max_rounds=20):
    """Fit a clamped cubic B-spline with the waypoints as control points.

    Where densified samples collide, the control points of the offending
    spans are tripled, which makes the spline follow the raw polyline there;
    this repeats until the densified curve is collision-free.
    """
    W = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if len(W) < 2:
        raise ValueError("smoothing needs at least two waypoints")
    mult = np.ones(len(W), dtype=int)
    u = np.linspace(0.0, 1.0, samples_per_segment * (len(W) - 1) + 1)
    for _ in range(max_rounds):
        ctrl = np.repeat(W, mult, axis=0)
        owner = np.repeat(np.arange(len(W)), mult)
        degree = min(3, len(ctrl) - 1)
        spline, knots = _clamped_spline(ctrl, degree)
        P = spline(u)
        P[0], P[-1] = W[0], W[-1]
        if checker is None or not checker.obstacles:
            return P
        dense, seg = _densify(P, resolution)
        bad = ~checker.free(dense)
        if not bad.any():
            return P
        # curve parameters bracketing each colliding dense point
        k = np.unique(seg[bad])
        bad_u = np.concatenate([u[k], u[k + 1]])
        spans = np.clip(np.searchsorted(knots, bad_u, side="right") - 1, degree, len(ctrl) - 1)
        hit = set()
        for sp in spans:
            hit.update(owner[sp - degree:sp + 1].tolist())
        grow = [i for i in sorted(hit) if mult[i] < 3]
        if not grow:
            break
        mult[grow] = 3
    return _densify(W, resolution)[0]


# --------------------------------------------------------------------------
# Timing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TimedPath:
    """Joint configurations sampled at a fixed period ``dt``."""

    configs: np.ndarray
    dt: float

    def __post_init__(self):
        c = np.asarray(self.configs, dtype=float)
        if c.ndim != 2 or len(c) < 2:
            raise ValueError("a timed path needs at least two configurations")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "configs", c)

    def __len__(self):
        return len(self.configs)

    @property
    def times(self):
        return np.arange(len(self.configs)) * self.dt

    @property
    def duration(self):
        """Time to the last configuration; zero for a path that never moves."""
        if np.all(self.configs == self.configs[0]):
            return 0.0
        return (len(self.configs) - 1) * self.dt

    @property
    def velocities(self):
        return np.diff(self.configs, axis=0) / self.dt

    @property
    def accelerations(self):
        v = np.vstack([np.zeros((1, self.configs.shape[1])), self.velocities,
                       np.zeros((1, self.configs.shape[1]))])
        return np.diff(v, axis=0) / self.dt

    def satisfies(self, model):
        """Joint, velocity and acceleration limits hold at every step."""
        c = self.configs
        if np.any(c < model.q_min) or np.any(c > model.q_max):
            return False
        if np.any(np.abs(self.velocities) > model.qd_max):
            return False
        return not np.any(np.abs(self.accelerations) > model.qdd_max)


def _trapezoid(S, v, a, t):
    """Arc-length position of a rest-to-rest trapezoidal profile."""
    t_acc = v / a
    if a * t_acc ** 2 >= S:  # triangular profile
        t_acc = math.sqrt(S / a)
        v = a * t_acc
        T = 2 * t_acc
        t_cruise = 0.0
    else:
        t_cruise = (S - a * t_acc ** 2) / v
        T = 2 * t_acc + t_cruise
    t = np.clip(t, 0.0, T)
    s = np.where(t < t_acc, 0.5 * a * t ** 2,
                 np.where(t < t_acc + t_cruise, 0.5 * a * t_acc ** 2 + v * (t - t_acc),
                          S - 0.5 * a * (T - t) ** 2))
    return np.minimum(s, S), T


def _corners(P, angle):
    """Indices of interior vertices where the polyline turns by more than
    ``angle`` radians."""
    d = np.diff(P, axis=0)
    d /= np.linalg.norm(d, axis=1)[:, None]
    cos = np.einsum("ij,ij->i", d[:-1], d[1:])
    return np.flatnonzero(cos < math.cos(angle)) + 1


def _time_piece(P, qd_max, qdd_max, dt, slowdown, max_rounds):
    seg = np.diff(P, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    u = np.abs(seg) / seg_len[:, None]
    s_knots = np.concatenate([[0.0], np.cumsum(seg_len)])
    S = float(s_knots[-1])
    # largest path speed/acceleration for which every joint is within limits
    v = float(np.min(qd_max / np.maximum(u.max(axis=0), 1e-300))) * (1 - 1e-9)
    a = float(np.min(qdd_max / np.maximum(u.max(axis=0), 1e-300))) * (1 - 1e-9)
    for _ in range(max_rounds):
        T = _trapezoid(S, v, a, 0.0)[1]
        N = max(int(math.ceil(T / dt - 1e-12)) + 1, 2)
        s, _ = _trapezoid(S, v, a, np.arange(N) * dt)
        s[-1] = S
        Q = np.empty((N, P.shape[1]))
        for j in range(P.shape[1]):
            Q[:, j] = np.interp(s, s_knots, P[:, j])
        Q[0], Q[-1] = P[0], P[-1]
        tp = TimedPath(Q, dt)
        if (np.all(np.abs(tp.velocities) <= qd_max)
                and np.all(np.abs(tp.accelerations) <= qdd_max)):
            return Q
        v *= slowdown
        a *= slowdown
    raise RuntimeError("time parameterisation did not converge")


def time_parameterize(path, qd_max, qdd_max, dt, corner_angle=0.05, slowdown=0.9,
                      max_rounds=60):
    """Resample a geometric path at period ``dt`` along trapezoidal
    arc-length profiles that respect per-joint limits at every step.

    The path is cut at vertices turning by more than ``corner_angle``; each
    smooth piece gets its own rest-to-rest trapezoid, so a sharp corner
    costs one stop instead of slowing the whole path.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    P = np.atleast_2d(np.asarray(path, dtype=float))
    qd_max = np.broadcast_to(np.asarray(qd_max, dtype=float), (P.shape[1],))
    qdd_max = np.broadcast_to(np.asarray(qdd_max, dtype=float), (P.shape[1],))
    keep = np.concatenate([[True], np.linalg.norm(np.diff(P, axis=0), axis=1) > 0])
    P = P[keep]
    if len(P) < 2:
        return TimedPath(np.vstack([P[0], P[0]]), dt)
    cuts = np.concatenate([[0], _corners(P, corner_angle), [len(P) - 1]])
    pieces = [_time_piece(P[i:j + 1], qd_max, qdd_max, dt, slowdown, max_rounds)
              for i, j in zip(cuts[:-1], cuts[1:])]
    Q = np.vstack([pieces[0]] + [p[1:] for p in pieces[1:]])
    return TimedPath(Q, dt)


def plan_global_path(model, world, q_start, q_goal, params=PlannerParams(), dt=0.01):
    """RRT*, smoothing and timing in one call; returns ``(PlanResult, TimedPath | None)``."""
    result = plan_rrt_star(model, world, q_start, q_goal, params)
    if not result.success:
        return result, None
    checker = SnapshotChecker(model, world, params.clearance)
    if len(result.waypoints) == 1:
        return result, TimedPath(np.vstack([result.waypoints[0]] * 2), dt)
    geo = smooth_bspline(result.waypoints, params.samples_per_segment, checker,
                         params.step_size / 4.0)
    return result, time_parameterize(geo, model.qd_max, model.qdd_max, dt)


def write_path_csv(path, timed):
    n = timed.configs.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"q{i + 1}" for i in range(n)])
        for t, q in zip(timed.times, timed.configs):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in q])


def read_path_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t":
        raise ValueError("path CSV must start with a 't' column")
    data = np.array([[float(x) for x in r] for r in body])
    dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 1.0
    return TimedPath(data[:, 1:], dt)
