"""Deterministic closed-loop trials for the hybrid planner and the plain
velocity-potential-field baseline, with paired statistical comparison."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .command import (AVOIDANCE, TRACKING, CommandParams, qp_velocity, select_mode,
                      tracking_command)
from .geometry import WorldState, min_distance, step_world
from .global_planner import InfeasibleEndpointError, PlannerParams, plan_global_path
from .kinematics import (Pose, _task_rows, ellipsoid_from_jacobian, forward_kinematics,
                         jacobian_world, manipulability_and_gradient, matrix_rpy,
                         yoshikawa_from_jacobian)
from .tracker import PathIndex, TrackerParams, lookahead, tracking_velocity
from .vpf_local import (FieldParams, RankDeficiencyError, adjust_toward_mobility,
                        aggregate_repulsive, attractive_velocity, baseline_field_params,
                        detect_trap, escape_velocity, mobility_ratio, pose_error,
                        repulsive_link_velocity)

PLANNERS = ("hybrid", "vpf")
METRICS = ("min_dist", "time", "avg_manip", "dls_count", "mobility_ratio")


@dataclass(frozen=True)
class Scenario:
    """Everything a trial needs.  ``start_delay`` is the interval from
    which the seeded start time of the arm is drawn; obstacles move during
    it."""

    model: object
    obstacles: tuple
    q_start: np.ndarray
    q_goal: np.ndarray
    planner: str = "hybrid"
    seed: int = 0
    control_rate: float = 100.0
    max_duration: float = 60.0
    goal_tolerance_m: float = 0.005
    goal_tolerance_rad: float = math.radians(2.0)
    start_delay: tuple = (0.0, 2.0)
    randomize_phase: bool = True
    planner_params: PlannerParams = field(default_factory=PlannerParams)
    tracker_params: TrackerParams = field(default_factory=TrackerParams)
    field_params: FieldParams = field(default_factory=FieldParams)
    baseline_params: FieldParams = field(default_factory=baseline_field_params)
    command_params: CommandParams = field(default_factory=CommandParams)
    keep_log: bool = True

    def __post_init__(self):
        if self.planner not in PLANNERS:
            raise ValueError(f"planner must be one of {PLANNERS}")
        if self.control_rate <= 0 or self.max_duration <= 0:
            raise ValueError("control rate and duration must be positive")
        for name in ("q_start", "q_goal"):
            q = self.model.check_config(getattr(self, name))
            if not self.model.within_limits(q):
                raise ValueError(f"{name} outside joint limits")
            object.__setattr__(self, name, q)

    @property
    def dt(self):
        return 1.0 / self.control_rate


@dataclass
class TrialMetrics:
    seed: int
    planner: str
    reached_goal: bool
    collided: bool
    min_obstacle_distance: float
    completion_time: float
    avg_manipulability: float
    dls_count: int
    avg_mobility_ratio: float
    trap_events: int
    reason: str = ""
    start_delay: float = 0.0
    log: dict = None
    path: object = None

    @property
    def completed(self):
        return self.reached_goal and not self.collided

    def row(self):
        return {
            "seed": self.seed,
            "planner": self.planner,
            "reached": int(self.reached_goal),
            "collided": int(self.collided),
            "min_dist": self.min_obstacle_distance,
            "time": self.completion_time,
            "avg_manip": self.avg_manipulability,
            "dls_count": self.dls_count,
            "mobility_ratio": self.avg_mobility_ratio,
        }


# --------------------------------------------------------------------------
# World realisation
# --------------------------------------------------------------------------


def seed_streams(seed):
    """Independent generators for (world, start delay, planner)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def realize(scenario):
    """Seeded obstacle set, start delay and planner seed of a trial."""
    world_rng, delay_rng, plan_rng = seed_streams(scenario.seed)
    obstacles = []
    for o in scenario.obstacles:
        phase = world_rng.uniform(0.0, 2 * math.pi)
        wseed = int(world_rng.integers(2 ** 31))
        if scenario.randomize_phase and o.motion.style != "static":
            o = replace(o, motion=replace(o.motion, phase=phase, seed=wseed))
        obstacles.append(o)
    lo, hi = scenario.start_delay
    delay = float(delay_rng.uniform(lo, hi)) if hi > lo else float(lo)
    plan_seed = int(plan_rng.integers(2 ** 63))
    return tuple(obstacles), delay, plan_seed


def initial_world(obstacles, t0, dt):
    """World at the arm's start time with one step of velocity history."""
    prev = WorldState(obstacles, t0 - dt)
    now = WorldState(obstacles, t0)
    return WorldState(obstacles, t0, now.poses, prev.poses)


# --------------------------------------------------------------------------
# Trial loop
# --------------------------------------------------------------------------


def _goal_reached(T, goal, tol_m, tol_rad):
    if np.linalg.norm(T[:3, 3] - goal.translation) > tol_m:
        return False
    R = T[:3, :3].T @ goal.rotation
    angle = math.acos(max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0)))
    return angle <= tol_rad


def _repulsive(scenario, params, witnesses, world, R_ee, last_dirs):
    """Aggregated repulsive velocity and the closest witness."""
    model = scenario.model
    vels = np.zeros((model.n, 3))
    closest = None
    for w in witnesses:
        if closest is None or w.distance < closest.distance:
            closest = w
        v_obs = (world.poses[world.index_of(w.obstacle_id)].translation
                 - world.previous_poses[world.index_of(w.obstacle_id)].translation) / scenario.dt
        fallback = last_dirs.get(w.link_index)
        v = repulsive_link_velocity(w, v_obs, params, fallback)
        if w.distance > 0:
            last_dirs[w.link_index] = -w.d / w.distance
        vels[w.link_index - 1] += v
    return aggregate_repulsive(vels, R_ee, params.link_weights), closest


def run_trial(scenario):
    """Simulate one trial; never raises for planning failures."""
    model = scenario.model
    dt = scenario.dt
    obstacles, delay, plan_seed = realize(scenario)
    world = initial_world(obstacles, delay, dt)
    goal_pose = forward_kinematics(model, scenario.q_goal)
    hybrid = scenario.planner == "hybrid"
    fparams = scenario.field_params if hybrid else scenario.baseline_params
    cparams = replace(scenario.command_params, dt=dt, d_max=fparams.d_max)

    def failed(reason):
        return TrialMetrics(scenario.seed, scenario.planner, False, False, math.inf, 0.0,
                            0.0, 0, 0.0, 0, reason, delay, None, None)

    path = None
    if hybrid:
        pparams = replace(scenario.planner_params, seed=plan_seed)
        try:
            result, path = plan_global_path(model, world, scenario.q_start, scenario.q_goal,
                                            pparams, dt)
        except InfeasibleEndpointError as exc:
            return failed(f"planning failure: {exc}")
        if path is None:
            return failed(f"planning failure: {result.reason}")
        index = PathIndex(path.configs)
        path_vel = np.vstack([path.velocities, np.zeros((1, model.n))])

    q = scenario.q_start.copy()
    qd_prev = np.zeros(model.n)
    n_max = int(round(scenario.max_duration / dt))
    log = ({k: [] for k in ("t", "q", "qd", "mode", "lambda", "min_dist", "escapes")}
           if scenario.keep_log else None)
    last_dirs = {}
    min_dist = math.inf
    mus, ratios = [], []
    dls = traps = 0
    collided = reached = False
    reason = "timeout"
    escape, escape_until, prev_nu, in_trap = None, -1.0, 0, False
    side = None  # world-frame escape direction kept for one avoidance episode
    k = 0
    for k in range(n_max + 1):
        t = k * dt
        J_w, T_ee = jacobian_world(model, q)
        R_ee = T_ee[:3, :3]
        J = np.empty_like(J_w)
        J[:3] = R_ee.T @ J_w[:3]
        J[3:] = R_ee.T @ J_w[3:]
        Jt = _task_rows(model, J)
        mu = float(yoshikawa_from_jacobian(Jt))
        witnesses = min_distance(model, q, world)
        d_now = min((w.distance for w in witnesses), default=math.inf)
        min_dist = min(min_dist, d_now)
        if d_now <= 0.0:
            collided, reason = True, "collision"
            _log(log, t, q, np.zeros(model.n), -1, 0.0, d_now)
            break
        if _goal_reached(T_ee, goal_pose, scenario.goal_tolerance_m, scenario.goal_tolerance_rad):
            reached, reason = True, "goal"
            _log(log, t, q, np.zeros(model.n), -1, 0.0, d_now)
            break
        if k == n_max:
            break
        nu = select_mode(d_now, fparams.d_max, prev_nu, cparams.hysteresis)
        prev_nu = nu
        mode = AVOIDANCE if nu else TRACKING
        if nu == 0:
            in_trap, side, escape_until = False, None, -1.0

        if hybrid:
            q_next, x, s = lookahead(path.configs, q, qd_prev, scenario.tracker_params, index)
            target = forward_kinematics(model, q_next)
        else:
            q_next, target = scenario.q_goal, goal_pose

        if hybrid and nu == 0:
            qd_g = tracking_velocity(q_next, q, path_vel[x + s], scenario.tracker_params)
            res = tracking_command(qd_g, q, qd_prev, model, cparams, mu)
        else:
            current = Pose(R_ee, T_ee[:3, 3])
            v = attractive_velocity(pose_error(current, target), fparams.K_att)
            closest = None
            if nu == 1:
                v_rep, closest = _repulsive(scenario, fparams, witnesses, world, R_ee, last_dirs)
                trapped = fparams.trap_escape and detect_trap(v, v_rep, fparams)
                if trapped and not in_trap:
                    traps += 1
                in_trap = trapped
                if fparams.trap_escape and (trapped or t < escape_until):
                    if trapped and t >= escape_until:
                        E_t = ellipsoid_from_jacobian(J).translational_block
                        v_esc, ok = escape_velocity(E_t, v, q, q_next, J, dt, fparams.v_def)
                        if ok and side is not None and (R_ee @ v_esc[:3]) @ side < 0:
                            v_esc = -v_esc
                        if ok:
                            side = R_ee @ v_esc[:3]
                        escape = v_esc if ok else None
                        if log is not None:
                            log["escapes"].append(np.concatenate([[t], v[:3], v_esc[:3]]))
                        escape_until = t + fparams.escape_hold if ok else -1.0
                    if escape is not None:
                        v_rep = v_rep + escape
                v = v + v_rep
            if fparams.mobility_adjustment and np.linalg.norm(v[:3]) > 0:
                d_ee = R_ee.T @ closest.d if closest is not None else np.zeros(3)
                try:
                    E_t = ellipsoid_from_jacobian(J).translational_block
                    v, _ = adjust_toward_mobility(E_t, v, d_ee, fparams)
                except RankDeficiencyError:
                    pass
            qd0 = None
            if cparams.alpha_null > 0 and cparams.k_m > 0 and mu > 0:
                _, grad = manipulability_and_gradient(model, q)
                qd0 = cparams.k_m * grad
            res = qp_velocity(J, v, q, qd_prev, model, cparams, qd0, mu, mode)

        qd = res.qd
        mus.append(mu)
        if res.dls_active:
            dls += 1
        vt = J[:3] @ qd
        if np.linalg.norm(vt) > 1e-12:
            try:
                ratios.append(mobility_ratio(ellipsoid_from_jacobian(J).translational_block, vt))
            except RankDeficiencyError:
                pass
        _log(log, t, q, qd, nu, res.lambda_used, d_now)
        q = q + dt * qd
        qd_prev = qd
        world = step_world(world, dt)

    completion = k * dt if reached else min(k * dt, scenario.max_duration)
    if log is not None:
        log = {key: np.array(val) for key, val in log.items()}
        log["escapes"] = log["escapes"].reshape(-1, 7)
    return TrialMetrics(
        seed=scenario.seed,
        planner=scenario.planner,
        reached_goal=reached,
        collided=collided,
        min_obstacle_distance=float(min_dist),
        completion_time=float(completion),
        avg_manipulability=float(np.mean(mus)) if mus else float(
            yoshikawa_from_jacobian(_task_rows(model, J))),
        dls_count=dls,
        avg_mobility_ratio=float(np.mean(ratios)) if ratios else 1.0,
        trap_events=traps,
        reason=reason,
        start_delay=delay,
        log=log,
        path=path,
    )


def _log(log, t, q, qd, mode, lam, d):
    if log is None:
        return
    log["t"].append(t)
    log["q"].append(q.copy())
    log["qd"].append(np.asarray(qd).copy())
    log["mode"].append(mode)
    log["lambda"].append(lam)
    log["min_dist"].append(d)


# --------------------------------------------------------------------------
# Statistics
# --------------------------------------------------------------------------


def paired_t_test(a, b):
    """Two-sided paired t-test; ``(t, p)``.

    Zero-variance differences give ``p = 0`` (nonzero mean) or
    ``t = 0, p = 1`` (all zero).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    if a.ndim != 1 or len(a) < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(len(d)))
    p = float(2.0 * stats.t.sf(abs(t), len(d) - 1))
    return t, min(1.0, max(0.0, p))


@dataclass
class ComparisonReport:
    planner_a: str
    planner_b: str
    seeds: list
    metrics: dict
    excluded: int
    trials: list

    def to_json(self):
        return {
            "planner_a": self.planner_a,
            "planner_b": self.planner_b,
            "n_pairs": len(self.seeds) - self.excluded,
            "excluded_pairs": self.excluded,
            "metrics": self.metrics,
        }


def _trial_task(args):
    scenario, seed, planner, keep_log = args
    return run_trial(replace(scenario, seed=seed, planner=planner, keep_log=keep_log))


def run_trials(scenario, seeds, planners, workers=1, keep_log=False):
    """Run every ``(seed, planner)`` pair; results ordered by seed, then
    by the position of the planner in ``planners``."""
    tasks = [(scenario, s, p, keep_log) for s in seeds for p in planners]
    if workers <= 1:
        return [_trial_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_task, tasks, chunksize=1))


def compare(scenario, seeds, planners=("hybrid", "vpf"), workers=1, alpha=0.05,
            keep_log=False):
    """Paired comparison of two planners over identical world realisations."""
    if len(seeds) < 2:
        raise ValueError("a comparison needs at least two runs")
    pa, pb = planners
    same = pa == pb
    results = run_trials(scenario, seeds, (pa,) if same else (pa, pb), workers, keep_log)
    if same:
        pairs = [(r, r) for r in results]
        trials = [r for r in results for _ in (0, 1)]
    else:
        pairs = list(zip(results[0::2], results[1::2]))
        trials = results
    kept = [(a, b) for a, b in pairs if a.completed and b.completed]
    metrics = {}
    for name in METRICS:
        xa = [a.row()[name] for a, _ in kept]
        xb = [b.row()[name] for _, b in kept]
        if len(kept) >= 2:
            t, p = paired_t_test(xa, xb)
        else:
            t, p = 0.0, 1.0
        metrics[name] = {
            "mean_a": float(np.mean(xa)) if xa else math.nan,
            "mean_b": float(np.mean(xb)) if xb else math.nan,
            "t": t,
            "p": p,
            "significant": bool(p < alpha),
        }
    return ComparisonReport(pa, pb, list(seeds), metrics, len(pairs) - len(kept), trials)


# --------------------------------------------------------------------------
# Output files
# --------------------------------------------------------------------------


METRIC_COLUMNS = ("seed", "planner", "reached", "collided", "min_dist", "time", "avg_manip",
                  "dls_count", "mobility_ratio")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_metrics_csv(path, trials):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for m in trials:
            row = m.row()
            w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])


def write_trial_log(path, log, n):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"q{i + 1}" for i in range(n)] + [f"qd{i + 1}" for i in range(n)]
                   + ["mode", "lambda", "min_dist"])
        for i in range(len(log["t"])):
            w.writerow([_fmt(float(log["t"][i]))]
                       + [_fmt(float(x)) for x in log["q"][i]]
                       + [_fmt(float(x)) for x in log["qd"][i]]
                       + [str(int(log["mode"][i])), _fmt(float(log["lambda"][i])),
                          _fmt(float(log["min_dist"][i]))])


def read_trial_log(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    n = sum(1 for h in header if h.startswith("q") and not h.startswith("qd"))
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(header))
    return {"t": data[:, 0], "q": data[:, 1:1 + n], "qd": data[:, 1 + n:1 + 2 * n],
            "mode": data[:, 1 + 2 * n].astype(int), "lambda": data[:, 2 + 2 * n],
            "min_dist": data[:, 3 + 2 * n]}


def write_comparison_json(path, report):
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def histogram_rows(trials, planners, bins=10):
    """Plot-ready histogram bins of each metric per planner (completed
    trials only, shared bin edges per metric)."""
    rows = []
    for name in METRICS:
        vals = {p: np.array([t.row()[name] for t in trials if t.planner == p and t.completed],
                            dtype=float) for p in planners}
        allv = np.concatenate([v for v in vals.values()]) if vals else np.zeros(0)
        allv = allv[np.isfinite(allv)]
        if len(allv) == 0:
            continue
        lo, hi = float(allv.min()), float(allv.max())
        if hi == lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
        for p in planners:
            counts, _ = np.histogram(vals[p][np.isfinite(vals[p])], bins=edges)
            for i, c in enumerate(counts):
                rows.append((name, p, edges[i], edges[i + 1], int(c)))
    return rows


def write_histograms_csv(path, trials, planners, bins=10):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "planner", "bin_lo", "bin_hi", "count"])
        for name, p, lo, hi, c in histogram_rows(trials, planners, bins):
            w.writerow([name, p, _fmt(float(lo)), _fmt(float(hi)), c])
