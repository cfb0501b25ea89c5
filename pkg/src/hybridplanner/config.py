"""Scenario documents: defaults, dotted-key overrides and conversion into a
:class:`~hybridplanner.simulator.Scenario`.

Angles in scenario files are degrees; lengths are metres.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import fields
from importlib import resources
from pathlib import Path

import numpy as np

from .command import CommandParams
from .geometry import Box, MotionProfile, Obstacle, Sphere
from .global_planner import PlannerParams
from .kinematics import Pose, load_model, model_from_dict
from .simulator import Scenario
from .tracker import TrackerParams
from .vpf_local import FieldParams, baseline_field_params

SCHEMA_VERSION = 1
DEGREE_KEYS = {"trap_angle"}


class ScenarioError(ValueError):
    """Invalid scenario document; ``str()`` is a user-facing diagnostic."""


def _dataclass_defaults(cls, instance=None):
    inst = instance if instance is not None else cls()
    out = {}
    for f in fields(cls):
        v = getattr(inst, f.name)
        if isinstance(v, np.ndarray):
            v = v.tolist()
        if f.name in DEGREE_KEYS:
            v = math.degrees(v)
        out[f.name] = v
    return out


def default_document():
    """Complete scenario document with every tunable at its default."""
    base = _dataclass_defaults(FieldParams, baseline_field_params())
    return {
        "schema_version": SCHEMA_VERSION,
        "model": "bundled",
        "q_start_deg": [90, -33, 150, -87, -77, -73, 1],
        "q_goal_deg": [-90, -45, 165, 35, 100, -80, 76],
        "obstacles": [],
        "simulation": {
            "planner": "hybrid",
            "seed": 0,
            "control_rate": 100.0,
            "max_duration": 60.0,
            "goal_tolerance_m": 0.005,
            "goal_tolerance_deg": 2.0,
            "start_delay": [0.0, 2.0],
            "randomize_phase": True,
        },
        "planner": _dataclass_defaults(PlannerParams),
        "tracker": _dataclass_defaults(TrackerParams),
        "vpf": _dataclass_defaults(FieldParams),
        "baseline_vpf": base,
        "command": {k: v for k, v in _dataclass_defaults(CommandParams).items()
                    if k not in ("dt", "d_max")},
    }


def _merge(base, top):
    out = copy.deepcopy(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_json(text, source="<scenario>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def bundled_scenario_path(name):
    return resources.files("hybridplanner.data").joinpath(f"{name}.json")


def read_document(path):
    """Read a scenario file (or a bundled scenario by bare name)."""
    p = Path(path)
    if not p.exists():
        candidate = bundled_scenario_path(str(path))
        if candidate.is_file():
            return parse_json(candidate.read_text(), str(path))
        raise ScenarioError(f"{path}: scenario file not found")
    return parse_json(p.read_text(), str(path))


def apply_override(doc, spec):
    """Apply one ``dotted.key=value`` override in place.  Values are parsed
    as JSON when possible, otherwise kept as strings."""
    if "=" not in spec:
        raise ScenarioError(f"override {spec!r} is not of the form key=value")
    key, raw = spec.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ScenarioError(f"override {spec!r} has an empty key segment")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = doc
    for p in parts[:-1]:
        if isinstance(node, list):
            node = node[int(p)]
            continue
        if p not in node or not isinstance(node[p], (dict, list)):
            node[p] = {}
        node = node[p]
    if isinstance(node, list):
        node[int(parts[-1])] = value
    else:
        node[parts[-1]] = value
    return doc


def effective_document(doc, overrides=()):
    """Defaults, then the file, then overrides (last wins)."""
    if "schema_version" in doc and doc["schema_version"] != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {doc['schema_version']}")
    out = _merge(default_document(), doc)
    for spec in overrides:
        apply_override(out, spec)
    return out


def _params(cls, section, name, degrees=()):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ScenarioError(f"unknown key(s) in '{name}': {', '.join(sorted(unknown))}")
    kw = dict(section)
    for k in degrees:
        if k in kw:
            kw[k] = math.radians(kw[k])
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid '{name}' parameters: {exc}") from None


def obstacle_from_dict(d, default_id):
    shape = d.get("shape", {})
    kind = shape.get("type")
    try:
        if kind == "sphere":
            geom = Sphere(float(shape["radius"]))
        elif kind == "box":
            if "half_extents" in shape:
                geom = Box(np.asarray(shape["half_extents"], dtype=float))
            else:
                geom = Box(np.asarray(shape["size"], dtype=float) / 2.0)
        else:
            raise ScenarioError(f"obstacle {default_id}: unknown shape type {kind!r}")
        pose = Pose.from_xyz_rpy(d.get("position", [0, 0, 0]),
                                 np.radians(d.get("rpy_deg", [0, 0, 0])))
        m = d.get("motion", {})
        motion = MotionProfile(
            style=m.get("style", "static"),
            axis=np.asarray(m.get("axis", [1, 0, 0]), dtype=float),
            amplitude=float(m.get("amplitude", 0.0)),
            speed=float(m.get("speed", 0.0)),
            phase=float(m.get("phase", 0.0)),
            seed=int(m.get("seed", 0)),
        )
        return Obstacle(int(d.get("id", default_id)), geom, pose, motion,
                        float(d.get("spawn_time", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"obstacle {default_id}: {exc}") from None


def _model(spec):
    try:
        if isinstance(spec, dict):
            return model_from_dict(spec)
        return load_model(spec)
    except (OSError, KeyError, ValueError) as exc:
        raise ScenarioError(f"robot model: {exc}") from None


def _config(model, values, name):
    q = np.radians(np.asarray(values, dtype=float))
    if q.shape != (model.n,):
        raise ScenarioError(f"{name} needs {model.n} joint angles, got {q.size}")
    for i in range(model.n):
        if not model.q_min[i] <= q[i] <= model.q_max[i]:
            raise ScenarioError(
                f"{name} joint {i + 1} = {values[i]} deg outside "
                f"[{math.degrees(model.q_min[i]):g}, {math.degrees(model.q_max[i]):g}] deg")
    return q


def scenario_from_document(doc):
    """Build a scenario from an effective (defaults-filled) document."""
    model = _model(doc["model"])
    sim = doc["simulation"]
    obstacles = tuple(obstacle_from_dict(o, i + 1) for i, o in enumerate(doc["obstacles"]))
    try:
        return Scenario(
            model=model,
            obstacles=obstacles,
            q_start=_config(model, doc["q_start_deg"], "q_start"),
            q_goal=_config(model, doc["q_goal_deg"], "q_goal"),
            planner=sim["planner"],
            seed=int(sim["seed"]),
            control_rate=float(sim["control_rate"]),
            max_duration=float(sim["max_duration"]),
            goal_tolerance_m=float(sim["goal_tolerance_m"]),
            goal_tolerance_rad=math.radians(float(sim["goal_tolerance_deg"])),
            start_delay=tuple(float(x) for x in sim["start_delay"]),
            randomize_phase=bool(sim["randomize_phase"]),
            planner_params=_params(PlannerParams, doc["planner"], "planner"),
            tracker_params=_params(TrackerParams, doc["tracker"], "tracker"),
            field_params=_params(FieldParams, doc["vpf"], "vpf", DEGREE_KEYS),
            baseline_params=_params(FieldParams, doc["baseline_vpf"], "baseline_vpf",
                                    DEGREE_KEYS),
            command_params=_params(CommandParams, doc["command"], "command"),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from None


def load_scenario(path, overrides=()):
    """``(Scenario, effective document)`` from a file and overrides."""
    doc = effective_document(read_document(path), overrides)
    return scenario_from_document(doc), doc
