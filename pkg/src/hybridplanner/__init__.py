"""Hybrid global/local motion planning for redundant manipulators.

A joint-space RRT* path is smoothed, timed and tracked; when obstacles come
close, a velocity potential field with mobility-aware adjustment and trap
escape takes over, and every command is resolved under joint limits.
"""

from .command import CommandParams, qp_velocity, select_mode
from .config import ScenarioError, load_scenario
from .geometry import Box, MotionProfile, Obstacle, Sphere, WorldState, min_distance
from .global_planner import PlannerParams, plan_global_path, plan_rrt_star, time_parameterize
from .kinematics import RobotModel, forward_kinematics, load_model
from .simulator import Scenario, TrialMetrics, compare, run_trial
from .tracker import TrackerParams
from .vpf_local import FieldParams

__all__ = [
    "Box", "CommandParams", "FieldParams", "MotionProfile", "Obstacle", "PlannerParams",
    "RobotModel", "Scenario", "ScenarioError", "Sphere", "TrackerParams", "TrialMetrics",
    "WorldState", "compare", "forward_kinematics", "load_model", "load_scenario",
    "min_distance", "plan_global_path", "plan_rrt_star", "qp_velocity", "run_trial",
    "select_mode", "time_parameterize",
]
