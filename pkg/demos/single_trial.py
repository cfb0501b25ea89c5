"""Run one hybrid trial on the three-obstacle world and save the end-effector trace.

    python demos/single_trial.py [seed]
"""

import sys
from dataclasses import replace

import numpy as np

from hybridplanner.config import load_scenario
from hybridplanner.kinematics import forward_kinematics
from hybridplanner.simulator import run_trial


def main(seed=0):
    scenario, _ = load_scenario("table2")
    m = run_trial(replace(scenario, seed=seed, planner="hybrid", keep_log=True))
    print(f"reached goal : {m.reached_goal} ({m.reason})")
    print(f"time         : {m.completion_time:.2f} s after a {m.start_delay:.2f} s delay")
    print(f"min distance : {m.min_obstacle_distance:.4f} m")
    print(f"mobility     : {m.avg_mobility_ratio:.3f}")
    modes = m.log["mode"]
    print(f"avoidance    : {np.mean(modes == 1) * 100:.1f}% of steps")
    ee = np.array([forward_kinematics(scenario.model, q).translation for q in m.log["q"]])
    np.savetxt("ee_trace.csv", np.column_stack([m.log["t"], ee]), delimiter=",",
               header="t,x,y,z", comments="")
    print("wrote ee_trace.csv")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
