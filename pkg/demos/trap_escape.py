"""Head-on static obstacle: show the trap detections and escape commands."""

from dataclasses import replace

import numpy as np

from hybridplanner.config import load_scenario
from hybridplanner.simulator import run_trial


def main():
    scenario, _ = load_scenario("trap")
    m = run_trial(replace(scenario, keep_log=True))
    print(f"trap events {m.trap_events}, reached goal {m.reached_goal} "
          f"at {m.completion_time:.2f} s, min distance {m.min_obstacle_distance:.3f} m")
    for row in m.log["escapes"]:
        t, v_att, v_esc = row[0], row[1:4], row[4:7]
        cos = v_att @ v_esc / (np.linalg.norm(v_att) * np.linalg.norm(v_esc))
        print(f"  t={t:6.2f}  |v_esc|={np.linalg.norm(v_esc):.3f}  cos(v_att, v_esc)={cos:+.1e}")


if __name__ == "__main__":
    main()
