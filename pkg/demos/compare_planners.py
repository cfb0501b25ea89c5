"""Paired comparison of the hybrid planner and the plain potential field.

    python demos/compare_planners.py [runs] [workers]
"""

import sys

from hybridplanner.config import load_scenario
from hybridplanner.simulator import compare


def main(runs=10, workers=1):
    scenario, _ = load_scenario("table2")
    report = compare(scenario, list(range(runs)), ("hybrid", "vpf"), workers=workers)
    print(f"{'metric':<16}{'hybrid':>12}{'vpf':>12}{'p':>10}")
    for name, row in report.metrics.items():
        print(f"{name:<16}{row['mean_a']:>12.4f}{row['mean_b']:>12.4f}{row['p']:>10.3g}")
    print(f"excluded pairs: {report.excluded}")


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:3]]
    main(*args)
