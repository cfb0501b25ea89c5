import numpy as np
import pytest

from hybridplanner.kinematics import load_model, model_from_dict

L1, L2 = 0.7, 0.4


def planar_2r(l1=L1, l2=L2):
    """Planar two-link arm in the xy plane with task rows (x, y)."""
    return model_from_dict({
        "name": "planar-2r",
        "joints": [
            {"axis": [0, 0, 1]},
            {"axis": [0, 0, 1], "origin": {"xyz": [l1, 0, 0]}},
        ],
        "tool": {"xyz": [l2, 0, 0]},
        "capsules": [
            {"link": 1, "a": [0, 0, 0], "b": [l1, 0, 0], "radius": 0.02},
            {"link": 2, "a": [0, 0, 0], "b": [l2, 0, 0], "radius": 0.02},
        ],
        "limits": {"position_deg": [[-180, 180], [-180, 180]],
                   "velocity_deg_s": 35, "acceleration_deg_s2": 70},
        "task_axes": [0, 1],
    })


@pytest.fixture(scope="session")
def arm():
    return load_model()


@pytest.fixture(scope="session")
def planar():
    return planar_2r()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_config(model, rng, margin=0.05):
    span = model.q_max - model.q_min
    return rng.uniform(model.q_min + margin * span, model.q_max - margin * span)


ACCEPTANCE = []


def record(n, ok, detail):
    """Note one acceptance criterion outcome for the terminal summary."""
    ACCEPTANCE.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
