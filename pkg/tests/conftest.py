import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from gibbs_bigm.generators import MnppSpec, PoSpec, gen_mnpp, gen_po, gen_tsp_circle, gen_tsp_random  # noqa: E402
from gibbs_bigm.problem import ProblemInstance  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def mnpp_35():
    return gen_mnpp(MnppSpec(2, 2, values=[3, 5]))


@pytest.fixture
def tsp_circle_3():
    return gen_tsp_circle(3)


@pytest.fixture
def po_small():
    return gen_po(PoSpec([0.02, -0.01, 0.03], np.diag([0.01, 0.02, 0.015]), w=2))


def small_instances():
    """A spread of instances with n <= 16 used by the exhaustive checks."""
    rng = np.random.default_rng(2024)
    out = [
        gen_mnpp(MnppSpec(2, 2, values=[3, 5])),
        gen_mnpp(MnppSpec(3, 2, values=[4, 7, 9])),
        gen_mnpp(MnppSpec(3, 3, seed=1)),
        gen_mnpp(MnppSpec(4, 2, seed=2)),
        gen_mnpp(MnppSpec(4, 3, seed=3)),
        gen_mnpp(MnppSpec(5, 3, seed=4)),
        gen_tsp_circle(3),
        gen_tsp_random(3, seed=5),
        gen_tsp_circle(4),
        gen_tsp_random(4, seed=6),
        gen_po(PoSpec([0.02, -0.01, 0.03], np.diag([0.01, 0.02, 0.015]), w=2)),
        gen_po(PoSpec(rng.uniform(-0.05, 0.05, 4), np.eye(4) * 0.01, w=3)),
        gen_po(PoSpec([0.04, 0.01], [[0.02, 0.005], [0.005, 0.01]], w=4)),
    ]
    out.append(ProblemInstance(Q=np.array([[1.0, -2.0, 0.5], [0.0, 3.0, -1.0], [0.0, 0.0, -0.5]]), A=np.array([[1, 1, 1]]), b=np.array([2])))
    return out


ACCEPTANCE_LINES = {}


def record_criterion(number, title, ok, detail):
    """Print and remember one pass/fail line for the acceptance summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
