import math

import numpy as np
import pytest

from lfraster.camera import RigSpec, generate_orbit_rig
from lfraster.display import DisplayConfig
from lfraster.scene import SyntheticSceneSpec, generate_synthetic_scene

# Desk setup shared by the equivalence, trend and coalescing checks.
DESK_W, DESK_H, DESK_N = 192, 108, 8


def desk_display(num_views=DESK_N, line_count=8.0, width=DESK_W, height=DESK_H):
    # Lx = N makes consecutive subpixels step through consecutive views
    return DisplayConfig(width, height, math.radians(10.0), line_count, 0.0, num_views)


def desk_rig(num_views=DESK_N, fan_deg=8.0, width=DESK_W, height=DESK_H):
    return generate_orbit_rig(RigSpec(num_views, angular_range=fan_deg, width=width, height=height))


@pytest.fixture(scope="session")
def desk_scene():
    return generate_synthetic_scene(SyntheticSceneSpec(count=2000, sh_degree=1, seed=0))


@pytest.fixture(scope="session")
def small_scene():
    return generate_synthetic_scene(SyntheticSceneSpec(count=150, sh_degree=1, seed=3, scale_range=(0.05, 0.15)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            if outcome == "passed" and getattr(rep, "when", "call") != "call":
                continue
            name = rep.nodeid.split("::")[-1]
            if "test_acceptance" not in rep.nodeid or not name.startswith("test_criterion_"):
                continue
            num, _, label = name[len("test_criterion_"):].partition("_")
            lines.append((int(num), f"criterion {num} ({label.replace('_', ' ')}): {outcome.upper()}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
