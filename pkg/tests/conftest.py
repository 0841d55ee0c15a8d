import math

import numpy as np
import pytest

from telepath import maps
from telepath.vehicle import VehicleParams


@pytest.fixture
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def stadium():
    return maps.default_map()


def circle_waypoints(n=8, radius=5.0, center=(0.0, 0.0)):
    """n points counterclockwise on a circle, spanning n-1 chords."""
    ang = np.arange(n) * 2.0 * math.pi / n
    return [(center[0] + radius * math.cos(a), center[1] + radius * math.sin(a)) for a in ang]


def random_waypoint_walk(rng, n_points, step_lo=0.3, step_hi=1.5, turn=0.9):
    """Random valid waypoint list: a heading-constrained walk, spacing >= step_lo."""
    x, y = rng.uniform(-2, 2, size=2)
    heading = rng.uniform(-math.pi, math.pi)
    pts = [(x, y)]
    for _ in range(n_points - 1):
        heading += rng.uniform(-turn, turn)
        d = rng.uniform(step_lo, step_hi)
        x, y = x + d * math.cos(heading), y + d * math.sin(heading)
        pts.append((x, y))
    return pts
