import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evdrive.world import Actor, ActorKind, EgoState, Phase, Route, TrafficLight, WorldState

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_world(ego=None, actors=(), lights=(), route=None, step=0, layout=None):
    ego = ego or EgoState(0.0, 0.0, 0.0, 0.0)
    route = route or Route(((0.0, 0.0), (100.0, 0.0)))
    return WorldState(step * 0.05, step, ego, tuple(actors), tuple(lights), route, layout)


def vehicle(id=1, x=10.0, y=0.0, yaw=0.0, kind=ActorKind.VEHICLE, **kw):
    return Actor(id, kind, x, y, yaw, **kw)


def red_light(x=30.0, y=0.0):
    return TrafficLight(1, x, y, 0.0, ((0.0, Phase.RED),), phase=Phase.RED)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def straight_world():
    return make_world()


def angle_close(a, b, tol=1e-12):
    return abs(math.remainder(a - b, 2 * math.pi)) <= tol


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    verdicts = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            title = dict(getattr(rep, "user_properties", ())).get("criterion")
            if title is None or rep.when not in ("call", "setup"):
                continue
            ok = rep.passed and verdicts.get(title, True)
            verdicts[title] = ok
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for title in sorted(verdicts):
        terminalreporter.write_line(f"{'PASS' if verdicts[title] else 'FAIL'}  criterion {title}")
