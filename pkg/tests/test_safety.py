import math

import pytest
from hypothesis import given, strategies as st
from shapely.geometry import LineString, Polygon

from evdrive.config import SafetyConfig
from evdrive.geometry import box_corners
from evdrive.perception import TrafficLightBelief
from evdrive.safety import (HorizonClearances, Override, TlState, TrafficLightFsm, desired_speed,
                            project_clearances, safe_distance, safety_gate, tl_update)
from evdrive.tracking import TrackedObject
from evdrive.world import ControlCommand, EgoState

RED = TrafficLightBelief(1.0, 0.0, 0.0)
GREEN = TrafficLightBelief(0.0, 0.0, 1.0)
HORIZONS = SafetyConfig().horizons
STRAIGHT = [(float(k), 0.0) for k in range(1, 41)]


def track(x, y, vx=0.0, vy=0.0, yaw=0.0, w=2.0, l=4.0):
    return TrackedObject(1, x, y, vx, vy, yaw, 1.0, w, l)


def clear(**d):
    vals = {0.0: 100.0, 0.5: 100.0, 0.75: 100.0, 1.0: 100.0, 1.5: 100.0, 2.0: 100.0}
    vals.update({float(k[1:].replace("_", ".")): v for k, v in d.items()})
    return HorizonClearances(HORIZONS, tuple(vals[h] for h in HORIZONS))


# traffic-light state machine

def test_green_never_stops():
    fsm = TrafficLightFsm()
    for _ in range(50):
        fsm, stop = tl_update(fsm, GREEN, True, 0.0)
        assert not stop


def test_red_confirms_after_n_ticks():
    fsm, flags = TrafficLightFsm(), []
    for _ in range(4):
        fsm, stop = tl_update(fsm, RED, True, 5.0)
        flags.append(stop)
    assert flags == [False, False, True, True]
    assert fsm.state == TlState.STOPPED_AT_RED


def test_red_far_from_junction_ignored():
    fsm = TrafficLightFsm()
    for _ in range(10):
        fsm, stop = tl_update(fsm, RED, False, 5.0)
        assert not stop


def test_forced_crossover_on_stop_tick_1001():
    fsm = TrafficLightFsm()
    for _ in range(3):
        fsm, _ = tl_update(fsm, RED, True, 2.0)  # confirm while still rolling
    assert fsm.stop_ticks == 0
    for k in range(1, 1001):
        fsm, stop = tl_update(fsm, RED, True, 0.0)
        assert stop and fsm.stop_ticks == k
    fsm, stop = tl_update(fsm, RED, True, 0.0)
    assert fsm.state == TlState.FORCED_CROSSOVER and not stop and fsm.stop_ticks == 0
    for _ in range(100):
        fsm, stop = tl_update(fsm, RED, True, 0.0)
        assert not stop
    fsm, stop = tl_update(fsm, RED, True, 3.0, cleared=True)
    assert fsm.state == TlState.DRIVING and not stop


def test_green_resets_stop():
    fsm = TrafficLightFsm(TlState.STOPPED_AT_RED, 5, 400)
    fsm, stop = tl_update(fsm, GREEN, True, 0.0)
    assert fsm == TrafficLightFsm() and not stop


beliefs = st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)).filter(lambda p: sum(p) > 0.01).map(
    lambda p: TrafficLightBelief(*(q / sum(p) for q in p)))


@given(st.lists(st.tuples(beliefs, st.booleans(), st.floats(0, 10), st.booleans()), max_size=80))
def test_fsm_invariants(steps):
    cfg = SafetyConfig(crossover_ticks=10)
    fsm = TrafficLightFsm()
    for b, near, v, cleared in steps:
        prev = fsm
        fsm, stop = tl_update(fsm, b, near, v, cleared, cfg)
        if fsm.state == TlState.FORCED_CROSSOVER:
            assert not stop
            assert prev.state in (TlState.STOPPED_AT_RED, TlState.FORCED_CROSSOVER)
        if fsm.state != TlState.STOPPED_AT_RED:
            assert fsm.stop_ticks == 0
        assert fsm.red_counter >= 0


# clearances

def test_no_tracks_gives_sentinel():
    cl = project_clearances([], STRAIGHT, EgoState(0, 0, 0, 5.0))
    assert cl.values == (100.0,) * 6


def test_static_obstacle_dead_ahead():
    cl = project_clearances([track(10.0, 0.0)], STRAIGHT, EgoState(0, 0, 0, 0.0))
    # inflation = obstacle half length 2 + ego half width 1 + margin 0.2
    assert cl.values == pytest.approx((6.8,) * 6, abs=1e-12)


@pytest.mark.parametrize("v_ego", [0.0, 2.0, 4.0])
def test_oncoming_track(v_ego):
    cl = project_clearances([track(20.0, 0.0, vx=-10.0, yaw=math.pi)], STRAIGHT, EgoState(0, 0, 0, v_ego))
    assert cl.d(1.0) == pytest.approx(max(0.0, 20 - 10 - v_ego - 3.2), abs=1e-12)
    for t in HORIZONS:
        if 20 - 10 * t > v_ego * t:  # track still ahead of the ego's path point
            assert cl.d(t) == pytest.approx(max(0.0, 20 - 10 * t - v_ego * t - 3.2), abs=1e-12)


def test_lateral_track_off_path_is_ignored():
    cl = project_clearances([track(10.0, 5.0)], STRAIGHT, EgoState(0, 0, 0, 3.0))
    assert cl.values == (100.0,) * 6


def test_crossing_track_enters_path_later():
    # walker 3 m to the side, crossing at 2 m/s: inside the inflated band from t = 0.75 s
    ped = track(12.0, -3.0, vy=2.0, yaw=math.pi / 2, w=0.6, l=0.6)
    cl = project_clearances([ped], STRAIGHT, EgoState(0, 0, 0, 0.0))
    assert cl.d(0.0) == 100.0 and cl.d(0.5) == 100.0
    assert cl.d(1.0) == pytest.approx(12 - 0.3 - 1.2, abs=1e-12)


def shapely_clearance(track_obj, plan, ego, t, cfg=SafetyConfig()):
    pts = [(ego.x, ego.y)] + list(plan)
    line = LineString(pts)
    infl = ego.half_w + cfg.margin
    box = Polygon(box_corners(track_obj.x + track_obj.vx * t, track_obj.y + track_obj.vy * t, track_obj.yaw,
                              track_obj.w / 2 + infl, track_obj.l / 2 + infl))
    s0 = ego.v * t
    best = math.inf
    # shapely boundary crossings plus the start point itself give the first entry
    if box.covers(line.interpolate(s0)):
        return 0.0
    inter = line.intersection(box)
    for g in getattr(inter, "geoms", [inter]):
        if g.is_empty:
            continue
        for c in g.coords:
            s = line.project(shapely_point(c))
            if s >= s0 - 1e-9:
                best = min(best, s - s0)
    return min(best, cfg.d_free)


def shapely_point(c):
    from shapely.geometry import Point
    return Point(c)


@given(st.floats(-8, 30), st.floats(-6, 6), st.floats(-5, 5), st.floats(-5, 5), st.floats(-math.pi, math.pi),
       st.floats(0, 6))
def test_clearance_matches_shapely_oracle(x, y, vx, vy, yaw, v):
    tr = track(x, y, vx, vy, yaw, w=1.8, l=4.2)
    ego = EgoState(0.0, 0.0, 0.0, v)
    plan = [(float(k), 0.3 * math.sin(k / 6.0)) for k in range(1, 60)]
    cl = project_clearances([tr], plan, ego)
    for t in HORIZONS:
        assert cl.d(t) == pytest.approx(shapely_clearance(tr, plan, ego, t), abs=1e-9)


def test_empty_plan_rejected():
    with pytest.raises(ValueError):
        project_clearances([], [], EgoState(0, 0, 0, 0))


# safe distance

def test_safe_distance_examples():
    assert safe_distance(HorizonClearances.free(HORIZONS), 2.5) == 97.5
    assert safe_distance(clear(d1_0=2.0), 2.5) == -0.5
    with pytest.raises(ValueError):
        safe_distance(clear(), -1.0)


@given(st.lists(st.floats(0, 100), min_size=6, max_size=6), st.floats(0, 10))
def test_safe_distance_is_min_scan(vals, b):
    best = math.inf
    for v in vals:
        if v - b < best:
            best = v - b
    assert safe_distance(HorizonClearances(HORIZONS, tuple(vals)), b) == best


# desired speed

def test_desired_speed_worked_examples():
    assert desired_speed(clear(d0_0=10, d0_5=10, d1_0=10), 5.0, 6.5) == 6.5
    assert desired_speed(clear(d0_0=2.0), 5.0, 6.5) == 0.0
    assert desired_speed(HorizonClearances(HORIZONS, (0.0,) * 6), 0.0, 6.5) == 0.0


def test_desired_speed_closed_form_binding():
    # d0.5 = 3, v = 4: 4*3 - 4 - 1.5 = 6.5 ties v_max; d1.0 = 5: 10 - 2 - 1.5 = 6.5
    assert desired_speed(clear(d0_0=5, d0_5=3, d1_0=5), 4.0, 6.5) == 6.5
    assert desired_speed(clear(d0_0=5, d0_5=2, d1_0=5), 4.0, 6.5) == pytest.approx(2.5, abs=1e-12)
    assert desired_speed(clear(d0_0=5, d0_5=10, d1_0=3), 2.0, 6.5) == pytest.approx(5.0, abs=1e-12)


dvals = st.floats(0, 60)


@given(dvals, dvals, dvals, st.floats(0, 12), st.floats(0, 5), st.sampled_from(["d0", "d05", "d10"]))
def test_desired_speed_monotone(d0, d05, d10, v, bump, which):
    base = dict(d0_0=d0, d0_5=d05, d1_0=d10)
    key = {"d0": "d0_0", "d05": "d0_5", "d10": "d1_0"}[which]
    more = dict(base, **{key: base[key] + bump})
    assert desired_speed(clear(**more), v) >= desired_speed(clear(**base), v)
    assert desired_speed(clear(**base), v + bump) <= desired_speed(clear(**base), v)
    out = desired_speed(clear(**base), v)
    assert 0.0 <= out <= 6.5


# gate

def test_gate_examples():
    pid = ControlCommand(0.3, 0.6, 0.0)
    cmd, why = safety_gate(pid, True, 5.0, 3.0)
    assert (cmd.steer, cmd.throttle, cmd.brake, why) == (0.3, 0.0, 1.0, Override.RED_LIGHT)
    cmd, why = safety_gate(pid, False, 5.0, 3.0)
    assert cmd == pid and why is None
    cmd, why = safety_gate(pid, False, 3.0, 5.0)
    assert cmd.throttle == 0.0 and cmd.brake > 0 and why == Override.OVERSHOOT
    cmd, why = safety_gate(pid, False, 0.0, 0.0)
    assert cmd.brake == 1.0 and why == Override.EMERGENCY_BRAKE


@given(st.floats(-1, 1), st.floats(0, 1), st.booleans(), st.floats(0, 10), st.floats(0, 10),
       dvals, dvals, dvals)
def test_gate_properties(steer, tau, stop, v_cmd, v, d0, d05, d10):
    pid = ControlCommand(steer, tau, 0.0)
    cmd, _ = safety_gate(pid, stop, v_cmd, v)
    assert cmd.throttle <= pid.throttle and cmd.steer == steer
    assert cmd.throttle * cmd.brake == 0
    # emergency dominance through the optimizer
    vc = desired_speed(clear(d0_0=d0, d0_5=d05, d1_0=d10), v)
    if d0 < max(3.0, v):
        assert safety_gate(pid, False, vc, v)[0].brake == 1.0
