"""The per-tick agent: perceive, track, plan, control, then the safety gate."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .config import SimConfig
from .control import (PidState, curvature_speed, heading_error, lateral_pid, longitudinal_pid,
                      select_target_waypoint)
from .geometry import to_world
from .perception import (PerceptionOutput, detections_to_world, oracle_waypoints, perceive_noisy,
                         relevant_light, route_progress)
from .safety import (TlState, TrafficLightFsm, desired_speed, project_clearances, safe_distance,
                     safety_gate, tl_update)
from .tracking import Tracker
from .world import ControlCommand, TrafficLight, WorldState


@dataclass
class AgentState:
    cfg: SimConfig
    seed: int
    tracker: Tracker
    fsm: TrafficLightFsm
    lat: PidState
    lon: PidState
    perception: PerceptionOutput | None = None
    progress: float | None = None  # route cursor (arc length)
    crossover_light: TrafficLight | None = None

    @classmethod
    def create(cls, cfg: SimConfig, seed: int = 0) -> "AgentState":
        c = cfg.control
        return cls(
            cfg=cfg,
            seed=seed,
            tracker=Tracker(cfg.tracking, cfg.physics.dt),
            fsm=TrafficLightFsm(),
            lat=PidState(c.lat_kp, c.lat_ki, c.lat_kd, c.i_clamp),
            lon=PidState(c.lon_kp, c.lon_ki, c.lon_kd, c.i_clamp),
        )


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    time: float
    ego: dict
    target: tuple[float, float]
    theta_e: float
    clearances: tuple[float, ...]
    d_safe: float
    v_cmd: float
    v_target: float
    command: dict
    fsm: str
    override: str | None
    detections: int
    tracks: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))


def _local_to_world(pts: np.ndarray, ego) -> np.ndarray:
    wx, wy = to_world(pts[:, 0], pts[:, 1], ego.x, ego.y, ego.yaw)
    return np.column_stack([wx, wy])


def agent_tick(agent: AgentState, world: WorldState) -> tuple[AgentState, ControlCommand, TraceRecord]:
    cfg = agent.cfg
    sc, cc, pc = cfg.safety, cfg.control, cfg.perception
    dt = cfg.physics.dt
    ego = world.ego

    agent.progress = route_progress(world, agent.progress)
    perc = perceive_noisy(world, pc, agent.seed, sc.junction_radius, agent.progress)
    agent.perception = perc
    tracks = agent.tracker.update(detections_to_world(perc.detections, ego))

    plan = _local_to_world(perc.waypoints, ego)
    target = select_target_waypoint(plan, ego, cc.d_min, cc.d_max)
    try:
        theta_e = heading_error(ego, target)
    except ValueError:
        theta_e = 0.0
    agent.lat, steer = lateral_pid(agent.lat, theta_e, dt)

    n_plan = max(1, int(math.ceil(sc.plan_length / pc.waypoint_spacing)))
    safety_plan = _local_to_world(
        oracle_waypoints(world, n_plan, pc.waypoint_spacing, agent.progress), ego)
    clear = project_clearances(tracks, safety_plan, ego, sc)
    d_safe = safe_distance(clear, sc.d_buffer)
    v_cmd = desired_speed(clear.buffered(sc.opt_buffer), ego.v, sc.v_max, sc)
    if d_safe < max(sc.emergency_floor, ego.v):
        v_cmd = 0.0
    v_target = min(curvature_speed(theta_e, sc.v_max, cc.k_curv, cc.min_curve_factor), v_cmd)
    agent.lon, throttle, brake = longitudinal_pid(agent.lon, v_target, ego.v, dt, cc.hard_stop_speed)
    pid_cmd = ControlCommand(steer, throttle, brake)

    cleared = (agent.crossover_light is not None
               and agent.crossover_light.longitudinal(ego.x, ego.y) > sc.crossover_clear)
    was = agent.fsm.state
    agent.fsm, must_stop = tl_update(agent.fsm, perc.tl, perc.junction_prob > 0.5, ego.v, cleared, sc)
    if agent.fsm.state == TlState.FORCED_CROSSOVER and was != TlState.FORCED_CROSSOVER:
        hit = relevant_light(world)
        agent.crossover_light = hit[0] if hit else None
    elif agent.fsm.state != TlState.FORCED_CROSSOVER:
        agent.crossover_light = None

    cmd, reason = safety_gate(pid_cmd, must_stop, v_cmd, ego.v, sc)
    record = TraceRecord(
        tick=world.step,
        time=world.time,
        ego={"x": ego.x, "y": ego.y, "yaw": ego.yaw, "v": ego.v},
        target=target,
        theta_e=theta_e,
        clearances=clear.values,
        d_safe=d_safe,
        v_cmd=v_cmd,
        v_target=v_target,
        command={"steer": cmd.steer, "throttle": cmd.throttle, "brake": cmd.brake},
        fsm=agent.fsm.state.value,
        override=None if reason is None else reason.value,
        detections=len(perc.detections),
        tracks=len(tracks),
    )
    return agent, cmd, record
