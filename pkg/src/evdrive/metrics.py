"""Infraction detection over world traces and leaderboard-style scoring."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .config import DEFAULT_COEFFICIENTS, MetricsConfig
from .geometry import boxes_overlap
from .world import ActorKind, Phase, WorldState


class InfractionType(str, Enum):
    COLLISION_PEDESTRIAN = "collision_pedestrian"
    COLLISION_VEHICLE = "collision_vehicle"
    COLLISION_LAYOUT = "collision_layout"
    RED_LIGHT = "red_light"
    STOP_SIGN = "stop_sign"
    ROUTE_DEVIATION = "route_deviation"
    TIMEOUT = "timeout"
    BLOCKED = "blocked"


TABLE_ROWS = {
    InfractionType.COLLISION_PEDESTRIAN: "Collision (Pedestrian)",
    InfractionType.COLLISION_VEHICLE: "Collision (Vehicle)",
    InfractionType.COLLISION_LAYOUT: "Collision (Layout)",
    InfractionType.RED_LIGHT: "Red Light Infraction",
    InfractionType.STOP_SIGN: "Stop Sign Infraction",
    InfractionType.ROUTE_DEVIATION: "Route Deviation",
    InfractionType.TIMEOUT: "Route Timeout",
    InfractionType.BLOCKED: "Vehicle Blocked",
}

TERMINAL = {InfractionType.COLLISION_PEDESTRIAN, InfractionType.COLLISION_VEHICLE,
            InfractionType.COLLISION_LAYOUT, InfractionType.ROUTE_DEVIATION,
            InfractionType.TIMEOUT, InfractionType.BLOCKED}

_COLLISION_BY_KIND = {
    ActorKind.PEDESTRIAN: InfractionType.COLLISION_PEDESTRIAN,
    ActorKind.VEHICLE: InfractionType.COLLISION_VEHICLE,
    ActorKind.STATIC: InfractionType.COLLISION_LAYOUT,
}


@dataclass(frozen=True)
class Infraction:
    tick: int
    type: InfractionType
    x: float
    y: float
    detail: str = ""


class InfractionMonitor:
    """Consumes world states one tick at a time and records debounced infractions."""

    def __init__(self, cfg: MetricsConfig = MetricsConfig()):
        self.cfg = cfg
        self.log: list[Infraction] = []
        self._prev: WorldState | None = None
        self._touching: set[int] = set()
        self._off_road = False
        self._deviating = False
        self._still_since: float | None = None
        self._blocked = False

    def _add(self, world: WorldState, kind: InfractionType, detail: str = "") -> Infraction:
        rec = Infraction(world.step, kind, world.ego.x, world.ego.y, detail)
        self.log.append(rec)
        return rec

    def _crossed(self, line, prev: WorldState, world: WorldState) -> bool:
        a = line.longitudinal(prev.ego.x, prev.ego.y)
        b = line.longitudinal(world.ego.x, world.ego.y)
        return a < 0.0 <= b and abs(line.lateral(world.ego.x, world.ego.y)) <= self.cfg.line_half_width

    def update(self, world: WorldState) -> list[Infraction]:
        start = len(self.log)
        ego = world.ego
        corners = ego.corners()
        touching = set()
        for a in world.actors:
            if boxes_overlap(corners, a.corners()):
                touching.add(a.id)
                if a.id not in self._touching:
                    self._add(world, _COLLISION_BY_KIND[a.kind], f"actor {a.id}")
        self._touching = touching
        if world.layout is not None:
            off = not world.layout.contains_box(corners)
            if off and not self._off_road:
                self._add(world, InfractionType.COLLISION_LAYOUT, "left drivable area")
            self._off_road = off
        _, lateral = world.route.line.project(ego.pos)
        dev = lateral > self.cfg.deviation_m
        if dev and not self._deviating:
            self._add(world, InfractionType.ROUTE_DEVIATION, f"{lateral:.2f} m off route")
        self._deviating = dev
        prev = self._prev
        if prev is not None:
            for tl in world.traffic_lights:
                if tl.phase == Phase.RED and self._crossed(tl, prev, world):
                    self._add(world, InfractionType.RED_LIGHT, f"light {tl.id}")
            for s in world.layout.stop_signs if world.layout else ():
                if ego.v > self.cfg.stop_sign_speed and self._crossed(s, prev, world):
                    self._add(world, InfractionType.STOP_SIGN)
        if ego.v < self.cfg.blocked_speed:
            if self._still_since is None:
                self._still_since = world.time
            if world.time - self._still_since > self.cfg.blocked_s and not self._blocked:
                self._blocked = True
                self._add(world, InfractionType.BLOCKED)
        else:
            self._still_since = None
            self._blocked = False
        self._prev = world
        return self.log[start:]


def detect_infractions(trace: Iterable[WorldState], cfg: MetricsConfig = MetricsConfig()) -> list[Infraction]:
    mon = InfractionMonitor(cfg)
    n = 0
    for world in trace:
        mon.update(world)
        n += 1
    if n == 0:
        raise ValueError("empty trace")
    return mon.log


@dataclass
class ScoreReport:
    route_completion: float
    infraction_score: float
    driving_score: float
    distance_km: float
    rates: dict[str, float]
    counts: dict[str, int]
    coefficients: dict[str, float]
    rates_undefined: bool = False
    extra: dict = field(default_factory=dict)

    def rows(self) -> list[tuple[str, str]]:
        rows = [("Driving Score (DS)", f"{self.driving_score:.3f}"),
                ("Route Completion (RC)", f"{self.route_completion:.3f}%"),
                ("Infraction Score (IS)", f"{self.infraction_score:.3f}")]
        for kind, name in TABLE_ROWS.items():
            rows.append((name, f"{self.rates[kind.value]:.3f} /km"))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Metric", "Value"])
        w.writerows(self.rows())
        for k, v in sorted(self.coefficients.items()):
            w.writerow([f"coefficient {k}", f"{v:.2f}"])
        w.writerow(["distance_km", f"{self.distance_km:.4f}"])
        if self.rates_undefined:
            w.writerow(["rates_undefined", "true"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def score(log: Iterable[Infraction], route_done: float, distance_km: float,
          coefficients: Mapping[str, float] = DEFAULT_COEFFICIENTS) -> ScoreReport:
    """IS is the product of per-infraction coefficients; DS = RC x IS."""
    log = list(log)
    if not 0.0 <= route_done <= 100.0:
        raise ValueError("route completion is a percentage")
    infraction_score = 1.0
    counts = {k.value: 0 for k in InfractionType}
    for rec in log:
        kind = InfractionType(rec.type)
        counts[kind.value] += 1
        infraction_score *= coefficients[kind.value]
    undefined = not distance_km > 0.0
    rates = {k: (0.0 if undefined else c / distance_km) for k, c in counts.items()}
    return ScoreReport(
        route_completion=route_done,
        infraction_score=infraction_score,
        driving_score=route_done * infraction_score,
        distance_km=distance_km,
        rates=rates,
        counts=counts,
        coefficients=dict(coefficients),
        rates_undefined=undefined,
    )


def mean_report(reports: list[ScoreReport]) -> dict[str, float]:
    n = len(reports)
    return {
        "route_completion": math.fsum(r.route_completion for r in reports) / n,
        "infraction_score": math.fsum(r.infraction_score for r in reports) / n,
        "driving_score": math.fsum(r.driving_score for r in reports) / n,
    }
