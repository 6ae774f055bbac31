"""Ground-truth stand-in for the decoder heads: density map, traffic-light
belief, junction/stop flags and route waypoints, plus a seeded noise model."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from shapely.geometry import LineString, Polygon

from .config import PerceptionConfig
from .geometry import to_local, to_world, wrap_angle
from .world import Phase, TrafficLight, WorldState

N_CHANNELS = 7
PROB, DX, DY, WIDTH, LENGTH, HEADING, SPEED = range(N_CHANNELS)
CHANNEL_NAMES = ("prob", "dx", "dy", "w", "l", "heading", "speed")


@dataclass(frozen=True)
class DensityMap:
    """R x R x 7 grid, 1 m cells. Row i covers ego-frame x in [i, i+1);
    column j covers y in [j - R/2, j - R/2 + 1)."""

    grid: np.ndarray
    R: int

    @classmethod
    def empty(cls, R: int = 20) -> "DensityMap":
        return cls(np.zeros((R, R, N_CHANNELS)), R)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return i + 0.5, j - self.R / 2 + 0.5

    def save(self, path) -> None:
        """Flat little-endian float32 tensor plus a JSON sidecar."""
        path = Path(path)
        self.grid.astype("<f4").tofile(path)
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps({"R": self.R, "channels": list(CHANNEL_NAMES)}))

    @classmethod
    def load(cls, path) -> "DensityMap":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        R = int(meta["R"])
        grid = np.fromfile(path, "<f4").astype(float).reshape(R, R, len(meta["channels"]))
        return cls(grid, R)


@dataclass(frozen=True)
class Detection:
    """Object in the ego frame."""

    x: float
    y: float
    vx: float
    vy: float
    w: float
    l: float
    yaw: float
    confidence: float = 1.0


@dataclass(frozen=True)
class TrafficLightBelief:
    p_red: float
    p_yellow: float
    p_green: float

    def __post_init__(self):
        ps = (self.p_red, self.p_yellow, self.p_green)
        if any(p < 0 or p > 1 for p in ps) or abs(sum(ps) - 1.0) > 1e-9:
            raise ValueError(f"invalid traffic-light belief {ps}")


@dataclass(frozen=True)
class PerceptionOutput:
    density: DensityMap
    tl: TrafficLightBelief
    junction_prob: float
    stop_prob: float
    waypoints: np.ndarray  # (L, 2) ego frame
    detections: tuple[Detection, ...] = field(default=())


def visible_actors(world: WorldState):
    """Actors whose centre is in line of sight from the ego centre."""
    ego = (world.ego.x, world.ego.y)
    boxes = {a.id: Polygon(a.corners()) for a in world.actors}
    out = []
    for a in world.actors:
        ray = LineString([ego, (a.x, a.y)])
        if not any(oid != a.id and ray.intersects(box) for oid, box in boxes.items()):
            out.append(a)
    return tuple(out)


def ground_truth_density(world: WorldState, R: int = 20, actors=None) -> DensityMap:
    """Rasterise actor centres inside the forward window into a density map.

    When two actors share a cell the one nearer the cell centre wins.
    """
    grid = np.zeros((R, R, N_CHANNELS))
    best = np.full((R, R), np.inf)
    e = world.ego
    for a in sorted(world.actors if actors is None else actors, key=lambda a: a.id):
        lx, ly = (float(v) for v in to_local(a.x, a.y, e.x, e.y, e.yaw))
        if not (0.0 <= lx < R and -R / 2 <= ly < R / 2):
            continue
        i, j = int(math.floor(lx)), int(math.floor(ly + R / 2))
        cx, cy = i + 0.5, j - R / 2 + 0.5
        d = math.hypot(lx - cx, ly - cy)
        if d >= best[i, j]:
            continue
        best[i, j] = d
        grid[i, j] = (1.0, lx - cx, ly - cy, 2 * a.half_w, 2 * a.half_l,
                      wrap_angle(a.yaw - e.yaw), a.speed)
    return DensityMap(grid, R)


def extract_detections(density: DensityMap, threshold: float = 0.1) -> tuple[Detection, ...]:
    """Peak extraction: one detection per cell whose probability reaches ``threshold``."""
    g = density.grid
    out = []
    for i, j in zip(*np.nonzero(g[:, :, PROB] >= threshold)):
        c = g[i, j]
        cx, cy = density.cell_center(int(i), int(j))
        out.append(Detection(
            x=cx + c[DX], y=cy + c[DY],
            vx=c[SPEED] * math.cos(c[HEADING]), vy=c[SPEED] * math.sin(c[HEADING]),
            w=c[WIDTH], l=c[LENGTH], yaw=c[HEADING], confidence=min(1.0, c[PROB]),
        ))
    return tuple(out)


def detections_to_world(dets, ego) -> list[Detection]:
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    out = []
    for d in dets:
        x, y = to_world(d.x, d.y, ego.x, ego.y, ego.yaw)
        out.append(dataclasses.replace(
            d, x=float(x), y=float(y), vx=c * d.vx - s * d.vy, vy=s * d.vx + c * d.vy,
            yaw=wrap_angle(d.yaw + ego.yaw)))
    return out


def route_progress(world: WorldState, s_hint: float | None = None, window: float = 30.0) -> float:
    """Arc length of the ego's projection onto the route."""
    line = world.route.line
    if s_hint is None:
        s, _ = line.project(world.ego.pos)
    else:
        s, _ = line.project(world.ego.pos, s_hint - 1.0, s_hint + window)
    return s


def oracle_waypoints(world: WorldState, L: int = 10, spacing: float = 1.0,
                     s_hint: float | None = None) -> np.ndarray:
    """L route points ahead of the ego at ``spacing`` metres, in the ego frame.

    Past the route end the final point is repeated.
    """
    line = world.route.line
    s0 = route_progress(world, s_hint)
    pts = np.array([line.point_at(s0 + k * spacing) for k in range(1, L + 1)])
    e = world.ego
    lx, ly = to_local(pts[:, 0], pts[:, 1], e.x, e.y, e.yaw)
    return np.column_stack([lx, ly])


def relevant_light(world: WorldState, max_range: float = 50.0,
                   half_width: float = 3.0) -> tuple[TrafficLight, float] | None:
    """Nearest light governing the ego lane whose stop line is ahead of the ego."""
    best = None
    e = world.ego
    for tl in world.traffic_lights:
        if not tl.affects_ego_lane:
            continue
        dist = -tl.longitudinal(e.x, e.y)
        if 0.0 <= dist <= max_range and abs(tl.lateral(e.x, e.y)) <= half_width:
            if best is None or dist < best[1]:
                best = (tl, dist)
    return best


def distance_to_junction(world: WorldState) -> float:
    hit = relevant_light(world)
    return math.inf if hit is None else hit[1]


def distance_to_stop_sign(world: WorldState, max_range: float = 50.0, half_width: float = 3.0) -> float:
    e = world.ego
    best = math.inf
    for s in world.layout.stop_signs if world.layout else ():
        dist = -s.longitudinal(e.x, e.y)
        if 0.0 <= dist <= max_range and abs(s.lateral(e.x, e.y)) <= half_width:
            best = min(best, dist)
    return best


_PHASES = (Phase.RED, Phase.YELLOW, Phase.GREEN)


def tl_belief(world: WorldState, flip_prob: float = 0.0, seed=None) -> TrafficLightBelief:
    """Softened one-hot on the true phase; with probability ``flip_prob`` the
    mass lands on a random other phase instead. No governing light reads as green."""
    if not 0.0 <= flip_prob < 0.5:
        raise ValueError("flip_prob must be in [0, 0.5)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    hit = relevant_light(world)
    true = hit[0].phase if hit else Phase.GREEN
    idx = _PHASES.index(true)
    if flip_prob > 0 and rng.random() < flip_prob:
        others = [k for k in range(3) if k != idx]
        idx = others[int(rng.integers(2))]
    p = [flip_prob / 2.0] * 3
    p[idx] = 1.0 - flip_prob
    return TrafficLightBelief(*p)


def perceive(world: WorldState, cfg: PerceptionConfig = PerceptionConfig(), junction_radius: float = 15.0,
             s_hint: float | None = None) -> PerceptionOutput:
    """Noise-free oracle output for one tick."""
    actors = visible_actors(world) if cfg.occlusion else world.actors
    density = ground_truth_density(world, cfg.R, actors)
    return PerceptionOutput(
        density=density,
        tl=tl_belief(world, 0.0),
        junction_prob=1.0 if distance_to_junction(world) < junction_radius else 0.0,
        stop_prob=1.0 if distance_to_stop_sign(world) < junction_radius else 0.0,
        waypoints=oracle_waypoints(world, cfg.n_waypoints, cfg.waypoint_spacing, s_hint),
        detections=extract_detections(density, cfg.peak_threshold),
    )


def corrupt(output: PerceptionOutput, noise: PerceptionConfig, seed=None) -> PerceptionOutput:
    """Detector imperfection: misses, false positives, meta jitter, confidences.

    All randomness comes from ``seed`` (an int or a numpy Generator).
    """
    for name in ("p_miss", "p_fp", "conf_lo", "conf_hi", "fp_conf_lo", "fp_conf_hi"):
        if not 0.0 <= getattr(noise, name) <= 1.0:
            raise ValueError(f"{name} must be in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    grid = output.density.grid.copy()
    R = output.density.R
    occupied = list(zip(*np.nonzero(grid[:, :, PROB] > 0)))
    for i, j in occupied:
        if noise.p_miss > 0 and rng.random() < noise.p_miss:
            grid[i, j] = 0.0
            continue
        cell = grid[i, j]
        if noise.conf_hi > noise.conf_lo:
            cell[PROB] = rng.uniform(noise.conf_lo, noise.conf_hi)
        elif noise.conf_lo != 1.0:
            cell[PROB] = noise.conf_lo
        if noise.sigma_offset > 0:
            cell[DX:DY + 1] = np.clip(cell[DX:DY + 1] + rng.normal(0, noise.sigma_offset, 2), -0.5, 0.5)
        if noise.sigma_size > 0:
            cell[WIDTH:LENGTH + 1] = np.maximum(cell[WIDTH:LENGTH + 1] + rng.normal(0, noise.sigma_size, 2), 0.1)
        if noise.sigma_heading > 0:
            cell[HEADING] = wrap_angle(cell[HEADING] + rng.normal(0, noise.sigma_heading))
        if noise.sigma_speed > 0:
            cell[SPEED] = max(0.0, cell[SPEED] + rng.normal(0, noise.sigma_speed))
    if noise.p_fp > 0 and rng.random() < noise.p_fp:
        free = np.argwhere(grid[:, :, PROB] == 0)
        if len(free):
            i, j = free[rng.integers(len(free))]
            grid[i, j] = (rng.uniform(noise.fp_conf_lo, noise.fp_conf_hi), rng.uniform(-0.5, 0.5),
                          rng.uniform(-0.5, 0.5), 0.6, 0.6, rng.uniform(-math.pi, math.pi), 0.0)
    grid[:, :, PROB] = np.clip(grid[:, :, PROB], 0.0, 1.0)
    waypoints = output.waypoints
    if noise.sigma_waypoint > 0:
        waypoints = waypoints + rng.normal(0, noise.sigma_waypoint, waypoints.shape)
    density = DensityMap(grid, R)
    return dataclasses.replace(output, density=density, waypoints=waypoints,
                               detections=extract_detections(density, noise.peak_threshold))


def perceive_noisy(world: WorldState, cfg: PerceptionConfig, seed: int, junction_radius: float = 15.0,
                   s_hint: float | None = None) -> PerceptionOutput:
    """Oracle plus corruption, with randomness keyed on (seed, step)."""
    out = perceive(world, cfg, junction_radius, s_hint)
    rng = np.random.default_rng([seed, world.step])
    if cfg.tl_flip > 0:
        out = dataclasses.replace(out, tl=tl_belief(world, cfg.tl_flip, rng))
    return corrupt(out, cfg, rng)
