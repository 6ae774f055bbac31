"""Closed-loop scenario runs, trace persistence and batch execution."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .agent import AgentState, TraceRecord, agent_tick
from .metrics import TERMINAL, Infraction, InfractionMonitor, InfractionType, ScoreReport, mean_report, score
from .perception import route_progress
from .scenario import ScenarioConfig, load_scenario
from .world import WorldState, step_kinematics


class RunError(RuntimeError):
    pass


@dataclass
class RunResult:
    scenario: str
    seed: int
    report: ScoreReport
    infractions: list[Infraction]
    termination: str  # "completed" or the terminating infraction type
    ticks: int
    records: list[TraceRecord] = field(repr=False)
    worlds: list[WorldState] = field(repr=False, default_factory=list)
    trace_path: str | None = None
    wall_time: float = 0.0

    @property
    def terminated_by_infraction(self) -> bool:
        return self.termination not in ("completed",)


def run_scenario(config: ScenarioConfig, seed: int = 0, trace_path=None, keep_worlds: bool = False) -> RunResult:
    """Run until the goal, a terminal infraction (collision, deviation, blocked) or timeout."""
    t_start = time.perf_counter()
    cfg = config.sim
    world = load_scenario(config)
    agent = AgentState.create(cfg, seed)
    monitor = InfractionMonitor(cfg.metrics)
    monitor.update(world)
    line = world.route.line
    max_ticks = int(round(cfg.run.timeout_s / cfg.physics.dt))
    records: list[TraceRecord] = []
    worlds = [world] if keep_worlds else []
    progress = route_progress(world)
    best = progress
    distance = 0.0
    termination = None
    while termination is None:
        try:
            agent, cmd, rec = agent_tick(agent, world)
            nxt = step_kinematics(world, cmd, cfg.physics.dt, cfg.physics)
        except Exception as exc:
            raise RunError(f"{config.id} seed {seed} tick {world.step}: {exc}") from exc
        records.append(rec)
        distance += math.hypot(nxt.ego.x - world.ego.x, nxt.ego.y - world.ego.y)
        world = nxt
        if keep_worlds:
            worlds.append(world)
        new = monitor.update(world)
        progress = route_progress(world, progress)
        best = max(best, progress)
        terminal = [r for r in new if r.type in TERMINAL]
        if line.length - best <= cfg.run.goal_tolerance:
            termination = "completed"
        elif terminal:
            termination = terminal[0].type.value
        elif world.step >= max_ticks:
            monitor.log.append(Infraction(world.step, InfractionType.TIMEOUT, world.ego.x, world.ego.y))
            termination = InfractionType.TIMEOUT.value
    rc = 100.0 if termination == "completed" else 100.0 * min(best / line.length, 1.0)
    report = score(monitor.log, rc, distance / 1000.0, cfg.metrics.coefficients)
    report.extra = {"scenario": config.id, "seed": seed, "termination": termination, "ticks": len(records)}
    if trace_path is not None:
        write_trace(trace_path, records)
    return RunResult(config.id, seed, report, list(monitor.log), termination, len(records), records, worlds,
                     None if trace_path is None else str(trace_path), time.perf_counter() - t_start)


def write_trace(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def read_trace(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


BATCH_FIELDS = ["scenario", "seed", "status", "termination", "route_completion", "infraction_score",
                "driving_score", "distance_km"] + [k.value for k in InfractionType] + ["error"]


def _batch_job(args):
    config, seed, trace_dir = args
    try:
        trace = None if trace_dir is None else Path(trace_dir) / f"{config.id}_seed{seed}.jsonl"
        res = run_scenario(config, seed, trace)
        r = res.report
        row = {"scenario": config.id, "seed": seed, "status": "ok", "termination": res.termination,
               "route_completion": f"{r.route_completion:.3f}", "infraction_score": f"{r.infraction_score:.6f}",
               "driving_score": f"{r.driving_score:.3f}", "distance_km": f"{r.distance_km:.6f}", "error": ""}
        row.update({k: r.counts[k] for k in r.counts})
        return row, r
    except Exception as exc:  # recorded, batch continues
        row = {k: "" for k in BATCH_FIELDS}
        row.update(scenario=config.id, seed=seed, status="error", error=f"{type(exc).__name__}: {exc}")
        return row, None


def run_batch(configs, seeds, parallelism: int = 1, trace_dir=None) -> str:
    """One CSV row per (scenario, seed) plus a mean row over successful runs."""
    configs = list(configs)
    if not configs:
        raise ValueError("batch needs at least one scenario")
    jobs = [(c, s, trace_dir) for c in configs for s in seeds]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_batch_job, jobs))
    else:
        results = [_batch_job(j) for j in jobs]
    buf = io.StringIO()
    w = csv.DictWriter(buf, BATCH_FIELDS, lineterminator="\n")
    w.writeheader()
    for row, _ in results:
        w.writerow(row)
    ok = [r for _, r in results if r is not None]
    mean = {k: "" for k in BATCH_FIELDS}
    mean.update(scenario="mean", status=f"{len(ok)}/{len(results)} ok")
    if ok:
        m = mean_report(ok)
        mean.update(route_completion=f"{m['route_completion']:.3f}", infraction_score=f"{m['infraction_score']:.6f}",
                    driving_score=f"{m['driving_score']:.3f}")
    w.writerow(mean)
    return buf.getvalue()
