"""Render a scenario from above, turn it into events and save accumulated frames.

Writes ``events.evt`` plus one PGM per accumulation window into ``--out``.
"""

import argparse
from pathlib import Path

import numpy as np

from evdrive.agent import AgentState, agent_tick
from evdrive.events import (CameraConfig, EventSynthesizer, Mode, accumulate, frame_sidecar, render_intensity,
                            write_events, write_pgm)
from evdrive.scenario import ScenarioConfig, load_scenario
from evdrive.world import step_kinematics


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="C")
    ap.add_argument("--ticks", type=int, default=80)
    ap.add_argument("--threshold", type=float, default=0.2)
    ap.add_argument("--window-us", type=int, default=50_000)
    ap.add_argument("--out", default="event_demo")
    args = ap.parse_args()

    cfg = ScenarioConfig.builtin(args.scenario)
    world = load_scenario(cfg)
    agent = AgentState.create(cfg.sim)
    cam = CameraConfig(width=160, height=96, follow_ego=True)
    syn = EventSynthesizer(args.threshold)
    chunks = []
    for _ in range(args.ticks):
        chunks.append(syn.feed(render_intensity(world, cam)))
        agent, cmd, _ = agent_tick(agent, world)
        world = step_kinematics(world, cmd, cfg.sim.physics.dt, cfg.sim.physics)
    events = np.concatenate(chunks)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_events(out / "events.evt", events, cam.width, cam.height)
    t_end = int(events["t"].max()) if len(events) else 0
    n = 0
    for t0 in range(0, t_end, args.window_us):
        fr = accumulate(events, (t0, t0 + args.window_us), (cam.height, cam.width), Mode.POLARITY_SUM,
                        normalize=True)
        write_pgm(out / f"{n:04d}.pgm", fr.values, signed=True)
        (out / f"{n:04d}.json").write_text(frame_sidecar(fr))
        n += 1
    on, off = int((events["p"] > 0).sum()), int((events["p"] < 0).sum())
    print(f"{len(events)} events ({on} on, {off} off) over {args.ticks} ticks -> {n} frames in {out}")


if __name__ == "__main__":
    main()
