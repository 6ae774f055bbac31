import csv
import dataclasses
import io
import json

import numpy as np
import pytest

from conftest import make_world, red_light
from evdrive.agent import AgentState, agent_tick
from evdrive.cli import EXIT_ERROR, EXIT_OK, main, parse_seeds
from evdrive.config import SimConfig
from evdrive.events import read_events, write_pgm
from evdrive.runner import read_trace, run_batch, run_scenario
from evdrive.scenario import ScenarioConfig
from evdrive.world import EgoState, step_kinematics


def closed_loop(world, n, seed=0):
    agent = AgentState.create(SimConfig(), seed)
    out = []
    for _ in range(n):
        agent, cmd, rec = agent_tick(agent, world)
        out.append((cmd, rec))
        world = step_kinematics(world, cmd, 0.05)
    return out


# agent tick

def test_free_road_accelerates_straight():
    out = closed_loop(make_world(), 10)
    cmd, rec = out[-1]
    assert cmd.throttle > 0 and cmd.brake == 0 and abs(cmd.steer) < 0.05
    assert rec.override is None and rec.fsm == "Driving"


def test_red_light_brakes_within_confirm_window():
    world = make_world(EgoState(20.0, 0.0, 0.0, 5.0), lights=[red_light(30.0)])
    agent = AgentState.create(SimConfig())
    brakes = []
    for k in range(5):  # N_confirm + 2
        agent, cmd, rec = agent_tick(agent, world.at_step(k, world.ego))
        brakes.append(cmd.brake)
    assert brakes[-1] == 1.0 and brakes.index(1.0) <= 4
    assert rec.override == "red_light"


def test_agent_tick_deterministic():
    a = [r.to_json() for _, r in closed_loop(make_world(), 40, seed=3)]
    b = [r.to_json() for _, r in closed_loop(make_world(), 40, seed=3)]
    assert a == b


# scenario runs

def test_scenario_c_stops_short_of_walker():
    res = run_scenario(ScenarioConfig.builtin("C"), keep_worlds=True)
    assert res.termination == "completed" and res.infractions == []
    gaps = []
    for w in res.worlds:
        for a in w.actors:
            if a.kind.value == "pedestrian":
                gaps.append(np.hypot(a.x - w.ego.x, a.y - w.ego.y) - 2.25)
    assert min(gaps) > 0


@pytest.mark.parametrize("sid", ["B", "free"])
def test_scenarios_complete_clean(sid):
    r = run_scenario(ScenarioConfig.builtin(sid)).report
    assert (r.route_completion, r.infraction_score) == (100.0, 1.0)


def test_trace_written_and_readable(tmp_path):
    res = run_scenario(ScenarioConfig.builtin("free"), 0, tmp_path / "t.jsonl")
    recs = read_trace(tmp_path / "t.jsonl")
    assert len(recs) == res.ticks and [r["tick"] for r in recs] == list(range(res.ticks))


def test_batch_rows_and_parallel_equivalence():
    cfgs = [ScenarioConfig.builtin(s) for s in ("free", "B", "C")]
    serial = run_batch(cfgs, [0])
    rows = list(csv.DictReader(io.StringIO(serial)))
    assert [r["scenario"] for r in rows][-1] == "mean" and len(rows) == 4
    assert all(r["status"] == "ok" for r in rows[:-1])
    assert run_batch(cfgs, [0]) == serial
    assert run_batch(cfgs, [0], parallelism=4) == serial


def test_batch_records_failures():
    good = ScenarioConfig.builtin("free")
    # a one-point route only fails once the world is built, inside the worker
    bad = dataclasses.replace(good, id="broken", doc={**good.doc, "route": {"waypoints": [[0.0, 0.0]]}})
    rows = list(csv.DictReader(io.StringIO(run_batch([bad, ScenarioConfig.builtin("free")], [0]))))
    assert rows[0]["status"] == "error" and rows[1]["status"] == "ok"
    assert rows[-1]["status"] == "1/2 ok"


# command line

def test_parse_seeds():
    assert parse_seeds("3") == [3] and parse_seeds("1..4") == [1, 2, 3, 4] and parse_seeds("2,5") == [2, 5]


def test_cli_run_and_report(tmp_path, capsys):
    rep = tmp_path / "r.json"
    assert main(["run", "--scenario", "free", "--trace", str(tmp_path / "t.jsonl"), "--report", str(rep)]) == EXIT_OK
    assert json.loads(rep.read_text())["driving_score"] == 100.0
    assert "DS=100.000" in capsys.readouterr().out


def test_cli_red_light_is_not_terminal(capsys):
    # the forced crossover completes the route; the red_light record lowers DS only
    assert main(["run", "--scenario", "red"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "DS=70.000" in out and out.count("red_light") == 1


def test_cli_errors(capsys):
    assert main(["run", "--scenario", "nope"]) == EXIT_ERROR
    assert "evdrive:" in capsys.readouterr().err
    assert main(["run", "--scenario", "free", "--set", "physics.nonsense=1"]) == EXIT_ERROR


def test_cli_eval_perception(tmp_path):
    trace = tmp_path / "t.jsonl"
    assert main(["run", "--scenario", "B", "--trace", str(trace)]) == EXIT_OK
    out = tmp_path / "loss.csv"
    assert main(["eval-perception", "--trace", str(trace), "--scenario", "B", "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == len(read_trace(trace))
    assert all(float(r["total"]) == 0.0 for r in rows)  # noise-free oracle


def test_cli_fusion_selftest(capsys):
    assert main(["fusion-selftest"]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out


def test_cli_events(tmp_path):
    frames = tmp_path / "frames"
    frames.mkdir()
    rng = np.random.default_rng(0)
    img = rng.uniform(0.1, 0.6, (6, 8))
    for k in range(3):
        write_pgm(frames / f"f{k:03d}.pgm", np.clip(img * (1.0 + 0.5 * k), 0, 1), signed=False)
    out = tmp_path / "ev.evt"
    assert main(["events", "--in", str(frames), "--out", str(out), "--frames-out", str(tmp_path / "acc")]) == EXIT_OK
    ev, w, h = read_events(out)
    assert (w, h) == (8, 6) and len(ev) > 0
    assert list((tmp_path / "acc").glob("*.pgm"))
