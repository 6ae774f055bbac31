"""Command-line entry point: ``evdrive <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path


EXIT_OK, EXIT_ERROR, EXIT_INFRACTION = 0, 1, 2


def parse_seeds(text: str) -> list[int]:
    """``3``, ``1..5`` (inclusive) or ``1,4,9``."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc


def _set_pairs(pairs) -> dict:
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise ValueError(f"--set expects section.key=value, got {p!r}")
        k, v = p.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _scenario(name: str, sets=None):
    from .config import override
    from .scenario import ScenarioConfig, resolve

    sc = resolve(name)
    extra = _set_pairs(sets)
    if extra:
        sc = ScenarioConfig(sc.id, sc.doc, override(sc.sim, extra), sc.source)
    return sc


def cmd_run(args) -> int:
    from .runner import run_scenario

    sc = _scenario(args.scenario, args.set)
    res = run_scenario(sc, args.seed, args.trace)
    if args.report:
        text = res.report.to_json() if str(args.report).endswith(".json") else res.report.to_csv()
        Path(args.report).write_text(text)
    r = res.report
    print(f"{sc.id} seed={args.seed} termination={res.termination} ticks={res.ticks} "
          f"RC={r.route_completion:.3f} IS={r.infraction_score:.6f} DS={r.driving_score:.3f}")
    for inf in res.infractions:
        print(f"  tick {inf.tick}: {inf.type.value} at ({inf.x:.2f}, {inf.y:.2f}) {inf.detail}".rstrip())
    return EXIT_INFRACTION if res.terminated_by_infraction else EXIT_OK


def cmd_batch(args) -> int:
    from .runner import run_batch
    from .scenario import ScenarioConfig, builtin_dir

    d = Path(args.dir) if args.dir else builtin_dir()
    files = sorted(d.glob("*.toml"))
    if not files:
        print(f"no scenario files in {d}", file=sys.stderr)
        return EXIT_ERROR
    configs = [ScenarioConfig.from_file(f) for f in files]
    if args.trace_dir:
        Path(args.trace_dir).mkdir(parents=True, exist_ok=True)
    text = run_batch(configs, args.seeds, args.jobs, args.trace_dir)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    failed = [r for r in csv.DictReader(io.StringIO(text)) if r["status"] == "error"]
    return EXIT_ERROR if failed else EXIT_OK


EVAL_FIELDS = ["tick", "l_pt", "l_prob", "l_meta", "l_map", "l_tf", "total", "n_gt", "n_pred"]


def eval_perception(trace: list[dict], scenario, seed: int) -> str:
    """Per-tick losses of noisy perception against the clean oracle along a trace."""
    from .losses import LossWeights, meta_loss, prob_loss_balanced, total_loss, traffic_info_loss, waypoint_loss
    from .perception import perceive, perceive_noisy, route_progress
    from .scenario import load_scenario
    from .world import EgoState

    cfg = scenario.sim
    w = LossWeights()
    world0 = load_scenario(scenario)
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(EVAL_FIELDS)
    s_hint = None
    for rec in trace:
        e = rec["ego"]
        ego = EgoState(e["x"], e["y"], e["yaw"], e["v"], world0.ego.half_w, world0.ego.half_l)
        world = world0.at_step(int(rec["tick"]), ego)
        s_hint = route_progress(world, s_hint)
        gt = perceive(world, cfg.perception, cfg.safety.junction_radius, s_hint)
        pred = perceive_noisy(world, cfg.perception, seed, cfg.safety.junction_radius, s_hint)
        l_pt = waypoint_loss(pred.waypoints, gt.waypoints)
        l_prob = prob_loss_balanced(pred.density, gt.density)
        l_meta = meta_loss(pred.density, gt.density)
        l_tf = traffic_info_loss(
            {"tl": pred.tl.p_red + pred.tl.p_yellow, "stop": pred.stop_prob, "junction": pred.junction_prob},
            {"tl": gt.tl.p_red + gt.tl.p_yellow >= 0.5, "stop": gt.stop_prob >= 0.5, "junction": gt.junction_prob >= 0.5},
            w,
        )
        out.writerow([rec["tick"], f"{l_pt:.6f}", f"{l_prob:.6f}", f"{l_meta:.6f}", f"{l_prob + l_meta:.6f}",
                      f"{l_tf:.6f}", f"{total_loss(l_pt, l_prob + l_meta, l_tf, w):.6f}",
                      len(gt.detections), len(pred.detections)])
    return buf.getvalue()


def cmd_eval_perception(args) -> int:
    from .runner import read_trace

    text = eval_perception(read_trace(args.trace), _scenario(args.scenario, args.set), args.seed)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_fusion_selftest(args) -> int:
    from .fusion import selftest

    rows = selftest(args.seed)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail}".rstrip())
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_ERROR


def _frame_key(p: Path):
    return (0, int(p.stem), "") if p.stem.isdigit() else (1, 0, p.name)


def cmd_events(args) -> int:
    from .events import Mode, accumulate, frame_sidecar, frames_to_events, write_events, write_pgm

    src = Path(args.inp)
    paths = sorted(src.glob("*.pgm"), key=_frame_key) if src.is_dir() else [src]
    if len(paths) < 2:
        print(f"need at least two PGM frames in {src}", file=sys.stderr)
        return EXIT_ERROR
    events, (h, w) = frames_to_events(paths, args.threshold, args.frame_dt_us)
    write_events(args.out, events, w, h)
    print(f"{len(events)} events, {w}x{h}, threshold {args.threshold} -> {args.out}")
    if args.frames_out:
        fdir = Path(args.frames_out)
        fdir.mkdir(parents=True, exist_ok=True)
        t_end = int(events["t"].max()) if len(events) else 0
        mode = Mode(args.mode)
        k = 0
        for t0 in range(0, t_end, args.window_us):
            fr = accumulate(events, (t0, t0 + args.window_us), (h, w), mode, normalize=True)
            write_pgm(fdir / f"{k:05d}.pgm", fr.values)
            (fdir / f"{k:05d}.json").write_text(frame_sidecar(fr))
            k += 1
        print(f"{k} event frames -> {fdir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evdrive", description="Closed-loop desk simulator for the event-fusion driving agent.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--scenario", required=True, help="builtin id (A, B, C, free, red) or TOML path")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trace", help="JSONL trace output")
    r.add_argument("--report", help="score report (.csv or .json)")
    r.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", help="run every scenario in a directory over several seeds")
    b.add_argument("--dir", help="directory of scenario TOML files (default: builtin set)")
    b.add_argument("--seeds", type=parse_seeds, default=[0], help="e.g. 1..5 or 1,2,3")
    b.add_argument("-j", "--jobs", type=int, default=1)
    b.add_argument("--out", help="write the CSV here as well")
    b.add_argument("--trace-dir", help="keep per-run traces")
    b.set_defaults(func=cmd_batch)

    e = sub.add_parser("eval-perception", help="per-tick perception losses along a trace")
    e.add_argument("--trace", required=True)
    e.add_argument("--scenario", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval_perception)

    f = sub.add_parser("fusion-selftest", help="numeric checks of the attention kernels")
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fusion_selftest)

    v = sub.add_parser("events", help="convert PGM frames into an event stream")
    v.add_argument("--in", dest="inp", required=True, help="directory of .pgm frames")
    v.add_argument("--out", required=True)
    v.add_argument("--threshold", type=float, default=0.2)
    v.add_argument("--frame-dt-us", type=int, default=50_000)
    v.add_argument("--frames-out", help="also write accumulated event frames here")
    v.add_argument("--window-us", type=int, default=50_000)
    v.add_argument("--mode", choices=["count", "polarity_sum"], default="count")
    v.set_defaults(func=cmd_events)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"evdrive: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
