"""Run every builtin scenario over a few seeds and print one summary line each."""

import argparse

from evdrive.runner import run_scenario
from evdrive.scenario import ScenarioConfig

BUILTINS = ("free", "A", "B", "C", "red")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--scenarios", nargs="*", default=list(BUILTINS))
    args = ap.parse_args()
    print(f"{'scenario':<10}{'seed':>5}{'ticks':>7}{'RC':>9}{'IS':>8}{'DS':>9}  termination  infractions")
    for sid in args.scenarios:
        cfg = ScenarioConfig.builtin(sid)
        for seed in range(args.seeds):
            res = run_scenario(cfg, seed)
            r = res.report
            kinds = ",".join(i.type.value for i in res.infractions) or "-"
            print(f"{sid:<10}{seed:>5}{res.ticks:>7}{r.route_completion:>9.2f}{r.infraction_score:>8.3f}"
                  f"{r.driving_score:>9.2f}  {res.termination:<12} {kinds}")


if __name__ == "__main__":
    main()
