"""Command-line interface: ``sim <command>``.

Exit codes: 0 success, 1 usage, 2 data error, 3 golden run failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .campaign import (CampaignConfig, CampaignError, golden_run, read_records, record_to_json, report,
                       run_campaign, run_single)
from .injection import InjectionError
from .scenarios import DEFAULT_LIBRARY, LibraryError, find_scenario, load_scenario_library
from .trajectory import TrajectoryError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_GOLDEN = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def golden_summary(g) -> dict:
    """Tracking figures of a golden run over its teleoperation phase."""
    t = g.trace
    a, b = g.phases["TELEOP"]
    ee = t.col("ee")
    ref = t.col("desired_pose")
    down = t.col("sw_state") == 3
    idx = np.flatnonzero(down[a:b]) + a
    err = np.concatenate([np.linalg.norm(ee[idx][:, s:s + 3] - ref[idx][:, s:s + 3], axis=1) for s in (0, 4)])
    pos = ee[:, [0, 1, 2, 4, 5, 6]].reshape(len(ee), 2, 3)
    step = np.linalg.norm(np.diff(pos, axis=0), axis=2).max(axis=1)
    return {"trajectory": g.trajectory_id, "config_digest": g.digest, "homing_complete_tick": g.homing_tick,
            "tracking_rms_m": float(np.sqrt(np.mean(err ** 2))) if len(err) else 0.0,
            "tracking_max_m": float(err.max()) if len(err) else 0.0,
            "max_step_m": float(step.max()), "labels": ["NO_IMPACT"]}


def cmd_golden(args) -> int:
    g = golden_run(args.trajectory)
    summary = golden_summary(g)
    print(json.dumps(summary, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "golden.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        g.trace.write_csv(out / "golden_trace.csv")
    return EXIT_OK


def cmd_run(args) -> int:
    library = load_scenario_library(args.library)
    scenario = find_scenario(library, args.scenario)
    config = CampaignConfig(library=args.library, base_seed=args.seed, trajectory=args.trajectory)
    if args.trace:
        from .campaign import simulate_scenario, run_seed
        g = golden_run(args.trajectory)
        world = simulate_scenario(scenario, run_seed(args.seed, scenario.id, args.run_index), config.sim, g)
        path = Path(args.out or ".") / f"trace_{scenario.id}_{args.seed}_{args.run_index}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        world.trace.write_csv(path)
        print(f"trace: {path}", file=sys.stderr)
    rec = run_single(scenario, args.run_index, config)
    print(record_to_json(rec))
    return EXIT_OK


def cmd_campaign(args) -> int:
    out = Path(args.out)
    if not args.resume and (out / "records").is_dir() and any((out / "records").glob("*.json")):
        print(f"{out} already holds records; pass --resume to continue it", file=sys.stderr)
        return EXIT_DATA
    config = CampaignConfig(library=args.library, runs=args.runs, base_seed=args.seed,
                            trajectory=args.trajectory, out_dir=str(out), write_traces=args.trace)

    def progress(rec):
        if not args.quiet:
            print(f"{rec.scenario_id}#{rec.run_index} {rec.observed} match={rec.matched}", file=sys.stderr)

    records = run_campaign(config, resume=True, jobs=args.jobs, progress=progress)
    print((out / "summary.txt").read_text(encoding="utf-8") if (out / "summary.txt").exists()
          else report(records)[0], end="")
    return EXIT_OK


def cmd_report(args) -> int:
    text, table = report(read_records(args.input))
    print(text, end="")
    if args.csv:
        Path(args.csv).write_text(table, encoding="utf-8")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    for r in load_scenario_library(args.library):
        exp = "  ".join(f"{p}={'+'.join(v)}" for p, v in r.expected.items())
        print(f"{r.id:18s} {exp}")
    return EXIT_OK


def cmd_validate(args) -> int:
    lib = load_scenario_library(args.file)
    print(f"ok: {len(lib)} scenarios")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sim", description="Teleoperated surgical robot fault-injection simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("golden", help="run the fault-free reference session")
    g.add_argument("--trajectory", default="circle", help="circle, line or a trajectory file")
    g.add_argument("--out", help="directory for golden.json and the trace CSV")
    g.set_defaults(func=cmd_golden)

    r = sub.add_parser("run", help="run one scenario once and print its record")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int, default=0, help="base seed")
    r.add_argument("--run-index", type=int, default=0)
    r.add_argument("--library", default=str(DEFAULT_LIBRARY))
    r.add_argument("--trajectory", default="circle")
    r.add_argument("--trace", action="store_true", help="also write the per-tick trace CSV")
    r.add_argument("--out", help="directory for the trace CSV (default: current directory)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("campaign", help="run every scenario of a library")
    c.add_argument("--library", default=str(DEFAULT_LIBRARY))
    c.add_argument("--runs", type=int, default=8, help="runs per scenario without a runs: override")
    c.add_argument("--out", required=True)
    c.add_argument("--resume", action="store_true", help="continue a campaign in --out")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--seed", type=int, default=0, help="base seed")
    c.add_argument("--trajectory", default="circle")
    c.add_argument("--trace", action="store_true", help="write per-run trace CSVs")
    c.add_argument("--quiet", action="store_true")
    c.set_defaults(func=cmd_campaign)

    rp = sub.add_parser("report", help="summarize the records of a campaign directory")
    rp.add_argument("--in", dest="input", required=True)
    rp.add_argument("--csv", help="also write the table as CSV")
    rp.set_defaults(func=cmd_report)

    s = sub.add_parser("scenarios", help="list scenario ids and expected outcomes")
    s.add_argument("--library", default=str(DEFAULT_LIBRARY))
    s.set_defaults(func=cmd_scenarios)

    v = sub.add_parser("validate-library", help="parse a library file and report errors")
    v.add_argument("file")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "runs", 1) < 1 or getattr(args, "jobs", 1) < 1:
        print("sim: error: --runs and --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CampaignError as exc:
        print(f"sim: {exc}", file=sys.stderr)
        return EXIT_GOLDEN if exc.code == "GOLDEN_FAILED" else EXIT_DATA
    except (LibraryError, TrajectoryError, InjectionError, OSError) as exc:
        print(f"sim: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
