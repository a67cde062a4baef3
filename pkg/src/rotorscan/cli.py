"""rotorscan command line.

Stages exchange plain files: PLY point clouds, CSV frame indexes and
trajectories, JSON match reports and coverage. Exit codes: 0 success,
2 no satisfactory match, 64 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional

from .config import ConfigError, RunConfig, load_config
from .geometry import wrap_angle
from .matcher import MatchResult, read_match_report, write_match_report
from .model import export_model, generate_turbine_model
from .pipeline import run_matching
from .scansim import INDEX_NAME, iter_climb, read_frames, write_frames
from .trajectory import export_trajectory_csv, generate_trajectory, read_trajectory_csv, write_trajectory_json
from .trigger import run_inspection, write_coverage_json, write_events_csv

EXIT_OK = 0
EXIT_NO_MATCH = 2
EXIT_USAGE = 64

log = logging.getLogger("rotorscan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def cmd_generate_model(cfg: RunConfig, args) -> int:
    path = _out(cfg, "model.ply")
    cloud = generate_turbine_model(cfg.turbine, cfg.sampling)
    export_model(cloud, path)
    print(f"wrote {len(cloud)} model points to {path}")
    return EXIT_OK


def _frames(cfg: RunConfig):
    return iter_climb(cfg.scene, cfg.sensor, cfg.climb_start, cfg.climb_rate_m_s, cfg.climb_duration_s, cfg.seed)


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _out(cfg, "frames")
    n = write_frames(_frames(cfg), out)
    print(f"wrote {n} frames to {out}")
    return EXIT_OK


def _match(cfg: RunConfig, frames, dump_dir) -> tuple:
    model = generate_turbine_model(cfg.turbine, cfg.sampling)
    outcome = run_matching(model, frames, cfg.pipeline, cfg.seed, dump_dir)
    return model, outcome


def _report_match(outcome) -> None:
    r = outcome.result
    if r is None:
        print(f"no candidate cluster after {outcome.frames_used} frames")
    else:
        state = "satisfactory" if outcome.satisfactory else "unsatisfactory"
        print(f"{state} match: score={r.score:.6f} yaw={r.pose.yaw:.6f} frames={outcome.frames_used}")


def cmd_match(cfg: RunConfig, args) -> int:
    if not os.path.isfile(os.path.join(args.frames_dir, INDEX_NAME)):
        raise UsageError(f"no {INDEX_NAME} in {args.frames_dir}")
    _, outcome = _match(cfg, read_frames(args.frames_dir), args.dump_stages)
    _report_match(outcome)
    if outcome.result is not None:
        write_match_report(outcome.result, _out(cfg, "match.json"))
    return EXIT_OK if outcome.satisfactory else EXIT_NO_MATCH


def _plan(cfg: RunConfig, result: MatchResult):
    traj = generate_trajectory(cfg.turbine, result.pose, cfg.trajectory)
    export_trajectory_csv(traj, _out(cfg, "trajectory.csv"))
    write_trajectory_json(traj, _out(cfg, "trajectory.json"))
    return traj


def cmd_plan(cfg: RunConfig, args) -> int:
    try:
        result = read_match_report(args.match_json)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read match report {args.match_json}: {exc}") from exc
    traj = _plan(cfg, result)
    print(f"wrote {len(traj)} waypoints ({len(traj.holds())} holds)")
    return EXIT_OK


def _inspect(cfg: RunConfig, traj):
    report = run_inspection(traj, cfg.scene, cfg.trigger, cfg.dwell_s, cfg.seed)
    write_events_csv(report, _out(cfg, "events.csv"))
    write_coverage_json(report, _out(cfg, "coverage.json"))
    return report


def cmd_trigger(cfg: RunConfig, args) -> int:
    try:
        traj = read_trajectory_csv(args.trajectory_csv)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read trajectory {args.trajectory_csv}: {exc}") from exc
    report = _inspect(cfg, traj)
    print(f"{report.total_events} trigger events at {len(report.holds)} hold points")
    return EXIT_OK


def cmd_e2e(cfg: RunConfig, args) -> int:
    with open(_out(cfg, "config.json"), "w") as fh:
        fh.write(cfg.to_json())
    export_model(generate_turbine_model(cfg.turbine, cfg.sampling), _out(cfg, "model.ply"))
    _, outcome = _match(cfg, _frames(cfg), args.dump_stages)
    _report_match(outcome)
    r = outcome.result
    events = 0
    if r is not None:
        write_match_report(r, _out(cfg, "match.json"))
    if outcome.satisfactory:
        traj = _plan(cfg, r)
        events = _inspect(cfg, traj).total_events
    if r is None:
        print(f"score=inf yaw=nan yaw_err=nan events={events}")
    else:
        err = wrap_angle(r.pose.yaw - cfg.turbine_pose.yaw)
        print(f"score={r.score:.6f} yaw={r.pose.yaw:.6f} yaw_err={err:.6f} events={events}")
    return EXIT_OK if outcome.satisfactory else EXIT_NO_MATCH


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (overrides out_dir)")
    common.add_argument("--dump-stages", metavar="DIR", help="write per-batch intermediate clouds")
    common.add_argument("--verbose", action="store_true")

    p = _Parser(prog="rotorscan", description="Wind turbine localization and inspection planning on simulated LiDAR.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("generate-model", parents=[common], help="sample the turbine model to model.ply").set_defaults(
        func=cmd_generate_model
    )
    sub.add_parser("simulate", parents=[common], help="simulate the climb scans to frames/").set_defaults(
        func=cmd_simulate
    )
    m = sub.add_parser("match", parents=[common], help="localize the turbine from a frames directory")
    m.add_argument("frames_dir")
    m.set_defaults(func=cmd_match)
    pl = sub.add_parser("plan", parents=[common], help="inspection trajectory from a match report")
    pl.add_argument("match_json")
    pl.set_defaults(func=cmd_plan)
    t = sub.add_parser("trigger", parents=[common], help="simulate camera triggers along a trajectory")
    t.add_argument("trajectory_csv")
    t.set_defaults(func=cmd_trigger)
    sub.add_parser("e2e", parents=[common], help="simulate, match, plan and trigger in one go").set_defaults(
        func=cmd_e2e
    )
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(cfg, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
