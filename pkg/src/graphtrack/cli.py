"""Command-line front end.

Subcommands: graph build, design det|random|kf-step|greedy-ss, observe,
track kf|ss-kf, simulate, report. Scenario details come from a JSON config
(--config); --seed and --trials override the config, --out picks the output
directory. Runs write report.json, schedule.json and, for tracking tasks,
trace.csv.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .dataio import load_coords_csv, load_json, write_edges_csv, write_json, write_schedule_json, write_signals_csv
from .errors import GraphTrackError
from .experiment import ExperimentConfig, RunOutput, run
from .graphs import build_grid_graph, build_knn_graph

DESIGN_KINDS = {
    "det": "designed_deterministic",
    "random": "designed_random",
    "kf-step": "designed_kf_step",
    "greedy-ss": "designed_greedy_ss",
}
TRACK_TASKS = {"kf": "track_kf", "ss-kf": "track_ss_kf"}


def _common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", required=config_required, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--trials", type=int, default=None, help="override the config trial count")
    parser.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphtrack",
                                description="observe, track and design sampling for bandlimited graph processes")
    sub = p.add_subparsers(dest="command", required=True)

    graph = sub.add_parser("graph", help="graph construction")
    graph_sub = graph.add_subparsers(dest="action", required=True)
    gb = graph_sub.add_parser("build", help="build a graph and write its edge list")
    gb.add_argument("--grid", help="ROWSxCOLS 4-neighbour grid, e.g. 5x15")
    gb.add_argument("--coords", help="CSV of point coordinates (header id,x1,...)")
    gb.add_argument("--k", type=int, default=None, help="neighbour count for the kNN graph")
    gb.add_argument("--weighting", choices=["binary", "gaussian"], default="binary")
    gb.add_argument("--sigma", type=float, default=None, help="gaussian kernel width")
    gb.add_argument("--out", default=".", help="output directory")

    design = sub.add_parser("design", help="compute a sampling design")
    design.add_argument("mode", choices=sorted(DESIGN_KINDS))
    _common(design)

    observe = sub.add_parser("observe", help="recover the initial state by least squares")
    _common(observe)

    track = sub.add_parser("track", help="run a tracking filter")
    track.add_argument("mode", choices=sorted(TRACK_TASKS))
    _common(track)

    sim = sub.add_parser("simulate", help="simulate one trajectory and write it out")
    _common(sim)

    report = sub.add_parser("report", help="print a human-readable report summary")
    report.add_argument("--out", default=".", help="directory holding report.json")
    report.add_argument("--path", default=None, help="explicit report.json path")
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_payload(load_json(args.config))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    return cfg


def _write_outputs(out_dir: Path, output: RunOutput) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "report.json", output.report.to_payload())
    write_schedule_json(out_dir / "schedule.json", output.schedule)
    if output.trace is not None:
        with (out_dir / "trace.csv").open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["t", "nmse_db", "tr_p_post", "samples"])
            writer.writeheader()
            writer.writerows(output.trace)
    if output.trajectory is not None:
        write_signals_csv(out_dir / "sim_states.csv", output.trajectory.states)
        write_signals_csv(out_dir / "sim_measurements.csv", output.trajectory.measurements)


def _cmd_graph_build(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.grid:
        try:
            rows, cols = (int(v) for v in args.grid.lower().split("x"))
        except ValueError:
            raise GraphTrackError(f"--grid expects ROWSxCOLS, got {args.grid!r}")
        g = build_grid_graph(rows, cols)
    elif args.coords:
        if args.k is None:
            raise GraphTrackError("--coords needs --k")
        g = build_knn_graph(load_coords_csv(args.coords), args.k, args.weighting, args.sigma)
    else:
        raise GraphTrackError("graph build needs --grid or --coords")
    write_edges_csv(out_dir / "graph.csv", g)
    print(f"wrote {out_dir / 'graph.csv'} ({g.n_nodes} nodes, {len(g.edges)} edges)")
    return 0


def _cmd_run(args, task: str | None = None, schedule_kind: str | None = None) -> int:
    cfg = _load_config(args)
    if task is not None:
        cfg.task = task
    if schedule_kind is not None:
        cfg.schedule.kind = schedule_kind
    output = run(cfg)
    out_dir = Path(args.out)
    _write_outputs(out_dir, output)
    if output.design is not None:
        write_json(out_dir / "design.json", output.design.to_payload())
    rep = output.report
    summary = f"task={rep.task} nodes={rep.n_nodes} bandwidth={rep.bandwidth}"
    if rep.nmse_db is not None:
        summary += f" nmse={rep.nmse_db:.2f} dB"
    print(summary)
    print(f"wrote {out_dir / 'report.json'}")
    return 0


def _cmd_design(args) -> int:
    # the design stage runs standalone: simulate nothing, just derive the schedule
    cfg = _load_config(args)
    cfg.task = "simulate"
    cfg.schedule.kind = DESIGN_KINDS[args.mode]
    output = run(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_schedule_json(out_dir / "schedule.json", output.schedule)
    payload = output.design.to_payload() if output.design is not None else {"mode": cfg.schedule.kind}
    write_json(out_dir / "design.json", payload)
    write_json(out_dir / "report.json", output.report.to_payload())
    if output.design is not None:
        status = "feasible" if output.design.feasible else "infeasible"
        print(f"design {args.mode}: {status}, constraint {output.design.achieved_constraint:.6g}")
    else:
        print(f"design {args.mode}: wrote schedule")
    print(f"wrote {out_dir / 'schedule.json'}")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.path) if args.path else Path(args.out) / "report.json"
    rep = load_json(path)
    print(f"task: {rep.get('task')}")
    print(f"graph: {rep.get('n_nodes')} nodes, bandwidth {rep.get('bandwidth')}, horizon {rep.get('horizon')}")
    print(f"trials: {rep.get('trials')} (seed {rep.get('seed')}, {rep.get('failed_trials', 0)} failed)")
    if rep.get("nmse") is not None:
        print(f"nmse: {rep['nmse']:.6g} ({rep['nmse_db']:.2f} dB)")
    if rep.get("steady_state_nmse") is not None:
        print(f"steady-state nmse: {rep['steady_state_nmse']:.6g}")
    if rep.get("average_snr_db") is not None:
        print(f"average snr: {rep['average_snr_db']:.2f} dB")
    for key, val in sorted((rep.get("theoretical") or {}).items()):
        if val is not None:
            print(f"theoretical {key}: {val:.6g}" if isinstance(val, float) else f"theoretical {key}: {val}")
    sched = rep.get("schedule", {})
    if sched.get("mode") == "deterministic":
        sizes = [len(s) for s in sched.get("sets", [])]
        if sizes:
            print(f"schedule: deterministic, {sum(sizes)} samples over {len(sizes)} steps")
    elif sched.get("mode") == "bernoulli":
        rates = sched.get("rates", [])
        print(f"schedule: bernoulli, total rate {sum(rates):.3f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "graph":
            return _cmd_graph_build(args)
        if args.command == "design":
            return _cmd_design(args)
        if args.command == "observe":
            return _cmd_run(args, task="observe")
        if args.command == "track":
            return _cmd_run(args, task=TRACK_TASKS[args.mode])
        if args.command == "simulate":
            return _cmd_run(args, task="simulate")
        if args.command == "report":
            return _cmd_report(args)
        parser.error(f"unknown command {args.command!r}")
    except GraphTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
