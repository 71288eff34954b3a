"""Command-line harness for generating logs and running protocol experiments.

Subcommands:

* ``generate``            write a synthetic scenario log as CSV
* ``split``               partition a log per organization
* ``run``                 one protocol session with metrics and mining output
* ``sweep-segsize``       message/memory behavior across segment budgets
* ``scale``               input-scaling sweeps with linear/log fits
* ``stats``               fit linear/log models to columns of a CSV
* ``verify-convergence``  protocol output equals standalone mining, byte-wise

``run``, ``sweep-segsize``, and ``scale`` accept ``--config`` (a JSON file of
ExperimentConfig fields); explicit flags override file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .experiment import (
    ExperimentConfig,
    run_experiment,
    scale_run,
    standalone_mining,
    sweep_segsize,
    write_metrics_csv,
    write_transcript,
)
from .logio import load_log, save_csv, split_log, ProvisionerRef, save_provisioner_refs
from .model import merge_all
from .scenario import generate_scenario_log, org_map_for
from .stats import fit_stats

__all__ = ["main", "build_parser"]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with experiment settings")
    p.add_argument("--cases", type=int, dest="n_cases")
    p.add_argument("--seed", type=int)
    p.add_argument("--seg-size", type=int, dest="seg_size")
    p.add_argument("--orgs", type=int, dest="n_orgs")
    p.add_argument("--loop", type=int, dest="loop_iterations")
    p.add_argument("--algorithm", choices=("heuristics", "declare"))
    p.add_argument(
        "--mode",
        choices=("incremental", "batch"),
        help="incremental yields cases as they complete; batch mines one merged log",
    )
    p.add_argument("--log", dest="log_path", help="input log file (CSV or XES)")
    p.add_argument("--org-map", dest="org_map_path", help="JSON activity-to-org map")
    p.add_argument("--iid-column", dest="iid_column")


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "n_cases": args.n_cases,
        "seed": args.seed,
        "seg_size": args.seg_size,
        "n_orgs": args.n_orgs,
        "loop_iterations": args.loop_iterations,
        "algorithm": args.algorithm,
        "incremental": None if args.mode is None else args.mode == "incremental",
        "log_path": args.log_path,
        "org_map_path": args.org_map_path,
        "iid_column": args.iid_column,
    }
    if args.config:
        return ExperimentConfig.from_json_file(args.config, **overrides)
    return ExperimentConfig().with_overrides(**overrides)


def _cmd_generate(args: argparse.Namespace) -> int:
    org_map = org_map_for(args.orgs)
    log = generate_scenario_log(
        args.cases, args.seed, loop_iterations=args.loop, org_map=org_map
    )
    save_csv(log, args.out)
    lengths = {}
    for ev in log:
        lengths[ev.iid] = lengths.get(ev.iid, 0) + 1
    sizes = sorted(lengths.values())
    print(
        "wrote %s: %d events, %d cases, %d activities, events/case min %d max %d mean %.2f"
        % (
            args.out,
            len(log),
            len(lengths),
            len(log.activity_set()),
            sizes[0],
            sizes[-1],
            sum(sizes) / len(sizes),
        )
    )
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    log = load_log(args.log, iid_column=args.iid_column)
    with Path(args.org_map).open() as fh:
        org_map = json.load(fh)
    parts = split_log(log, org_map)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    refs = []
    for org, partition in sorted(parts.items()):
        save_csv(partition, out_dir / ("%s.csv" % org))
        refs.append(
            ProvisionerRef(org_id=org, endpoint=str(out_dir / ("%s.csv" % org)))
        )
        print("%s: %d events, %d cases" % (org, len(partition), len(set(e.iid for e in partition))))
    save_provisioner_refs(refs, out_dir / "provisioners.json")
    print("wrote %s" % (out_dir / "provisioners.json"))
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    result = run_experiment(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = "pnml" if result.output_kind == "pnml" else "json"
    out_name = "model.pnml" if suffix == "pnml" else "fitness.json"
    (out_dir / out_name).write_bytes(result.output)
    write_metrics_csv(result.metrics, out_dir / "metrics.csv")
    write_transcript(result.transcript, out_dir / "transcript.jsonl")
    print(
        "session %s: %d messages, peak %d bytes, %d yields, output %s"
        % (
            result.miner_phase,
            result.metrics.message_count,
            result.metrics.peak_bytes,
            result.metrics.yield_count,
            out_dir / out_name,
        )
    )
    return 0 if result.miner_phase == "done" else 1


def _cmd_sweep_segsize(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = sweep_segsize(cfg, sizes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seg_size", "messages", "peak_bytes", "mean_bytes"])
        for seg_size, metrics in rows:
            writer.writerow(
                [seg_size, metrics.message_count, metrics.peak_bytes, "%.2f" % metrics.mean_bytes]
            )
    counts = [m.message_count for _, m in rows]
    verdict = "non-increasing" if all(a >= b for a, b in zip(counts, counts[1:])) else "NOT monotone"
    print("wrote %s; message counts %s (%s)" % (out, counts, verdict))
    return 0


def _cmd_scale(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    defaults = {
        "events": [2, 4, 6, 8, 10, 12, 14, 16],
        "cases": [2 ** x for x in range(7, 14)],
        "orgs": list(range(1, 9)),
    }
    values = (
        [int(v) for v in args.values.split(",")] if args.values else defaults[args.dimension]
    )
    rows, stats = scale_run(
        cfg, args.dimension, values, metric=args.metric, repeats=args.repeats
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", args.metric, "peak_bytes", "message_count"])
        for row in rows:
            writer.writerow([row["x"], row[args.metric], row["peak_bytes"], row["message_count"]])
    stats_path = out.with_suffix(".stats.json")
    stats_path.write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n")
    print(
        "wrote %s; r2_linear=%.4f r2_log=%.4f slope=%.4f"
        % (out, stats.r2_linear, stats.r2_log, stats.slope)
    )
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    xs, ys = [], []
    with Path(args.csv).open(newline="") as fh:
        for row in csv.DictReader(fh):
            xs.append(float(row[args.x]))
            ys.append(float(row[args.y]))
    result = fit_stats(xs, ys)
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_verify_convergence(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    failures = 0
    for algorithm in ("heuristics", "declare"):
        algo_cfg = cfg.with_overrides(algorithm=algorithm)
        if algo_cfg.log_path is not None:
            log = load_log(algo_cfg.log_path, iid_column=algo_cfg.iid_column)
        else:
            log = generate_scenario_log(
                algo_cfg.n_cases,
                algo_cfg.seed,
                loop_iterations=algo_cfg.loop_iterations,
                org_map=org_map_for(algo_cfg.n_orgs),
            )
        direct = standalone_mining(log, algorithm)
        via_protocol = run_experiment(algo_cfg).output
        ok = direct == via_protocol
        failures += 0 if ok else 1
        print("%s: %s (%d bytes)" % (algorithm, "MATCH" if ok else "MISMATCH", len(direct)))
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enclavemine",
        description="secrecy-preserving process mining over sealed event-log segments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic scenario log")
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--loop", type=int, default=1)
    p.add_argument("--orgs", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("split", help="partition a log per organization")
    p.add_argument("--log", required=True)
    p.add_argument("--org-map", required=True)
    p.add_argument("--iid-column", default="case")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("run", help="run one protocol session")
    _add_config_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep-segsize", help="sweep segment budgets")
    _add_config_flags(p)
    p.add_argument("--sizes", default="50000,100000,500000,1000000,5000000")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep_segsize)

    p = sub.add_parser("scale", help="scaling sweep with linear/log fits")
    p.add_argument("dimension", choices=("events", "cases", "orgs"))
    _add_config_flags(p)
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument(
        "--metric",
        default="wall_ms",
        choices=("wall_ms", "peak_bytes", "mean_bytes", "message_count"),
    )
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_scale)

    p = sub.add_parser("stats", help="fit linear/log models to CSV columns")
    p.add_argument("--csv", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser(
        "verify-convergence", help="check protocol output equals standalone mining"
    )
    _add_config_flags(p)
    p.set_defaults(func=_cmd_verify_convergence)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
