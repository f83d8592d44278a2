"""Command-line driver: scenario runs, trace replay, scaling fits, and
run comparison.

Exit codes: 0 success, 1 usage/configuration error, 2 I/O error, 3 run
terminated by memory exhaustion.

All emitted CSVs round-trip: a cost trace and mapping snapshot written by
``run`` feed ``replay`` unchanged, and ``fit`` consumes the documented
``nodes,walltime`` format. Floats are written with shortest round-trip
formatting, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .balancer import (BalanceOutcome, BalancePolicy, Strategy,
                       attempt_rebalance, efficiency_flagged, should_attempt)
from .cost import CostVector
from .decomposition import DistributionMapping, morton_order, build_box_array
from .errors import ConfigError
from .perfmodel import fit_scaling, max_speedup
from .scenarios import apply_overrides, load_spec
from .workload import RunResult, run_simulation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_OOM = 3

METRICS_COLUMNS = ["step", "eff_before", "eff_after", "adopted",
                   "compute_max", "comm_max", "gather", "redistribute",
                   "walltime", "max_rank_particles", "oom"]


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_run_outputs(out_dir: Path, result: RunResult) -> dict:
    """Write metrics.csv, cost_trace.csv, mappings.csv, and summary.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "metrics.csv", METRICS_COLUMNS,
               ((m.step, m.efficiency_before, m.efficiency_after, m.adopted,
                 m.compute_max, m.comm_max, m.gather, m.redistribute,
                 m.walltime, m.max_rank_particles, m.oom)
                for m in result.metrics))

    def trace_rows():
        for step, row in enumerate(result.cost_trace):
            for box_id, value in enumerate(row):
                yield step, box_id, float(value)

    _write_csv(out_dir / "cost_trace.csv", ["step", "box_id", "cost"],
               trace_rows())

    def mapping_rows():
        # Step -1 holds the mapping before any balancing; later blocks are
        # the mapping adopted at that step.
        for box_id, rank in enumerate(result.initial_owner):
            yield -1, box_id, int(rank)
        for step, owner in result.adoption_snapshots:
            for box_id, rank in enumerate(owner):
                yield step, box_id, int(rank)

    _write_csv(out_dir / "mappings.csv", ["step", "box_id", "rank"],
               mapping_rows())

    summary = dict(result.summary)
    summary["metrics_path"] = "metrics.csv"
    summary["cost_trace_path"] = "cost_trace.csv"
    summary["mappings_path"] = "mappings.csv"
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _parse_weights(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"--weights expects WP,WC, got {text!r}")
    return float(parts[0]), float(parts[1])


def _add_policy_flags(sub) -> None:
    sub.add_argument("--policy", choices=["none", "static", "knapsack", "sfc"],
                     help="balance policy override")
    sub.add_argument("--interval", type=int, help="steps between attempts")
    sub.add_argument("--threshold", type=float,
                     help="efficiency improvement required to adopt")
    sub.add_argument("--threshold-mode", choices=["relative", "absolute"])


def cmd_run(args) -> int:
    spec = load_spec(args.scenario)
    weights = _parse_weights(args.weights) if args.weights else None
    spec = apply_overrides(
        spec, policy=args.policy, interval=args.interval,
        threshold=args.threshold, threshold_mode=args.threshold_mode,
        box_size=args.box_size, cost=args.cost, weights=weights,
        seed=args.seed, steps=args.steps)
    result = run_simulation(spec.scenario, spec.policy, spec.build_provider())
    summary = result.summary

    if args.compare_to:
        base = json.loads((Path(args.compare_to) / "summary.json").read_text())
        if base["scenario_id"] != summary["scenario_id"]:
            raise ConfigError(
                f"--compare-to run is scenario {base['scenario_id']!r}, "
                f"not {summary['scenario_id']!r}")
        common = min(base["completed_steps"], summary["completed_steps"])
        base_wall = _walltime_over(Path(args.compare_to), common)
        this_wall = sum(m.walltime for m in result.metrics[:common])
        result.summary["speedup_vs_baseline"] = (
            base_wall / this_wall if this_wall > 0 else float("inf"))
        result.summary["baseline"] = str(args.compare_to)

    summary = write_run_outputs(Path(args.out), result)
    print(f"run {summary['scenario_id']} policy={summary['policy']}"
          f"/{summary['strategy']} provider={summary['provider']}: "
          f"{summary['completed_steps']}/{summary['total_steps']} steps, "
          f"mean efficiency {summary['mean_efficiency']:.3f}, "
          f"total walltime {summary['total_walltime']:.1f}, "
          f"{summary['adoption_count']} adoptions"
          + (", OOM" if summary["oom"] else ""))
    print(f"outputs in {args.out}")
    return EXIT_OOM if summary["oom"] else EXIT_OK


def _walltime_over(run_dir: Path, steps: int) -> float:
    total = 0.0
    with open(run_dir / "metrics.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if int(row["step"]) < steps:
                total += float(row["walltime"])
    return total


def read_cost_trace(path: Path) -> tuple[int, np.ndarray]:
    """Read a step,box_id,cost trace; returns (first_step, [steps, boxes]).

    Steps must be contiguous and every step must carry every box id; the
    first gap is named in the error.
    """
    by_step: dict[int, dict[int, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_step.setdefault(int(row["step"]), {})[int(row["box_id"])] = \
                float(row["cost"])
    if not by_step:
        raise ConfigError(f"cost trace {path} is empty")
    steps = sorted(by_step)
    first = steps[0]
    n_boxes = max(by_step[first]) + 1
    for offset, step in enumerate(steps):
        if step != first + offset:
            raise ConfigError(f"cost trace has a gap: step {first + offset} "
                              f"missing (found step {step})")
        boxes = by_step[step]
        if len(boxes) != n_boxes or max(boxes) + 1 != n_boxes:
            for b in range(n_boxes):
                if b not in boxes:
                    raise ConfigError(
                        f"cost trace step {step} is missing box {b}")
            raise ConfigError(
                f"cost trace step {step} has unexpected box ids")
    trace = np.empty((len(steps), n_boxes))
    for offset, step in enumerate(steps):
        row = by_step[step]
        trace[offset] = [row[b] for b in range(n_boxes)]
    return first, trace


def read_initial_mapping(path: Path) -> np.ndarray:
    """Owner vector from the earliest block of a step,box_id,rank CSV."""
    blocks: dict[int, dict[int, int]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            blocks.setdefault(int(row["step"]), {})[int(row["box_id"])] = \
                int(row["rank"])
    if not blocks:
        raise ConfigError(f"mapping file {path} is empty")
    block = blocks[min(blocks)]
    owner = np.empty(len(block), dtype=np.int64)
    for box_id in range(len(block)):
        if box_id not in block:
            raise ConfigError(f"mapping file is missing box {box_id}")
        owner[box_id] = block[box_id]
    return owner


def cmd_replay(args) -> int:
    if args.run_dir:
        run_dir = Path(args.run_dir)
        trace_path = run_dir / "cost_trace.csv"
        mapping_path = run_dir / "mappings.csv"
        run_summary = json.loads((run_dir / "summary.json").read_text())
    else:
        if not args.trace or not args.mapping:
            raise ConfigError("replay needs --run-dir, or --trace and --mapping")
        trace_path = Path(args.trace)
        mapping_path = Path(args.mapping)
        run_summary = None

    first_step, trace = read_cost_trace(trace_path)
    owner = read_initial_mapping(mapping_path)
    if owner.size != trace.shape[1]:
        raise ConfigError(
            f"mapping covers {owner.size} boxes but trace has "
            f"{trace.shape[1]}")

    if run_summary is not None:
        n_ranks = run_summary["n_ranks"]
        grid = tuple(run_summary["box_grid"])
        policy = BalancePolicy(
            strategy=Strategy(run_summary["strategy"]),
            interval=run_summary["interval"],
            improvement_threshold=run_summary["improvement_threshold"],
            threshold_mode=run_summary["threshold_mode"],
            static_step=run_summary["static_step"])
        total_steps = run_summary["total_steps"]
    else:
        n_ranks = args.ranks if args.ranks else int(owner.max()) + 1
        grid = None
        strategy = Strategy.KNAPSACK
        static_step = None
        disabled = trace.shape[0] + 1
        interval = args.interval if args.interval is not None else 10
        if args.policy == "sfc":
            strategy = Strategy.SFC
        elif args.policy == "static":
            interval, static_step = disabled, 0
        elif args.policy == "none":
            interval = disabled
        policy = BalancePolicy(
            strategy=strategy, interval=interval,
            improvement_threshold=(args.threshold if args.threshold is not None
                                   else 0.10),
            threshold_mode=args.threshold_mode or "relative",
            static_step=static_step)
        total_steps = args.assume_total or (first_step + trace.shape[0])
        if args.grid:
            parts = args.grid.split(",")
            if len(parts) != 2:
                raise ConfigError(f"--grid expects NBZ,NBX, got {args.grid!r}")
            grid = (int(parts[0]), int(parts[1]))

    curve = None
    if policy.strategy is Strategy.SFC:
        if grid is None:
            raise ConfigError("sfc replay needs --grid NBZ,NBX (or --run-dir)")
        if grid[0] * grid[1] != owner.size:
            raise ConfigError(f"grid {grid} does not match {owner.size} boxes")
        ba = build_box_array((grid[0], grid[1]), 1)
        curve = morton_order(ba)

    dm = DistributionMapping(owner=owner, n_ranks=n_ranks)
    rows = []
    adoptions = 0
    for offset in range(trace.shape[0]):
        step = first_step + offset
        costs = CostVector(values=trace[offset], step=step)
        if should_attempt(policy, step, total_steps):
            outcome = attempt_rebalance(costs, dm, policy, step, curve=curve,
                                        force=True)
        else:
            e_cur, _ = efficiency_flagged(costs, dm)
            outcome = BalanceOutcome(proposed=dm, efficiency_current=e_cur,
                                     efficiency_proposed=e_cur, adopted=False,
                                     attempted=False)
        if outcome.adopted:
            dm = outcome.proposed
            adoptions += 1
        eff_after = (outcome.efficiency_proposed if outcome.adopted
                     else outcome.efficiency_current)
        rows.append((step, outcome.efficiency_current, eff_after,
                     outcome.adopted))

    mean_eff = float(np.mean([r[2] for r in rows]))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "replay_metrics.csv",
                   ["step", "eff_before", "eff_after", "adopted"], rows)
        with open(out_dir / "replay_summary.json", "w") as fh:
            json.dump({"steps": len(rows), "adoption_count": adoptions,
                       "mean_efficiency": mean_eff}, fh, indent=2,
                      sort_keys=True)
            fh.write("\n")
    print(f"replay: {len(rows)} steps, {adoptions} adoptions, "
          f"mean efficiency {mean_eff:.3f}")
    return EXIT_OK


def read_scaling_points(path: Path) -> list[tuple[float, float]]:
    points = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            points.append((float(row["nodes"]), float(row["walltime"])))
    return points


def cmd_fit(args) -> int:
    points = read_scaling_points(Path(args.points))
    model = fit_scaling(points)
    print(f"exponent x = {model.exponent:.6f}")
    print(f"log intercept = {model.log_intercept:.6f}")
    print(f"rms log residual = {model.residual:.3e}")
    for e0 in args.e0 or []:
        s = max_speedup(e0, model.exponent)
        print(f"max speedup for E0={e0:g}: {s:.3f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        raise ConfigError("compare needs at least two run directories")
    summaries = []
    for d in args.runs:
        path = Path(d) / "summary.json"
        summaries.append((Path(d), json.loads(path.read_text())))
    scenario_ids = {s["scenario_id"] for _, s in summaries}
    if len(scenario_ids) != 1:
        raise ConfigError(
            f"runs cover different scenarios: {sorted(scenario_ids)}")

    common = min(s["completed_steps"] for _, s in summaries)
    truncated = any(s["completed_steps"] != s["total_steps"]
                    or s["completed_steps"] != common for _, s in summaries)
    walltimes = [_walltime_over(d, common) for d, _ in summaries]
    base = walltimes[0]

    header = (f"{'run':<28} {'policy':<10} {'steps':>6} {'walltime':>12} "
              f"{'mean_eff':>9} {'speedup':>8} {'oom':>4}")
    print(header)
    print("-" * len(header))
    for (d, s), w in zip(summaries, walltimes):
        speedup = base / w if w > 0 else float("inf")
        print(f"{d.name[:28]:<28} {s['policy']:<10} "
              f"{s['completed_steps']:>6} {w:>12.2f} "
              f"{s['mean_efficiency']:>9.3f} {speedup:>8.2f} "
              f"{'yes' if s['oom'] else 'no':>4}")
    if truncated:
        print(f"note: comparison truncated to the common completed range "
              f"of {common} steps")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="lbsim",
                     description="Dynamic load balancing laboratory for "
                                 "block-decomposed particle-mesh workloads")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write CSV reports")
    run.add_argument("--scenario", default="default",
                     help="preset name or scenario YAML path")
    _add_policy_flags(run)
    run.add_argument("--box-size", type=int, help="box side length override")
    run.add_argument("--cost", choices=["heuristic", "measured", "instrumented"],
                     help="cost provider override")
    run.add_argument("--weights", help="heuristic weights WP,WC")
    run.add_argument("--seed", type=int, help="RNG seed override")
    run.add_argument("--steps", type=int, help="total steps override")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--compare-to", help="baseline run directory; adds "
                                          "speedup_vs_baseline to the summary")
    run.set_defaults(func=cmd_run)

    replay = sub.add_parser("replay",
                            help="re-run balance decisions over a cost trace")
    replay.add_argument("--run-dir", help="directory written by `lbsim run` "
                        "(reads trace, mapping, and policy from it)")
    replay.add_argument("--trace", help="cost trace CSV (step,box_id,cost)")
    replay.add_argument("--mapping", help="mapping CSV (step,box_id,rank); "
                        "earliest block is the initial mapping")
    replay.add_argument("--ranks", type=int, help="rank count "
                        "(default: max rank in mapping + 1)")
    replay.add_argument("--grid", help="box grid NBZ,NBX (needed for sfc)")
    replay.add_argument("--assume-total", type=int,
                        help="total steps for interval gating "
                        "(default: trace length)")
    _add_policy_flags(replay)
    replay.add_argument("--out", help="directory for replay outputs")
    replay.set_defaults(func=cmd_replay)

    fit = sub.add_parser("fit", help="fit the strong-scaling exponent")
    fit.add_argument("--points", required=True,
                     help="CSV of nodes,walltime")
    fit.add_argument("--e0", type=float, action="append",
                     help="initial efficiency; prints (1/E0)^x "
                          "(repeatable)")
    fit.set_defaults(func=cmd_fit)

    compare = sub.add_parser("compare", help="compare completed runs")
    compare.add_argument("runs", nargs="+", help="run output directories")
    compare.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
