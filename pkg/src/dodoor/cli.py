"""Experiment runner CLI.

Subcommands:
  run        execute one policy over a (qps, seed) grid, writing artifacts
  compare    run several policies on identical traces and emit joined deltas
  gen-trace  write a synthetic workload trace as CSV
  validate   check a config file or a trace/topology pair

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 3 IO failure.
All randomness flows from seeds declared in the config; the CLI itself
introduces none.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from typing import Optional

from . import metrics, sim, workload
from .core import ClusterConfig, SchedulingError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


class ConfigError(ValueError):
    pass


def _as_list(value) -> list:
    return value if isinstance(value, list) else [value]


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config


def _build_workload(spec: dict, seed: int, topology) -> workload.Trace:
    if "trace" in spec:
        if not os.path.exists(spec["trace"]):
            raise ConfigError(f"trace file does not exist: {spec['trace']}")
        return workload.load_trace(spec["trace"], topology)
    generator = spec.get("generator")
    count = spec.get("count", 0)
    if count <= 0:
        raise ConfigError("workload.count must be positive")
    if generator == "functionbench":
        return workload.gen_functionbench(count, seed)
    if generator == "azure-like":
        return workload.gen_azure_like(count, seed)
    raise ConfigError(f"unknown workload generator {spec.get('generator')!r}")


def _scalar(value, default):
    # sweep lists only apply to policies that expand over them
    if value is None or isinstance(value, list):
        return default
    return value


def _cluster_config(config: dict, num_nodes: int, qps: float, seed: int, alpha, batch) -> ClusterConfig:
    return ClusterConfig.for_topology(
        num_nodes,
        batch_size=batch if batch is not None else _scalar(config.get("batch_size"), None),
        duration_weight=alpha if alpha is not None else _scalar(config.get("alpha"), 0.5),
        num_schedulers=config.get("num_schedulers", 5),
        mini_batch=config.get("mini_batch", 0) or 0,
        qps=qps,
        hop_latency_ms=config.get("hop_latency_ms", 1),
        endpoint_service_ms=config.get("endpoint_service_ms", 1),
        contention=config.get("contention", True),
        duration_noise=config.get("duration_noise", 0.0),
        placement_salt=seed,
    )


def _cell_dir(out: str, policy: str, qps: float, seed: int, alpha, batch) -> str:
    name = f"q{qps:g}_s{seed}"
    if alpha is not None:
        name += f"_a{alpha:g}"
    if batch is not None:
        name += f"_b{batch}"
    return os.path.join(out, policy, name)


def _run_cell(args: dict) -> dict:
    """Execute one (policy, qps, seed[, alpha, batch]) cell and write artifacts.

    Top-level so process pools can pickle it. Returns the summary row used by
    compare; heavy logs live only in the artifact files.
    """
    config = args["config"]
    topology = workload.build_topology(config.get("topology", "table2-100"))
    trace = _build_workload(config["workload"], args["seed"], topology)
    qps = args["qps"]
    if qps:
        trace = workload.assign_arrivals_poisson(trace, qps, args["seed"])
    cluster = _cluster_config(
        config, len(topology), qps or 0.0, args["seed"], args.get("alpha"), args.get("batch")
    )
    result = sim.run(cluster, topology, trace, args["policy"])
    summary = metrics.summarize(result)
    series = metrics.utilization_series(result)

    cell_dir = _cell_dir(
        args["out"], args["policy"], qps or 0.0, args["seed"], args.get("alpha"), args.get("batch")
    )
    os.makedirs(cell_dir, exist_ok=True)
    metrics.emit(summary, series, cell_dir, "json")
    _write_decisions_csv(os.path.join(cell_dir, "decisions.csv"), result)
    _write_messages_csv(os.path.join(cell_dir, "messages.csv"), result)
    _write_utilization_csv(os.path.join(cell_dir, "utilization.csv"), result, series)

    row = {k: v for k, v in asdict(summary).items() if k != "config"}
    row.update(
        qps=qps or 0.0,
        seed=args["seed"],
        alpha=cluster.duration_weight,
        batch_size=cluster.batch_size,
        util_mean=series.mean_utilization,
        util_variance=series.mean_variance,
    )
    return row


def _write_decisions_csv(path: str, result: sim.RunResult) -> None:
    by_task = {record.task_id: record for record in result.records}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "task_id",
                "scheduler",
                "candidate_a",
                "candidate_b",
                "chosen",
                "score_a",
                "score_b",
                "cache_version",
                "decided_ms",
            ]
        )
        for decision in result.decisions:
            record = by_task[decision.task_id]
            scores = decision.scores
            writer.writerow(
                [
                    decision.task_id,
                    record.scheduler_id,
                    decision.candidate_a,
                    decision.candidate_b,
                    decision.chosen,
                    "" if scores is None else repr(scores.score_a),
                    "" if scores is None else repr(scores.score_b),
                    decision.cache_version,
                    record.decided,
                ]
            )


def _write_messages_csv(path: str, result: sim.RunResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "src", "dst", "send_ms", "deliver_ms"])
        for message in result.messages:
            writer.writerow(
                [message.kind, message.src, message.dst, message.send_time, message.deliver_time]
            )


def _write_utilization_csv(path: str, result: sim.RunResult, series) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_ms", "node_id", "cpu_util", "mem_util"])
        for sample in result.samples:
            for node, (cpu, mem) in zip(result.topology, sample.node_utils):
                writer.writerow([sample.time, node.node_id, cpu, mem])


def _expand_cells(config: dict, policies: list[str], out: str) -> list[dict]:
    qps_values = [float(q) for q in _as_list(config.get("qps", [0.0]))]
    seeds = [int(s) for s in _as_list(config.get("seeds", [config.get("workload", {}).get("seed", 0)]))]
    alphas = _as_list(config.get("alpha", [None]))
    batches = _as_list(config.get("batch_size", [None]))
    cells = []
    for policy in policies:
        # Only the cached scheduler is sensitive to alpha/batch sweeps;
        # baselines run once per (qps, seed) at defaults.
        policy_alphas = alphas if policy == "dodoor" else [None]
        policy_batches = batches if policy == "dodoor" else [None]
        for qps in qps_values:
            for seed in seeds:
                for alpha in policy_alphas:
                    for batch in policy_batches:
                        cells.append(
                            {
                                "config": config,
                                "policy": policy,
                                "qps": qps,
                                "seed": seed,
                                "alpha": alpha,
                                "batch": batch,
                                "out": out,
                            }
                        )
    return cells


def _execute_cells(cells: list[dict], parallel: int) -> list[dict]:
    if parallel > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_run_cell, cells))
    return [_run_cell(cell) for cell in cells]


_LOWER_IS_BETTER = (
    "scheduler_handled_messages",
    "makespan_mean_ms",
    "makespan_p95_ms",
    "sched_latency_mean_ms",
    "sched_latency_p95_ms",
    "util_variance",
)
_HIGHER_IS_BETTER = ("throughput_tasks_per_s",)


def _write_compare_outputs(rows: list[dict], out: str) -> None:
    fields = sorted({key for row in rows for key in row})
    with open(os.path.join(out, "compare.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)

    dodoor_rows = [row for row in rows if row["policy"] == "dodoor"]
    baseline_rows = [row for row in rows if row["policy"] != "dodoor"]
    if not dodoor_rows or not baseline_rows:
        return
    qps_values = sorted({row["qps"] for row in rows})
    deltas = []
    for qps in qps_values:
        mine = [r for r in dodoor_rows if r["qps"] == qps]
        theirs = [r for r in baseline_rows if r["qps"] == qps]
        for metric in _LOWER_IS_BETTER + _HIGHER_IS_BETTER:
            my_value = sum(r[metric] for r in mine) / len(mine)
            by_policy = {}
            for row in theirs:
                by_policy.setdefault(row["policy"], []).append(row[metric])
            averages = {p: sum(v) / len(v) for p, v in by_policy.items()}
            if metric in _HIGHER_IS_BETTER:
                best_policy = max(averages, key=lambda p: averages[p])
            else:
                best_policy = min(averages, key=lambda p: averages[p])
            best = averages[best_policy]
            delta_pct = (my_value - best) / best * 100.0 if best else 0.0
            deltas.append(
                {
                    "qps": qps,
                    "metric": metric,
                    "dodoor": my_value,
                    "best_baseline": best,
                    "best_policy": best_policy,
                    "delta_pct": delta_pct,
                }
            )
    with open(os.path.join(out, "deltas.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["qps", "metric", "dodoor", "best_baseline", "best_policy", "delta_pct"]
        )
        writer.writeheader()
        writer.writerows(deltas)


def _echo_config(config: dict, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(config, fh, indent=2)
        fh.write("\n")


def _cmd_run(args) -> int:
    config = load_config(args.config)
    policy = config.get("policy")
    if policy not in sim.POLICIES:
        raise ConfigError(f"config must set policy to one of {sim.POLICIES}, got {policy!r}")
    out = args.out or config.get("out", "results")
    if args.seed is not None:
        config["seeds"] = [args.seed]
    cells = _expand_cells(config, [policy], out)
    _echo_config(config, out)
    rows = _execute_cells(cells, args.parallel)
    _write_compare_outputs(rows, out)
    for row in rows:
        print(
            f"{row['policy']} qps={row['qps']:g} seed={row['seed']}: "
            f"msgs={row['scheduler_handled_messages']} "
            f"makespan_mean={row['makespan_mean_ms']:.0f}ms "
            f"p95={row['makespan_p95_ms']:.0f}ms "
            f"throughput={row['throughput_tasks_per_s']:.2f}/s"
        )
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = load_config(args.config)
    policies = config.get("policies")
    if not isinstance(policies, list) or len(policies) < 2:
        raise ConfigError("compare needs a 'policies' list with at least two entries")
    for policy in policies:
        if policy not in sim.POLICIES:
            raise ConfigError(f"unknown policy {policy!r}")
    out = args.out or config.get("out", "results")
    if args.seed is not None:
        config["seeds"] = [args.seed]
    cells = _expand_cells(config, policies, out)
    _echo_config(config, out)
    rows = _execute_cells(cells, args.parallel)
    _write_compare_outputs(rows, out)
    print(f"wrote {len(rows)} cells to {out}/compare.csv")
    return EXIT_OK


def _cmd_gen_trace(args) -> int:
    if args.count <= 0:
        raise ConfigError("count must be positive")
    if args.generator == "functionbench":
        trace = workload.gen_functionbench(args.count, args.seed)
    else:
        trace = workload.gen_azure_like(args.count, args.seed)
    if args.qps is not None:
        if args.qps <= 0:
            raise ConfigError("qps must be positive")
        trace = workload.assign_arrivals_poisson(trace, args.qps, args.seed)
    workload.write_trace(trace, args.out)
    print(f"wrote {len(trace)} tasks to {args.out} (seed={args.seed})")
    return EXIT_OK


def _cmd_validate(args) -> int:
    if args.config:
        config = load_config(args.config)
        topology = workload.build_topology(config.get("topology", "table2-100"))
        spec = config.get("workload")
        if not isinstance(spec, dict):
            raise ConfigError("config must contain a 'workload' object")
        seeds = _as_list(config.get("seeds", [spec.get("seed", 0)]))
        _build_workload(spec, int(seeds[0]), topology)
        print("config ok")
        return EXIT_OK
    if not args.trace:
        raise ConfigError("validate needs --config or --trace")
    topology = workload.build_topology(args.topology)
    trace = workload.load_trace(args.trace, topology)
    print(f"trace ok: {len(trace)} tasks, {len(topology)} nodes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dodoor-sim",
        description="Run deterministic scheduling experiments and comparisons.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one policy over a (qps, seed) grid")
    p_run.add_argument("--config", required=True, help="JSON experiment config")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="override the config's seed list")
    p_run.add_argument("--parallel", type=int, default=1, help="worker processes")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run several policies on identical traces")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--out")
    p_cmp.add_argument("--seed", type=int)
    p_cmp.add_argument("--parallel", type=int, default=1)
    p_cmp.set_defaults(func=_cmd_compare)

    p_gen = sub.add_parser("gen-trace", help="write a synthetic trace CSV")
    p_gen.add_argument("generator", choices=["azure-like", "functionbench"])
    p_gen.add_argument("--count", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--qps", type=float, help="also assign Poisson arrival times")
    p_gen.add_argument("--out", required=True, help="output CSV path")
    p_gen.set_defaults(func=_cmd_gen_trace)

    p_val = sub.add_parser("validate", help="validate a config or a trace/topology pair")
    p_val.add_argument("--config", help="JSON experiment config to check")
    p_val.add_argument("--trace", help="trace CSV to check")
    p_val.add_argument("--topology", default="table2-100")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        return args.func(args)
    except (ConfigError, ValueError, SchedulingError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # simulation bugs, quiescence failures
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
