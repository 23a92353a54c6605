"""Run post-processing: summary metrics, utilization series, gap statistic,
closed-form message accounting, and machine-readable report emission.

Percentiles are nearest-rank: the p-quantile of a sorted sample of size n is
the element at index ceil(p*n)-1. Cluster utilization variance is the
population variance (the node set is the whole population, not a sample).
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from .core import ClusterConfig
from .sim import RunResult, scheduler_handled

SUMMARY_SCHEMA = "run-summary/v1"
UTILIZATION_SCHEMA = "utilization/v1"


def percentile_nearest_rank(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile of an unsorted sample; p in (0, 1]."""
    if not values:
        raise ValueError("percentile of an empty sample")
    if not (0.0 < p <= 1.0):
        raise ValueError("p must lie in (0, 1]")
    ordered = sorted(values)
    rank = min(len(ordered), max(1, math.ceil(p * len(ordered))))
    return ordered[rank - 1]


@dataclass(frozen=True)
class RunSummary:
    """The per-run metric set, one row per (policy, workload, seed) cell."""

    policy: str
    num_tasks: int
    scheduler_handled_messages: int
    total_messages: int
    push_count: int
    throughput_tasks_per_s: float
    makespan_mean_ms: float
    makespan_p95_ms: float
    sched_latency_mean_ms: float
    sched_latency_p95_ms: float
    first_arrival_ms: int
    last_completion_ms: int
    config: dict


def summarize(result: RunResult) -> RunSummary:
    """Aggregate a completed run.

    Makespan is completion minus submission per task; scheduling latency is
    server enqueue delivery minus scheduler arrival (the scheduler-induced
    slice of makespan); throughput divides task count by the span from first
    arrival to last completion.
    """
    records = result.records
    if not records:
        raise ValueError("cannot summarize an empty run")
    makespans = []
    latencies = []
    for record in records:
        if record.complete is None or record.enqueue_deliver is None:
            raise ValueError(f"task {record.task_id} did not complete")
        makespans.append(record.complete - record.submit)
        latencies.append(record.enqueue_deliver - record.sched_arrival)
    first_arrival = min(record.submit for record in records)
    last_completion = max(record.complete for record in records)
    span_ms = max(1, last_completion - first_arrival)
    handled = sum(1 for message in result.messages if scheduler_handled(message))
    return RunSummary(
        policy=result.policy,
        num_tasks=len(records),
        scheduler_handled_messages=handled,
        total_messages=len(result.messages),
        push_count=result.push_count,
        throughput_tasks_per_s=len(records) * 1000.0 / span_ms,
        makespan_mean_ms=sum(makespans) / len(makespans),
        makespan_p95_ms=percentile_nearest_rank(makespans, 0.95),
        sched_latency_mean_ms=sum(latencies) / len(latencies),
        sched_latency_p95_ms=percentile_nearest_rank(latencies, 0.95),
        first_arrival_ms=first_arrival,
        last_completion_ms=last_completion,
        config=_config_echo(result.config),
    )


def _config_echo(config: ClusterConfig) -> dict:
    return asdict(config)


@dataclass(frozen=True)
class UtilizationSeries:
    """Cluster-level utilization over time.

    ``node_avg`` holds, per sample instant, each node's average of cpu and
    memory utilization; ``cluster_mean``/``cluster_variance`` are the mean
    and population variance of that per-node average across nodes.
    """

    times: list[int]
    node_avg: list[list[float]]
    cluster_mean: list[float]
    cluster_variance: list[float]

    @property
    def mean_variance(self) -> float:
        """Time average of the per-instant cluster variance."""
        if not self.cluster_variance:
            return 0.0
        return sum(self.cluster_variance) / len(self.cluster_variance)

    @property
    def mean_utilization(self) -> float:
        if not self.cluster_mean:
            return 0.0
        return sum(self.cluster_mean) / len(self.cluster_mean)


def utilization_series(result: RunResult) -> UtilizationSeries:
    times = []
    node_avg = []
    means = []
    variances = []
    for sample in result.samples:
        avg = [(cpu + mem) / 2.0 for cpu, mem in sample.node_utils]
        n = len(avg)
        mean = sum(avg) / n
        variance = sum((u - mean) ** 2 for u in avg) / n
        times.append(sample.time)
        node_avg.append(avg)
        means.append(mean)
        variances.append(variance)
    return UtilizationSeries(times, node_avg, means, variances)


def gap_statistic(result: RunResult, at_time: int) -> float:
    """Max minus mean of per-node placement counts at an instant.

    Placements are counted cumulatively (every decision made at or before
    ``at_time``), the balanced-allocation reading of load.
    """
    counts = {node.node_id: 0 for node in result.topology}
    for record in result.records:
        if record.decided is not None and record.decided <= at_time and record.node_id is not None:
            counts[record.node_id] += 1
    values = list(counts.values())
    return max(values) - sum(values) / len(values)


# ------------------------------------------------------------- accounting


def expected_messages(
    policy: str,
    num_tasks: int,
    batch_size: Optional[int] = None,
    num_schedulers: Optional[int] = None,
    mini_batch: Optional[int] = None,
) -> int:
    """Closed-form scheduler-handled message count for a full run.

    Every decision costs a schedule-in plus an enqueue-out. Probing policies
    add one round-trip (request plus reply) per probe: two probes for pot,
    three for prequal. The cached scheduler instead pays one delta flush per
    mini-batch of decisions per scheduler, plus one pushed table per
    registered scheduler every batch of flushed decisions.
    """
    base = 2 * num_tasks
    if policy == "random":
        return base
    if policy == "pot":
        return base + 4 * num_tasks
    if policy == "prequal":
        return base + 6 * num_tasks
    if policy == "dodoor":
        if batch_size is None or num_schedulers is None or mini_batch is None:
            raise ValueError("dodoor accounting needs batch_size, num_schedulers, mini_batch")
        per_scheduler = [
            num_tasks // num_schedulers + (1 if i < num_tasks % num_schedulers else 0)
            for i in range(num_schedulers)
        ]
        flushes = sum(count // mini_batch for count in per_scheduler)
        pushes = (flushes * mini_batch) // batch_size
        return base + flushes + pushes * num_schedulers
    raise ValueError(f"unknown policy {policy!r}")


def count_scheduler_handled(result: RunResult) -> int:
    return sum(1 for message in result.messages if scheduler_handled(message))


def count_push_fanouts(result: RunResult) -> int:
    """Number of full-table push events (each fans out one message per scheduler)."""
    return result.push_count


def count_messages_of_kind(result: RunResult, kind: str) -> int:
    return sum(1 for message in result.messages if message.kind == kind)


# --------------------------------------------------------------- emission


def emit(summary: RunSummary, series: Optional[UtilizationSeries], out_dir: str, format: str) -> None:
    """Write reports under ``out_dir``.

    ``json`` writes summary.json; ``csv`` writes summary.csv plus (when a
    series is given) utilization.csv with one row per sample instant.
    """
    if format not in ("json", "csv"):
        raise ValueError(f"unknown format {format!r}; expected 'json' or 'csv'")
    os.makedirs(out_dir, exist_ok=True)
    if format == "json":
        payload = {"schema": SUMMARY_SCHEMA, **asdict(summary)}
        if series is not None:
            payload["utilization"] = {
                "schema": UTILIZATION_SCHEMA,
                "times": series.times,
                "cluster_mean": series.cluster_mean,
                "cluster_variance": series.cluster_variance,
            }
        _write_json(os.path.join(out_dir, "summary.json"), payload)
    else:
        fields = [k for k in asdict(summary) if k != "config"]
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            row = asdict(summary)
            writer.writerow([row[k] for k in fields])
        if series is not None:
            with open(os.path.join(out_dir, "utilization.csv"), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["time_ms", "cluster_mean", "cluster_variance"])
                for t, mean, variance in zip(
                    series.times, series.cluster_mean, series.cluster_variance
                ):
                    writer.writerow([t, mean, variance])


def read_summary(path: str) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema") != SUMMARY_SCHEMA:
        raise ValueError(f"{path}: unexpected schema {payload.get('schema')!r}")
    return payload


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")


def decision_log_lines(result: RunResult) -> list[str]:
    """Deterministic JSON-lines export of the decision log (for byte-level
    reproducibility checks and the decisions.csv artifact)."""
    by_task = {record.task_id: record for record in result.records}
    lines = []
    for decision in result.decisions:
        record = by_task[decision.task_id]
        lines.append(
            json.dumps(
                {
                    "task_id": decision.task_id,
                    "scheduler": record.scheduler_id,
                    "candidate_a": decision.candidate_a,
                    "candidate_b": decision.candidate_b,
                    "chosen": decision.chosen,
                    "score_a": None if decision.scores is None else decision.scores.score_a,
                    "score_b": None if decision.scores is None else decision.scores.score_b,
                    "cache_version": decision.cache_version,
                    "decided_ms": record.decided,
                },
                sort_keys=True,
            )
        )
    return lines
