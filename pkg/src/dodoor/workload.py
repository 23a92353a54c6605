"""Workload generation and trace ingestion.

Two synthetic generators are provided: a cloud-VM-like trace (long tasks,
skewed short, hardware-independent lifetimes) and a serverless-function
trace built from profiled benchmark tasks whose cores, memory, and duration
all vary with the node type they land on. Both are pure functions of
(parameters, seed). A CSV schema round-trips traces to disk.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from random import Random
from typing import Optional, Sequence

from .core import NodeSpec, ResourceVector, TaskSpec, fits_within


class TraceParseError(ValueError):
    """Trace file is malformed (reported with the offending line)."""


class TraceValidationError(ValueError):
    """Trace violates an invariant (reported with the offending tasks)."""


@dataclass
class Trace:
    """An ordered task sequence plus the provenance of how it was made."""

    tasks: list[TaskSpec]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tasks)


# Server fleet mix: node type -> (cores, memory MB, count in the 100-node
# reference topology). Memory uses 1 GB = 1024 MB.
NODE_TYPES: dict[str, tuple[int, int, int]] = {
    "m510": (8, 64 * 1024, 40),
    "xl170": (10, 64 * 1024, 25),
    "c6525-25g": (16, 128 * 1024, 18),
    "c6620": (28, 128 * 1024, 17),
}

TYPE_ORDER = tuple(NODE_TYPES)


def make_node(node_id: int, node_type: str) -> NodeSpec:
    cores, memory, _ = NODE_TYPES[node_type]
    return NodeSpec(node_id, node_type, ResourceVector(cores, memory), cores)


def build_topology(preset: str) -> list[NodeSpec]:
    """Build a node list from a preset name.

    ``table2-100`` is the 100-node reference mix (40/25/18/17 across the four
    types); ``scaled(n)`` preserves that ratio at n nodes using largest-
    remainder rounding (ties broken by type order).
    """
    preset = preset.strip()
    if preset == "table2-100":
        counts = {t: NODE_TYPES[t][2] for t in TYPE_ORDER}
    elif preset.startswith("scaled(") and preset.endswith(")"):
        try:
            n = int(preset[len("scaled(") : -1])
        except ValueError:
            raise ValueError(f"invalid preset: {preset!r}") from None
        if n < len(TYPE_ORDER):
            raise ValueError(f"scaled(n) needs n >= {len(TYPE_ORDER)}, got {n}")
        counts = _scaled_counts(n)
    else:
        raise ValueError(f"unknown topology preset: {preset!r}")

    nodes = []
    node_id = 0
    for node_type in TYPE_ORDER:
        for _ in range(counts[node_type]):
            nodes.append(make_node(node_id, node_type))
            node_id += 1
    return nodes


def _scaled_counts(n: int) -> dict[str, int]:
    total = sum(NODE_TYPES[t][2] for t in TYPE_ORDER)
    quotas = {t: n * NODE_TYPES[t][2] / total for t in TYPE_ORDER}
    counts = {t: int(quotas[t]) for t in TYPE_ORDER}
    leftovers = sorted(
        TYPE_ORDER,
        key=lambda t: (-(quotas[t] - counts[t]), TYPE_ORDER.index(t)),
    )
    for t in leftovers[: n - sum(counts.values())]:
        counts[t] += 1
    return counts


# Profiled serverless benchmark tasks: name -> node type -> (cores, MB, ms).
FUNCTIONBENCH_PROFILES: dict[str, dict[str, tuple[int, int, int]]] = {
    "float_op": {
        "c6525-25g": (1, 8, 219),
        "c6620": (2, 8, 275),
        "m510": (2, 8, 349),
        "xl170": (2, 8, 239),
    },
    "pyaes": {
        "c6525-25g": (1, 9, 222),
        "c6620": (2, 11, 288),
        "m510": (2, 11, 362),
        "xl170": (1, 11, 251),
    },
    "linpack": {
        "c6525-25g": (8, 29, 372),
        "c6620": (14, 34, 504),
        "m510": (4, 35, 595),
        "xl170": (5, 31, 431),
    },
    "matmul": {
        "c6525-25g": (8, 41, 456),
        "c6620": (14, 38, 547),
        "m510": (4, 39, 699),
        "xl170": (5, 37, 473),
    },
    "chameleon": {
        "c6525-25g": (2, 38, 585),
        "c6620": (2, 37, 569),
        "m510": (2, 38, 966),
        "xl170": (2, 38, 612),
    },
    "rnn_name_gen": {
        "c6525-25g": (8, 468, 2084),
        "c6620": (14, 470, 1738),
        "m510": (4, 468, 3132),
        "xl170": (5, 467, 2068),
    },
    "lr_predict": {
        "c6525-25g": (8, 210, 2937),
        "c6620": (14, 209, 2462),
        "m510": (4, 210, 4341),
        "xl170": (5, 210, 3144),
    },
    "lr_train": {
        "c6525-25g": (8, 212, 4744),
        "c6620": (14, 213, 3532),
        "m510": (4, 212, 16201),
        "xl170": (5, 212, 7852),
    },
}


def _functionbench_task(task_id: int, name: str) -> TaskSpec:
    profile = FUNCTIONBENCH_PROFILES[name]
    # Schedulers see one demand vector: the worst case over node types.
    demand = ResourceVector(
        max(p[0] for p in profile.values()),
        max(p[1] for p in profile.values()),
    )
    durations = {node_type: p[2] for node_type, p in profile.items()}
    exec_demands = {
        node_type: ResourceVector(p[0], p[1]) for node_type, p in profile.items()
    }
    return TaskSpec(task_id, 0, demand, durations, exec_demands)


def gen_functionbench(count: int, seed: int) -> Trace:
    """Synthetic serverless trace: task types drawn uniformly at random."""
    if count <= 0:
        raise ValueError("count must be positive")
    rng = Random(seed)
    names = tuple(FUNCTIONBENCH_PROFILES)
    tasks = [_functionbench_task(i, names[rng.randrange(len(names))]) for i in range(count)]
    return Trace(tasks, {"generator": "functionbench", "count": count, "seed": seed})


AZURE_DURATION_CAP_MS = 600_000
AZURE_MEAN_DURATION_MS = 247_800  # 4.13 minutes
AZURE_ENVELOPE = ResourceVector(96, 672 * 1024)  # the reference large-VM host
_AZURE_CLAMP = ResourceVector(8, 64 * 1024)  # smallest node in the fleet mix
# VM size ladder as fractions of the envelope's 96 cores, skewed small.
_AZURE_CORE_LADDER = (1, 2, 4, 8, 16, 32)
_AZURE_CORE_WEIGHTS = (0.30, 0.28, 0.20, 0.12, 0.06, 0.04)
_AZURE_MB_PER_CORE = AZURE_ENVELOPE.memory / AZURE_ENVELOPE.cpu  # 7168


def _truncated_exp_rate(mean: float, cap: float) -> float:
    """Rate of an exponential truncated to (0, cap] with the given mean."""
    if not (0 < mean < cap / 2):
        raise ValueError("truncated mean must lie below cap/2")

    def truncated_mean(rate: float) -> float:
        if rate * cap > 700:  # truncation mass negligible, avoid expm1 overflow
            return 1.0 / rate
        return 1.0 / rate - cap / math.expm1(rate * cap)

    # truncated_mean decreases in rate, from cap/2 at 0+ toward 1/rate.
    lo, hi = 1e-12, 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if truncated_mean(mid) > mean:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def gen_azure_like(count: int, seed: int) -> Trace:
    """Cloud-VM-like trace: lifetimes from an exponential truncated at 10
    minutes calibrated to a 4.13-minute mean, demands drawn as fractions of
    the large-VM envelope and clamped to fit the smallest node type.
    Lifetimes are hardware independent (same duration on every node type).
    """
    if count <= 0:
        raise ValueError("count must be positive")
    rng = Random(seed)
    rate = _truncated_exp_rate(AZURE_MEAN_DURATION_MS, AZURE_DURATION_CAP_MS)
    trunc_mass = -math.expm1(-rate * AZURE_DURATION_CAP_MS)

    tasks = []
    for task_id in range(count):
        u = rng.random()
        duration = -math.log(1.0 - u * trunc_mass) / rate
        duration_ms = max(1, min(AZURE_DURATION_CAP_MS, round(duration)))

        cores_raw = rng.choices(_AZURE_CORE_LADDER, weights=_AZURE_CORE_WEIGHTS)[0]
        cores = min(cores_raw, _AZURE_CLAMP.cpu)
        memory = min(round(cores_raw * _AZURE_MB_PER_CORE), _AZURE_CLAMP.memory)
        demand = ResourceVector(cores, memory)
        durations = {node_type: duration_ms for node_type in TYPE_ORDER}
        tasks.append(TaskSpec(task_id, 0, demand, durations))
    return Trace(tasks, {"generator": "azure-like", "count": count, "seed": seed})


def assign_arrivals_poisson(trace: Trace, qps: float, seed: int) -> Trace:
    """Rewrite submit times as a Poisson arrival process of the given rate.

    Inter-arrival gaps are exponential; timestamps are the rounded cumulative
    sum so the long-run rate is unbiased despite millisecond quantization.
    Task order is preserved.
    """
    if qps <= 0:
        raise ValueError("qps must be positive")
    rng = Random(seed)
    mean_gap_ms = 1000.0 / qps
    clock = 0.0
    tasks = []
    for task in trace.tasks:
        clock += rng.expovariate(1.0 / mean_gap_ms)
        tasks.append(task.with_submit_time(round(clock)))
    metadata = dict(trace.metadata)
    metadata.update({"qps": qps, "arrival_seed": seed})
    return Trace(tasks, metadata)


def saturation_qps(trace: Trace, topology: Sequence[NodeSpec], target_utilization: float = 1.0) -> float:
    """Arrival rate that offers ``target_utilization`` of cluster capacity.

    Spreads each task uniformly over the nodes that can hold it (tasks whose
    demand exceeds the small node types concentrate on the large ones) and
    finds the arrival rate at which the busiest node's expected core or
    memory consumption reaches its capacity.
    """
    if not trace.tasks or not topology:
        raise ValueError("need a non-empty trace and topology")
    cpu_load = [0.0] * len(topology)
    mem_load = [0.0] * len(topology)
    eligible_memo: dict[tuple[float, float], list[int]] = {}
    for task in trace.tasks:
        key = (task.demand.cpu, task.demand.memory)
        eligible = eligible_memo.get(key)
        if eligible is None:
            eligible = [
                i for i, node in enumerate(topology) if fits_within(task.demand, node.capacity)
            ]
            if not eligible:
                raise ValueError(f"task {task.task_id} fits no node")
            eligible_memo[key] = eligible
        share = 1.0 / len(eligible)
        for i in eligible:
            node_type = topology[i].node_type
            exec_demand = task.demand_on(node_type)
            duration = task.durations[node_type]
            cpu_load[i] += exec_demand.cpu * duration * share
            mem_load[i] += exec_demand.memory * duration * share
    m = len(trace.tasks)
    qps = math.inf
    for i, node in enumerate(topology):
        if cpu_load[i]:
            qps = min(qps, node.capacity.cpu * 1000.0 * m / cpu_load[i])
        if mem_load[i]:
            qps = min(qps, node.capacity.memory * 1000.0 * m / mem_load[i])
    return target_utilization * qps


def validate_trace(trace: Trace, topology: Optional[Sequence[NodeSpec]] = None) -> list[str]:
    """Return a list of invariant violations (empty when the trace is clean)."""
    problems = []
    for i, task in enumerate(trace.tasks):
        if task.task_id != i:
            problems.append(
                f"task_ids must be unique and dense from 0: position {i} holds id {task.task_id}"
            )
            break
    for prev, cur in zip(trace.tasks, trace.tasks[1:]):
        if cur.submit_time < prev.submit_time:
            problems.append(
                f"submit times must be non-decreasing: task {cur.task_id} at {cur.submit_time} "
                f"after task {prev.task_id} at {prev.submit_time}"
            )
            break
    if topology is not None:
        node_types = {node.node_type for node in topology}
        for task in trace.tasks:
            missing = node_types - set(task.durations)
            if missing:
                problems.append(
                    f"task {task.task_id} lacks durations for node types {sorted(missing)}"
                )
                continue
            if not any(fits_within(task.demand, node.capacity) for node in topology):
                problems.append(
                    f"task {task.task_id} demand ({task.demand.cpu} cores, "
                    f"{task.demand.memory} MB) exceeds every node's capacity"
                )
    return problems


def _duration_columns(node_types: Sequence[str]) -> list[str]:
    return [f"duration_ms_{t}" for t in node_types]


def write_trace(trace: Trace, path: str) -> None:
    """Write a trace as CSV.

    Columns: task_id, submit_ms, cpu_cores, mem_mb, one duration_ms_<type>
    per node type, and (only when a task carries per-type execution demands)
    exec_cpu_cores_<type> / exec_mem_mb_<type> pairs.
    """
    if not trace.tasks:
        raise ValueError("refusing to write an empty trace")
    node_types = sorted({t for task in trace.tasks for t in task.durations})
    has_exec = any(task.exec_demands is not None for task in trace.tasks)
    header = ["task_id", "submit_ms", "cpu_cores", "mem_mb"] + _duration_columns(node_types)
    if has_exec:
        for t in node_types:
            header += [f"exec_cpu_cores_{t}", f"exec_mem_mb_{t}"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for task in trace.tasks:
            row = [task.task_id, task.submit_time, task.demand.cpu, task.demand.memory]
            row += [task.durations[t] for t in node_types]
            if has_exec:
                for t in node_types:
                    exec_demand = task.demand_on(t)
                    row += [exec_demand.cpu, exec_demand.memory]
            writer.writerow(row)


def _num(value: str, line: int, column: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise TraceParseError(f"line {line}: column {column!r} is not numeric: {value!r}") from None


def load_trace(path: str, topology: Optional[Sequence[NodeSpec]] = None) -> Trace:
    """Load a CSV trace, validating invariants (and fit, given a topology)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise TraceParseError(f"{path}: empty file")
        required = ["task_id", "submit_ms", "cpu_cores", "mem_mb"]
        for column in required:
            if column not in reader.fieldnames:
                raise TraceParseError(f"{path}: missing required column {column!r}")
        duration_types = [
            c[len("duration_ms_") :] for c in reader.fieldnames if c.startswith("duration_ms_")
        ]
        if not duration_types:
            raise TraceParseError(f"{path}: needs at least one duration_ms_<type> column")
        exec_types = [
            c[len("exec_cpu_cores_") :]
            for c in reader.fieldnames
            if c.startswith("exec_cpu_cores_")
        ]

        tasks = []
        for line, row in enumerate(reader, start=2):
            try:
                task_id = int(row["task_id"])
                submit = int(row["submit_ms"])
            except (TypeError, ValueError):
                raise TraceParseError(f"line {line}: task_id/submit_ms must be integers") from None
            demand = ResourceVector(
                _num(row["cpu_cores"], line, "cpu_cores"),
                _num(row["mem_mb"], line, "mem_mb"),
            )
            durations = {}
            for t in duration_types:
                ms = _num(row[f"duration_ms_{t}"], line, f"duration_ms_{t}")
                if ms <= 0:
                    raise TraceParseError(f"line {line}: duration for {t!r} must be positive")
                durations[t] = int(ms)
            exec_demands = None
            if exec_types:
                exec_demands = {
                    t: ResourceVector(
                        _num(row[f"exec_cpu_cores_{t}"], line, f"exec_cpu_cores_{t}"),
                        _num(row[f"exec_mem_mb_{t}"], line, f"exec_mem_mb_{t}"),
                    )
                    for t in exec_types
                }
            tasks.append(TaskSpec(task_id, submit, demand, durations, exec_demands))

    trace = Trace(tasks, {"source": path})
    problems = validate_trace(trace, topology)
    seen = set()
    for task in tasks:
        if task.task_id in seen:
            problems.append(f"duplicate task_id {task.task_id}")
        seen.add(task.task_id)
    if problems:
        raise TraceValidationError(f"{path}: " + "; ".join(problems[:10]))
    return trace
