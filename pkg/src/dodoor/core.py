"""Shared domain types: resource vectors, tasks, nodes, load snapshots, config.

All timestamps and durations are integer milliseconds. Resources are two
dimensional (CPU cores, memory MB); adding a dimension is an additive change.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional


class SchedulingError(Exception):
    """Base class for scheduling-layer failures."""


class UnschedulableTask(SchedulingError):
    """No registered node can ever satisfy the task's demand."""


class RegistrationError(SchedulingError):
    """Membership protocol violation (duplicate/unknown node or scheduler)."""


@dataclass(frozen=True, slots=True)
class ResourceVector:
    """A (cpu cores, memory MB) pair. Components are non-negative reals."""

    cpu: float
    memory: float

    def __post_init__(self):
        if self.cpu < 0 or self.memory < 0:
            raise ValueError(f"resource components must be non-negative: {self}")

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(self.cpu + other.cpu, self.memory + other.memory)

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        # Callers guarantee the result stays non-negative; __post_init__ enforces it.
        return ResourceVector(self.cpu - other.cpu, self.memory - other.memory)

    def is_zero(self) -> bool:
        return self.cpu == 0 and self.memory == 0


ZERO_VECTOR = ResourceVector(0, 0)


def dot(a: ResourceVector, b: ResourceVector) -> float:
    """Inner product of two resource vectors."""
    return a.cpu * b.cpu + a.memory * b.memory


def l2_norm_sq(c: ResourceVector) -> float:
    """Squared L2 norm of a capacity vector.

    Rejects capacities with any zero component: they would make the
    normalized load score degenerate downstream.
    """
    if c.cpu <= 0 or c.memory <= 0:
        raise ValueError(f"capacity must be strictly positive in both components: {c}")
    return c.cpu * c.cpu + c.memory * c.memory


def fits_within(demand: ResourceVector, capacity: ResourceVector) -> bool:
    """True iff demand <= capacity component-wise (exact fit admissible)."""
    return demand.cpu <= capacity.cpu and demand.memory <= capacity.memory


@dataclass(frozen=True, slots=True)
class TaskSpec:
    """One task: identity, arrival time, demand, and per-node-type durations.

    ``task_id`` doubles as the seed for placement randomness, so it must be
    unique within a trace. ``durations`` maps node type -> estimated runtime
    in ms and must cover every node type of the topology the task runs on.
    ``exec_demands`` optionally overrides the demand per node type at
    execution time (profiled workloads whose footprint depends on hardware);
    schedulers always see ``demand``.
    """

    task_id: int
    submit_time: int
    demand: ResourceVector
    durations: Mapping[str, int]
    exec_demands: Optional[Mapping[str, ResourceVector]] = None

    def __post_init__(self):
        if self.task_id < 0:
            raise ValueError(f"task_id must be non-negative: {self.task_id}")
        if not self.durations:
            raise ValueError(f"task {self.task_id}: durations map is empty")
        for node_type, ms in self.durations.items():
            if ms <= 0:
                raise ValueError(
                    f"task {self.task_id}: duration for {node_type!r} must be positive, got {ms}"
                )

    def duration_on(self, node_type: str) -> int:
        return self.durations[node_type]

    def demand_on(self, node_type: str) -> ResourceVector:
        if self.exec_demands is None:
            return self.demand
        return self.exec_demands.get(node_type, self.demand)

    def with_submit_time(self, submit_time: int) -> "TaskSpec":
        return replace(self, submit_time=submit_time)


@dataclass(frozen=True, slots=True)
class NodeSpec:
    """A server node: type tag, capacity, and core count.

    ``capacity.cpu`` equals ``core_count``: a running task's cpu demand
    consumes cores, which bounds per-node concurrency.
    """

    node_id: int
    node_type: str
    capacity: ResourceVector
    core_count: int

    def __post_init__(self):
        if self.core_count <= 0:
            raise ValueError(f"node {self.node_id}: core_count must be positive")
        if self.capacity.cpu != self.core_count:
            raise ValueError(
                f"node {self.node_id}: capacity.cpu ({self.capacity.cpu}) must equal "
                f"core_count ({self.core_count})"
            )
        if self.capacity.memory <= 0:
            raise ValueError(f"node {self.node_id}: memory capacity must be positive")


@dataclass(frozen=True, slots=True)
class NodeLoadSnapshot:
    """Cached per-node state: in-flight load vector, total pending estimated
    duration, and requests-in-flight count."""

    load: ResourceVector
    total_duration: int
    rif: int

    def __post_init__(self):
        if self.total_duration < 0 or self.rif < 0:
            raise ValueError(f"snapshot fields must be non-negative: {self}")

    @staticmethod
    def zero() -> "NodeLoadSnapshot":
        return _ZERO_SNAPSHOT


_ZERO_SNAPSHOT = NodeLoadSnapshot(ZERO_VECTOR, 0, 0)


def default_batch_size(num_nodes: int) -> int:
    """Default load-refresh batch size: half the node count."""
    return max(1, num_nodes // 2)


def default_mini_batch(batch_size: int, num_schedulers: int) -> int:
    """Default per-scheduler delta flush threshold.

    Bounded by b/(2s) so that every scheduler's deltas land in the next
    batch's push even under round-robin task spread.
    """
    return max(1, batch_size // (2 * num_schedulers))


@dataclass(frozen=True, slots=True)
class ClusterConfig:
    """Run-wide tunables for schedulers, the data store, and the transport.

    ``batch_size`` (b) is the data-store push period in scheduling decisions;
    ``duration_weight`` (alpha) trades resource balance against pending-
    duration balance in the load score; ``mini_batch`` is the per-scheduler
    delta flush threshold. ``placement_salt`` is mixed into every task's
    placement RNG seed so repeated trials of one workload can differ; salt 0
    reproduces pure task-id seeding.

    Transport: each message takes ``hop_latency_ms`` to reach its
    destination; with ``contention`` on, deliveries at one endpoint are
    additionally serialized through a FIFO with ``endpoint_service_ms``
    service time (models a bounded RPC worker pool).
    """

    batch_size: int
    duration_weight: float = 0.5
    num_schedulers: int = 5
    mini_batch: int = 0  # 0 -> derived default
    qps: float = 0.0  # informational; arrival times live in the trace
    hop_latency_ms: int = 1
    endpoint_service_ms: int = 1
    contention: bool = True
    duration_noise: float = 0.0  # multiplicative jitter amplitude, 0 disables
    placement_salt: int = 0
    utilization_sample_ms: int = 10_000

    def __post_init__(self):
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if not (0.0 <= self.duration_weight <= 1.0):
            raise ValueError("duration_weight must lie in [0, 1]")
        if self.num_schedulers <= 0:
            raise ValueError("num_schedulers must be positive")
        if self.mini_batch == 0:
            object.__setattr__(
                self, "mini_batch", default_mini_batch(self.batch_size, self.num_schedulers)
            )
        if not (1 <= self.mini_batch <= self.batch_size):
            raise ValueError(
                f"mini_batch must lie in [1, batch_size]: {self.mini_batch} vs {self.batch_size}"
            )
        if self.qps < 0:
            raise ValueError("qps must be non-negative")
        if self.hop_latency_ms < 0 or self.endpoint_service_ms < 0:
            raise ValueError("latency parameters must be non-negative")
        if not (0.0 <= self.duration_noise < 1.0):
            raise ValueError("duration_noise must lie in [0, 1)")
        if self.utilization_sample_ms <= 0:
            raise ValueError("utilization_sample_ms must be positive")

    @classmethod
    def for_topology(cls, num_nodes: int, **overrides) -> "ClusterConfig":
        """Config with the standard defaults derived from the node count."""
        if "batch_size" not in overrides or overrides["batch_size"] is None:
            overrides["batch_size"] = default_batch_size(num_nodes)
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return cls(**overrides)


def placement_seed(task_id: int, salt: int = 0) -> int:
    """Seed for a task's placement RNG: the task id, salted per run.

    The generator is CPython's Mersenne Twister (``random.Random``), which is
    fully specified and portable across platforms; with salt 0 the seed is
    the bare task id.
    """
    return (salt << 32) + task_id
