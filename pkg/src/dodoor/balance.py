"""Placement-only balanced-allocation harness.

Drives the real scheduler and data-store objects over a fleet of identical
nodes with identical unit tasks, with no execution and no transport: tasks
never complete, so terminal per-node placement counts are exactly the
classic batched balls-into-bins process. Deltas flush at the configured
mini-batch and the store pushes the full table every ``batch_size``
decisions; ``batch_size=None`` disables refresh entirely (each scheduler
sees only its own placements).
"""
from __future__ import annotations

from typing import Optional

from .baselines import RandomScheduler
from .core import NodeSpec, ResourceVector, TaskSpec
from .datastore import DataStore
from .scheduler import DodoorScheduler

_UNIFORM_TYPE = "uniform"
_NODE_CAPACITY = 1_000_000  # effectively unbounded; placement-only


def uniform_topology(num_nodes: int) -> list[NodeSpec]:
    capacity = ResourceVector(_NODE_CAPACITY, _NODE_CAPACITY)
    return [NodeSpec(i, _UNIFORM_TYPE, capacity, _NODE_CAPACITY) for i in range(num_nodes)]


def unit_tasks(num_tasks: int, duration_ms: int = 1000) -> list[TaskSpec]:
    demand = ResourceVector(1, 1)
    durations = {_UNIFORM_TYPE: duration_ms}
    return [TaskSpec(i, 0, demand, durations) for i in range(num_tasks)]


def run_balanced_allocation(
    policy: str,
    num_nodes: int,
    num_tasks: int,
    batch_size: Optional[int],
    num_schedulers: int = 5,
    alpha: float = 0.5,
    mini_batch: Optional[int] = None,
    placement_salt: int = 0,
    tasks: Optional[list[TaskSpec]] = None,
) -> list[int]:
    """Place ``num_tasks`` unit tasks and return per-node placement counts."""
    topology = uniform_topology(num_nodes)
    if tasks is None:
        tasks = unit_tasks(num_tasks)
    counts = [0] * num_nodes

    if policy == "random":
        schedulers = [
            RandomScheduler(i, topology, placement_salt) for i in range(num_schedulers)
        ]
        for i, task in enumerate(tasks):
            counts[schedulers[i % num_schedulers].schedule(task)] += 1
        return counts

    if policy != "dodoor":
        raise ValueError(f"unsupported policy for placement-only runs: {policy!r}")

    if mini_batch is None:
        mini_batch = (
            max(1, batch_size // (2 * num_schedulers)) if batch_size is not None else 1
        )
    schedulers = [
        DodoorScheduler(i, topology, alpha, mini_batch, placement_salt)
        for i in range(num_schedulers)
    ]
    store = None
    if batch_size is not None:
        store = DataStore(batch_size)
        for node in topology:
            store.register_node(node)
        for scheduler in schedulers:
            store.register_scheduler(scheduler.scheduler_id)

    for i, task in enumerate(tasks):
        scheduler = schedulers[i % num_schedulers]
        decision = scheduler.schedule(task)
        counts[decision.chosen] += 1
        if store is None:
            continue
        delta = scheduler.maybe_flush_delta()
        if delta is not None:
            push = store.add_new_load(delta)
            if push is not None:
                for target in push.targets:
                    schedulers[target].apply_cache_update(push.snapshot)
    return counts


def max_mean_gap(counts: list[int]) -> float:
    """Gap between the most loaded node and the average."""
    return max(counts) - sum(counts) / len(counts)
