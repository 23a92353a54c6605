"""Baseline placement policies: Random, probing power-of-two, and Prequal.

All three apply the same capacity pre-filter as the cached scheduler so the
policies stay comparable, and all draw from the task-id seeded RNG so that
runs are reproducible and candidate draws line up across policies on the
same trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from random import Random
from typing import Callable, Optional, Sequence

from .core import NodeSpec, TaskSpec, fits_within, placement_seed
from .scoring import pre_filter


class _FilteredSampler:
    """Shared machinery: memoized pre-filter plus task-seeded draws."""

    def __init__(self, scheduler_id: int, nodes: Sequence[NodeSpec], placement_salt: int = 0):
        self.scheduler_id = scheduler_id
        self.placement_salt = placement_salt
        self._nodes = list(nodes)
        self._filter_memo: dict[tuple[float, float], list[int]] = {}

    @property
    def nodes(self) -> Sequence[NodeSpec]:
        return self._nodes

    def _filtered(self, task: TaskSpec) -> list[int]:
        key = (task.demand.cpu, task.demand.memory)
        positions = self._filter_memo.get(key)
        if positions is None:
            positions = pre_filter(task.demand, self._nodes)
            self._filter_memo[key] = positions
        return positions

    def _rng(self, task: TaskSpec) -> Random:
        return Random(placement_seed(task.task_id, self.placement_salt))


class RandomScheduler(_FilteredSampler):
    """Single uniform draw over the nodes that can hold the task."""

    def schedule(self, task: TaskSpec) -> int:
        positions = self._filtered(task)
        rng = self._rng(task)
        return self._nodes[positions[rng.randrange(len(positions))]].node_id


class PowerOfTwoScheduler(_FilteredSampler):
    """Sample two candidates with replacement, probe both, keep the one with
    strictly fewer requests in flight (ties keep the first draw).

    The probing transport is the caller's concern: ``sample_candidates`` and
    ``decide`` bracket the two probe round-trips, and ``schedule`` wires them
    to a synchronous status function for direct use.
    """

    def sample_candidates(self, task: TaskSpec) -> tuple[int, int]:
        positions = self._filtered(task)
        rng = self._rng(task)
        size = len(positions)
        node_a = self._nodes[positions[rng.randrange(size)]].node_id
        node_b = self._nodes[positions[rng.randrange(size)]].node_id
        return node_a, node_b

    @staticmethod
    def decide(node_a: int, rif_a: int, node_b: int, rif_b: int) -> int:
        return node_b if rif_b < rif_a else node_a

    def schedule(self, task: TaskSpec, rif_of: Callable[[int], int]) -> int:
        node_a, node_b = self.sample_candidates(task)
        return self.decide(node_a, rif_of(node_a), node_b, rif_of(node_b))


@dataclass(frozen=True, slots=True)
class PrequalConfig:
    """Recommended baseline settings for the probe-pool policy."""

    r_probe: int = 3
    s_pool: int = 16
    q_rif: float = 0.84
    b_reuse: int = 1
    r_remove: int = 1

    def __post_init__(self):
        if min(self.r_probe, self.s_pool, self.b_reuse, self.r_remove) < 1:
            raise ValueError("all pool parameters must be positive")
        if not (0.0 < self.q_rif < 1.0):
            raise ValueError("q_rif must lie in (0, 1)")


@dataclass(slots=True)
class ProbeResult:
    """One cached probe: the node's requests in flight and its total pending
    estimated duration, used as the accumulated-latency signal."""

    node_id: int
    rif: int
    latency_estimate: int
    issued_at: int
    reuse_count: int = 0


@dataclass(frozen=True, slots=True)
class PrequalDecision:
    node_id: int
    probe_targets: tuple[int, ...]
    from_pool: bool


def nearest_rank_quantile(sorted_values: Sequence[int], q: float) -> int:
    """Nearest-rank quantile: element at rank ceil(q*n) of the sorted sample."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("quantile of an empty sample")
    rank = min(n, max(1, math.ceil(q * n)))
    return sorted_values[rank - 1]


class PrequalScheduler(_FilteredSampler):
    """Probe-pool policy: place on the pooled node with the lowest latency
    signal among entries whose RIF sits below the pool's RIF quantile, fall
    back to a uniform random draw when the pool offers nothing usable, and
    refresh the pool with asynchronous post-decision probes."""

    def __init__(
        self,
        scheduler_id: int,
        nodes: Sequence[NodeSpec],
        config: PrequalConfig = PrequalConfig(),
        placement_salt: int = 0,
    ):
        super().__init__(scheduler_id, nodes, placement_salt)
        self.config = config
        self._pool: list[ProbeResult] = []
        self._capacity_by_id = {node.node_id: node.capacity for node in self._nodes}

    @property
    def pool(self) -> Sequence[ProbeResult]:
        return self._pool

    def _eligible(self, task: TaskSpec) -> Optional[ProbeResult]:
        if not self._pool:
            return None
        rifs = sorted(entry.rif for entry in self._pool)
        if rifs[0] == rifs[-1]:
            # All RIF values equal: the quantile cut would exclude everyone,
            # so the whole pool qualifies.
            cut = rifs[-1] + 1
        else:
            cut = nearest_rank_quantile(rifs, self.config.q_rif)
        best: Optional[ProbeResult] = None
        for entry in self._pool:
            if entry.rif >= cut:
                continue
            capacity = self._capacity_by_id.get(entry.node_id)
            if capacity is None or not fits_within(task.demand, capacity):
                continue  # same admissibility filter as every other policy
            if best is None or entry.latency_estimate < best.latency_estimate:
                best = entry
        return best

    def schedule(self, task: TaskSpec) -> PrequalDecision:
        positions = self._filtered(task)
        rng = self._rng(task)

        entry = self._eligible(task)
        if entry is not None:
            node_id = entry.node_id
            entry.reuse_count += 1
            if entry.reuse_count > self.config.b_reuse:
                self._pool.remove(entry)
            from_pool = True
        else:
            node_id = self._nodes[positions[rng.randrange(len(positions))]].node_id
            from_pool = False

        targets = tuple(
            self._nodes[positions[rng.randrange(len(positions))]].node_id
            for _ in range(self.config.r_probe)
        )
        return PrequalDecision(node_id, targets, from_pool)

    def insert_probe(self, result: ProbeResult) -> None:
        """Insert a probe result, evicting past capacity.

        Eviction removes the highest-RIF entry, breaking RIF ties toward the
        oldest, until the pool is back within its fixed size.
        """
        self._pool.append(result)
        while len(self._pool) > self.config.s_pool:
            for _ in range(min(self.config.r_remove, len(self._pool) - 1)):
                victim = 0
                for i in range(1, len(self._pool)):
                    entry, worst = self._pool[i], self._pool[victim]
                    if entry.rif > worst.rif or (
                        entry.rif == worst.rif and entry.issued_at < worst.issued_at
                    ):
                        victim = i
                del self._pool[victim]
