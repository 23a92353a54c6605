"""The cached-view scheduler: power-of-two sampling over a locally cached
cluster view, scored by anti-affinity, with mini-batched delta reporting.

A scheduler instance is a single logical actor: ``schedule`` calls and cache
pushes are applied in arrival order, never concurrently. Instances share no
mutable state with each other; coordination happens only through the data
store's pushed snapshots.
"""
from __future__ import annotations

from dataclasses import dataclass
from random import Random
from typing import Iterable, Mapping, Optional, Sequence

from .core import (
    NodeLoadSnapshot,
    NodeSpec,
    RegistrationError,
    ResourceVector,
    TaskSpec,
    l2_norm_sq,
    placement_seed,
)
from .scoring import ScorePair, pre_filter


@dataclass(frozen=True, slots=True)
class SchedulerDecision:
    """One placement: the sampled pair, the winner, and the scores used."""

    task_id: int
    candidate_a: int
    candidate_b: int
    chosen: int
    scores: Optional[ScorePair]
    cache_version: int

    def __post_init__(self):
        if self.chosen not in (self.candidate_a, self.candidate_b):
            raise ValueError(f"chosen node must be one of the candidates: {self}")


@dataclass(frozen=True, slots=True)
class DeltaEntry:
    """Load added to one node since the last flush."""

    load: ResourceVector
    duration: int
    task_count: int


@dataclass(frozen=True, slots=True)
class LoadDelta:
    """Accumulated placement effects a scheduler reports to the data store."""

    scheduler_id: int
    entries: Mapping[int, DeltaEntry]
    decision_count: int

    def __post_init__(self):
        if sum(e.task_count for e in self.entries.values()) != self.decision_count:
            raise ValueError("per-node task counts must sum to decision_count")


class LoadCache:
    """Per-scheduler cached node loads: node_id -> (load, duration, rif).

    ``version`` counts applied full-snapshot pushes. Rows drift between
    pushes as the owning scheduler applies its own placements; a push
    replaces everything and un-flushed local placements are replayed on top.
    """

    __slots__ = ("_rows", "version")

    def __init__(self, node_ids: Iterable[int]):
        # row := [load_cpu, load_mem, total_duration_ms, rif]
        self._rows: dict[int, list] = {node_id: [0.0, 0.0, 0, 0] for node_id in node_ids}
        self.version = 0

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    def row(self, node_id: int) -> list:
        return self._rows[node_id]

    def add(self, node_id: int, demand: ResourceVector, duration: int) -> None:
        row = self._rows[node_id]
        row[0] += demand.cpu
        row[1] += demand.memory
        row[2] += duration
        row[3] += 1

    def add_node(self, node_id: int) -> None:
        self._rows[node_id] = [0.0, 0.0, 0, 0]

    def replace_all(self, snapshots: Mapping[int, NodeLoadSnapshot]) -> None:
        self._rows = {
            node_id: [snap.load.cpu, snap.load.memory, snap.total_duration, snap.rif]
            for node_id, snap in snapshots.items()
        }
        self.version += 1

    def snapshot(self, node_id: int) -> NodeLoadSnapshot:
        cpu, mem, duration, rif = self._rows[node_id]
        return NodeLoadSnapshot(ResourceVector(cpu, mem), int(duration), int(rif))

    def snapshot_all(self) -> dict[int, NodeLoadSnapshot]:
        return {node_id: self.snapshot(node_id) for node_id in self._rows}


class DodoorScheduler:
    """Algorithm: filter by capacity, sample two candidates with the task-id
    seeded RNG (with replacement), score the pair against the cached view,
    place on the lower score (ties keep the first draw), and immediately fold
    the placement into the local cache and the pending delta."""

    def __init__(
        self,
        scheduler_id: int,
        nodes: Sequence[NodeSpec],
        alpha: float = 0.5,
        mini_batch: int = 1,
        placement_salt: int = 0,
    ):
        if not (0.0 <= alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if mini_batch < 1:
            raise ValueError("mini_batch must be at least 1")
        self.scheduler_id = scheduler_id
        self.alpha = alpha
        self.mini_batch = mini_batch
        self.placement_salt = placement_salt
        self._nodes: list[NodeSpec] = list(nodes)
        self._capacity_norms: list[float] = [l2_norm_sq(n.capacity) for n in self._nodes]
        self.cache = LoadCache(node.node_id for node in self._nodes)
        # pending := node_id -> [cpu, mem, duration, task_count]
        self._pending: dict[int, list] = {}
        self._pending_decisions = 0
        self._filter_memo: dict[tuple[float, float], list[int]] = {}

    @property
    def nodes(self) -> Sequence[NodeSpec]:
        return self._nodes

    @property
    def pending_decisions(self) -> int:
        return self._pending_decisions

    def register_node(self, spec: NodeSpec) -> None:
        if spec.node_id in self.cache:
            raise RegistrationError(f"node {spec.node_id} already registered")
        self._nodes.append(spec)
        self._capacity_norms.append(l2_norm_sq(spec.capacity))
        self.cache.add_node(spec.node_id)
        self._filter_memo.clear()

    def _filtered(self, demand: ResourceVector) -> list[int]:
        key = (demand.cpu, demand.memory)
        positions = self._filter_memo.get(key)
        if positions is None:
            positions = pre_filter(demand, self._nodes)
            self._filter_memo[key] = positions
        return positions

    def schedule(self, task: TaskSpec) -> SchedulerDecision:
        """Place one task; raises UnschedulableTask if nothing can fit it."""
        positions = self._filtered(task.demand)
        rng = Random(placement_seed(task.task_id, self.placement_salt))
        size = len(positions)
        pos_a = positions[rng.randrange(size)]
        pos_b = positions[rng.randrange(size)]
        node_a = self._nodes[pos_a]
        node_b = self._nodes[pos_b]

        # Inlined load_score_pair over the raw cache rows (hot path); the
        # arithmetic matches scoring.load_score_pair operation for operation.
        demand = task.demand
        row_a = self.cache.row(node_a.node_id)
        row_b = self.cache.row(node_b.node_id)
        d_a = task.durations[node_a.node_type]
        d_b = task.durations[node_b.node_type]
        rl_a = (demand.cpu * row_a[0] + demand.memory * row_a[1]) / self._capacity_norms[pos_a]
        rl_b = (demand.cpu * row_b[0] + demand.memory * row_b[1]) / self._capacity_norms[pos_b]
        dur_a = row_a[2] + d_a
        dur_b = row_b[2] + d_b
        rl_sum = rl_a + rl_b
        dur_sum = dur_a + dur_b
        alpha = self.alpha
        beta = 1.0 - alpha
        scores = ScorePair(
            beta * (rl_a / rl_sum if rl_sum else 0.5) + alpha * (dur_a / dur_sum if dur_sum else 0.5),
            beta * (rl_b / rl_sum if rl_sum else 0.5) + alpha * (dur_b / dur_sum if dur_sum else 0.5),
        )
        if scores.score_a > scores.score_b:
            chosen, d_chosen = node_b, d_b
        else:
            chosen, d_chosen = node_a, d_a

        self.cache.add(chosen.node_id, task.demand, d_chosen)
        pending = self._pending.get(chosen.node_id)
        if pending is None:
            self._pending[chosen.node_id] = [task.demand.cpu, task.demand.memory, d_chosen, 1]
        else:
            pending[0] += task.demand.cpu
            pending[1] += task.demand.memory
            pending[2] += d_chosen
            pending[3] += 1
        self._pending_decisions += 1

        return SchedulerDecision(
            task_id=task.task_id,
            candidate_a=node_a.node_id,
            candidate_b=node_b.node_id,
            chosen=chosen.node_id,
            scores=scores,
            cache_version=self.cache.version,
        )

    def maybe_flush_delta(self) -> Optional[LoadDelta]:
        """Return and reset the pending delta once it reaches the mini-batch."""
        if self._pending_decisions < self.mini_batch:
            return None
        entries = {
            node_id: DeltaEntry(ResourceVector(cpu, mem), int(duration), count)
            for node_id, (cpu, mem, duration, count) in self._pending.items()
        }
        delta = LoadDelta(self.scheduler_id, entries, self._pending_decisions)
        self._pending = {}
        self._pending_decisions = 0
        return delta

    def apply_cache_update(self, snapshots: Mapping[int, NodeLoadSnapshot]) -> None:
        """Replace the whole cached view with a pushed snapshot.

        Nodes unknown to this scheduler are a protocol violation; nodes
        missing from the snapshot have been unregistered and drop out of the
        placement domain. Un-flushed local placements are replayed on top of
        the fresh view so the scheduler never forgets its own recent work.
        """
        for node_id in snapshots:
            if node_id not in self.cache:
                raise RegistrationError(f"push contains unregistered node {node_id}")
        if len(snapshots) != len(self.cache):
            kept = set(snapshots)
            self._nodes = [n for n in self._nodes if n.node_id in kept]
            self._capacity_norms = [l2_norm_sq(n.capacity) for n in self._nodes]
            self._filter_memo.clear()
        self.cache.replace_all(snapshots)
        for node_id, pending in self._pending.items():
            if node_id not in self.cache:
                continue  # placed on a node that has since unregistered
            row = self.cache.row(node_id)
            row[0] += pending[0]
            row[1] += pending[1]
            row[2] += pending[2]
            row[3] += pending[3]
