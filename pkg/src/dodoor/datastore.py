"""Push-only batched load aggregator.

Maintains the global node-load table, combines server overrides with
scheduler deltas, counts scheduling decisions, and fans the whole table out
to every registered scheduler once per batch. It never answers reads on the
scheduling hot path; schedulers consume best-effort pushed snapshots.

A single logical actor: all mutations are applied in message-arrival order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .core import NodeLoadSnapshot, NodeSpec, RegistrationError, ResourceVector
from .scheduler import LoadDelta


@dataclass(frozen=True, slots=True)
class BatchPush:
    """One fan-out of the full load table to every registered scheduler."""

    push_seq: int
    snapshot: Mapping[int, NodeLoadSnapshot]
    targets: tuple[int, ...]


class DataStore:
    """The global load table plus the batch trigger.

    The decision counter advances by each delta's decision count (deltas are
    mini-batched, so counting calls would under-count). On overshoot the
    counter carries over (p -= b) instead of resetting, so long mini-batches
    do not stretch batch periods. Node membership changes reset the counter
    and push immediately so schedulers learn the new domain.
    """

    def __init__(self, batch_size: int):
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        self.batch_size = batch_size
        self.decision_counter = 0
        self.push_count = 0
        # row := [load_cpu, load_mem, total_duration_ms, rif]
        self._rows: dict[int, list] = {}
        self._node_specs: dict[int, NodeSpec] = {}
        self._schedulers: list[int] = []

    @property
    def registered_nodes(self) -> tuple[int, ...]:
        return tuple(self._rows)

    @property
    def registered_schedulers(self) -> tuple[int, ...]:
        return tuple(self._schedulers)

    def node_spec(self, node_id: int) -> NodeSpec:
        return self._node_specs[node_id]

    def register_node(self, spec: NodeSpec) -> Optional[BatchPush]:
        if spec.node_id in self._rows:
            raise RegistrationError(f"node {spec.node_id} already registered")
        self._rows[spec.node_id] = [0.0, 0.0, 0, 0]
        self._node_specs[spec.node_id] = spec
        return self._membership_changed()

    def unregister_node(self, node_id: int) -> Optional[BatchPush]:
        if node_id not in self._rows:
            raise RegistrationError(f"node {node_id} is not registered")
        del self._rows[node_id]
        del self._node_specs[node_id]
        return self._membership_changed()

    def register_scheduler(self, scheduler_id: int) -> None:
        if scheduler_id in self._schedulers:
            raise RegistrationError(f"scheduler {scheduler_id} already registered")
        self._schedulers.append(scheduler_id)

    def unregister_scheduler(self, scheduler_id: int) -> None:
        if scheduler_id not in self._schedulers:
            raise RegistrationError(f"scheduler {scheduler_id} is not registered")
        self._schedulers.remove(scheduler_id)

    def override_node_state(self, node_id: int, snapshot: NodeLoadSnapshot) -> None:
        """Replace a node's row wholesale with the server's own view."""
        row = self._rows.get(node_id)
        if row is None:
            raise RegistrationError(f"override for unregistered node {node_id}")
        row[0] = snapshot.load.cpu
        row[1] = snapshot.load.memory
        row[2] = snapshot.total_duration
        row[3] = snapshot.rif

    def add_new_load(self, delta: LoadDelta) -> Optional[BatchPush]:
        """Fold a scheduler's delta into the table; push when the batch fills."""
        for node_id in delta.entries:
            if node_id not in self._rows:
                raise RegistrationError(f"delta targets unregistered node {node_id}")
        for node_id, entry in delta.entries.items():
            row = self._rows[node_id]
            row[0] += entry.load.cpu
            row[1] += entry.load.memory
            row[2] += entry.duration
            row[3] += entry.task_count
        self.decision_counter += delta.decision_count
        if self.decision_counter >= self.batch_size:
            self.decision_counter -= self.batch_size
            return self._emit_push()
        return None

    def snapshot_table(self) -> dict[int, NodeLoadSnapshot]:
        return {
            node_id: NodeLoadSnapshot(ResourceVector(row[0], row[1]), int(row[2]), int(row[3]))
            for node_id, row in self._rows.items()
        }

    def _emit_push(self) -> Optional[BatchPush]:
        if not self._schedulers:
            return None
        self.push_count += 1
        return BatchPush(self.push_count, self.snapshot_table(), tuple(self._schedulers))

    def _membership_changed(self) -> Optional[BatchPush]:
        self.decision_counter = 0
        return self._emit_push()
