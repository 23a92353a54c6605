"""Deterministic discrete-event cluster simulator.

Models message transport (constant per-hop latency plus an optional
per-endpoint FIFO modeling a bounded RPC worker pool), server execution
(strict FCFS with resource-bounded concurrency and early binding), the
push-only data store, and the four placement policies. All event times are
integer milliseconds; identical inputs yield identical event sequences,
decision logs, and message logs.

Message accounting: a message is "scheduler-handled" if a scheduler endpoint
sends or receives it. Per decision that makes 2 for the random policy
(schedule in, enqueue out), 6 for probing power-of-two (plus two probe
round-trips), 8 for the probe-pool policy (plus three), and 2 plus amortized
cache traffic (delta flushes out, table pushes in) for the cached scheduler.
Server-to-store overrides and membership registrations are not
scheduler-handled.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from random import Random
from typing import Optional, Sequence

from .core import ClusterConfig, NodeLoadSnapshot, NodeSpec, ResourceVector, TaskSpec, placement_seed
from .datastore import DataStore
from .scheduler import DodoorScheduler, SchedulerDecision
from .workload import Trace, validate_trace

# Message kinds (mirror the service API surface).
SCHEDULE = "Schedule"
ENQUEUE = "Enqueue"
PROBE_REQUEST = "ProbeRequest"
PROBE_REPLY = "ProbeReply"
ADD_NEW_LOAD = "AddNewLoad"
OVERRIDE_NODE_STATE = "OverrideNodeState"
UPDATE_NODE_STATES = "UpdateNodeStates"
REGISTER = "Register"

POLICIES = ("dodoor", "random", "pot", "prequal")


class SimulationError(RuntimeError):
    """An internal invariant failed (indicates a bug, not bad input)."""


@dataclass(slots=True)
class MessageRecord:
    """One simulated RPC message; the accounting unit."""

    kind: str
    src: str
    dst: str
    send_time: int
    deliver_time: int
    seq: int
    payload: object = field(repr=False, default=None)


def scheduler_handled(record: MessageRecord) -> bool:
    return record.src.startswith("sched:") or record.dst.startswith("sched:")


@dataclass(slots=True)
class TaskRecord:
    """Lifecycle timestamps of one task, all in simulated ms."""

    task_id: int
    scheduler_id: int
    submit: int
    node_id: Optional[int] = None
    sched_arrival: Optional[int] = None
    decided: Optional[int] = None
    enqueue_deliver: Optional[int] = None
    start: Optional[int] = None
    complete: Optional[int] = None


@dataclass(slots=True)
class UtilizationSample:
    """Per-node (cpu, memory) utilization of committed resources at one instant."""

    time: int
    node_utils: list[tuple[float, float]]


@dataclass
class RunResult:
    policy: str
    config: ClusterConfig
    topology: list[NodeSpec]
    tasks: list[TaskSpec]
    trace_metadata: dict
    decisions: list[SchedulerDecision]
    records: list[TaskRecord]
    messages: list[MessageRecord]
    samples: list[UtilizationSample]
    push_count: int
    event_count: int
    final_store_rows: Optional[dict[int, NodeLoadSnapshot]] = None
    final_scheduler_caches: Optional[dict[int, dict[int, NodeLoadSnapshot]]] = None


class ServerRuntime:
    """One server: a strict-FCFS queue with resource-bounded concurrency.

    Early binding lets queued demand oversubscribe capacity; only running
    tasks hold committed resources. The in-flight load/duration/rif cover
    queued plus running tasks and are what the server reports upstream.
    """

    __slots__ = (
        "spec",
        "node_type",
        "cap_cpu",
        "cap_mem",
        "queue",
        "running",
        "committed_cpu",
        "committed_mem",
        "load_cpu",
        "load_mem",
        "duration_total",
        "rif",
    )

    def __init__(self, spec: NodeSpec):
        self.spec = spec
        self.node_type = spec.node_type
        self.cap_cpu = spec.capacity.cpu
        self.cap_mem = spec.capacity.memory
        self.queue: deque[TaskSpec] = deque()
        self.running = 0
        self.committed_cpu = 0.0
        self.committed_mem = 0.0
        self.load_cpu = 0.0
        self.load_mem = 0.0
        self.duration_total = 0
        self.rif = 0

    def enqueue(self, task: TaskSpec) -> None:
        exec_demand = task.demand_on(self.node_type)
        self.queue.append(task)
        self.load_cpu += exec_demand.cpu
        self.load_mem += exec_demand.memory
        self.duration_total += task.durations[self.node_type]
        self.rif += 1

    def try_start(self) -> list[TaskSpec]:
        """Start queue heads while they fit; never skip a blocked head."""
        started = []
        while self.queue:
            head = self.queue[0]
            exec_demand = head.demand_on(self.node_type)
            if (
                self.committed_cpu + exec_demand.cpu > self.cap_cpu
                or self.committed_mem + exec_demand.memory > self.cap_mem
            ):
                break
            self.queue.popleft()
            self.committed_cpu += exec_demand.cpu
            self.committed_mem += exec_demand.memory
            self.running += 1
            started.append(head)
        if self.committed_cpu > self.cap_cpu or self.committed_mem > self.cap_mem:
            raise SimulationError(f"node {self.spec.node_id}: committed exceeds capacity")
        return started

    def complete(self, task: TaskSpec) -> NodeLoadSnapshot:
        """Release the task and return the server's own state afterwards."""
        exec_demand = task.demand_on(self.node_type)
        self.running -= 1
        self.committed_cpu -= exec_demand.cpu
        self.committed_mem -= exec_demand.memory
        self.load_cpu -= exec_demand.cpu
        self.load_mem -= exec_demand.memory
        self.duration_total -= task.durations[self.node_type]
        self.rif -= 1
        if self.running < 0 or self.rif < 0:
            raise SimulationError(f"node {self.spec.node_id}: completion underflow")
        return self.snapshot()

    def snapshot(self) -> NodeLoadSnapshot:
        return NodeLoadSnapshot(
            ResourceVector(round(self.load_cpu, 9), round(self.load_mem, 9)),
            int(self.duration_total),
            self.rif,
        )

    def utilization(self) -> tuple[float, float]:
        return self.committed_cpu / self.cap_cpu, self.committed_mem / self.cap_mem


# Event kinds, processed in (time, seq) order.
_ARRIVAL, _DELIVERY, _COMPLETE, _SAMPLE = 0, 1, 2, 3
# Delivery routes.
_TO_SCHED, _TO_NODE, _TO_STORE = 0, 1, 2


class Simulation:
    def __init__(
        self,
        config: ClusterConfig,
        topology: Sequence[NodeSpec],
        trace: Trace,
        policy: str,
    ):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
        problems = validate_trace(trace, topology)
        if problems:
            raise ValueError("workload failed validation: " + "; ".join(problems[:10]))
        self.config = config
        self.topology = list(topology)
        self.trace = trace
        self.policy = policy

        self.servers: dict[int, ServerRuntime] = {
            node.node_id: ServerRuntime(node) for node in self.topology
        }
        self.store = DataStore(config.batch_size)
        self.messages: list[MessageRecord] = []
        self.decisions: list[SchedulerDecision] = []
        self.samples: list[UtilizationSample] = []
        self.records: list[TaskRecord] = []
        self._heap: list = []
        self._seq = 0
        self._next_free: dict[str, int] = {}
        self._completed = 0
        self._event_count = 0

        self._sched_ep = [f"sched:{i}" for i in range(config.num_schedulers)]
        self._node_ep = {node.node_id: f"node:{node.node_id}" for node in self.topology}
        self._pot_pending: dict[int, list] = {}

        salt = config.placement_salt
        s = config.num_schedulers
        if policy == "dodoor":
            self.schedulers = [
                DodoorScheduler(i, self.topology, config.duration_weight, config.mini_batch, salt)
                for i in range(s)
            ]
        elif policy == "random":
            from .baselines import RandomScheduler

            self.schedulers = [RandomScheduler(i, self.topology, salt) for i in range(s)]
        elif policy == "pot":
            from .baselines import PowerOfTwoScheduler

            self.schedulers = [PowerOfTwoScheduler(i, self.topology, salt) for i in range(s)]
        else:
            from .baselines import PrequalScheduler

            self.schedulers = [
                PrequalScheduler(i, self.topology, placement_salt=salt) for i in range(s)
            ]

        self._registered: list[str] = []
        for node in self.topology:
            self.store.register_node(node)
            self._registered.append(f"node:{node.node_id}")
        if policy == "dodoor":
            for i in range(s):
                self.store.register_scheduler(i)
                self._registered.append(self._sched_ep[i])

    # ------------------------------------------------------------------ setup

    def _log_registrations(self) -> None:
        # Membership is set up out-of-band before the run; logged for audit.
        for subject in self._registered:
            self.messages.append(
                MessageRecord(REGISTER, "admin", "store", 0, 0, self._seq, subject)
            )
            self._seq += 1

    # -------------------------------------------------------------- transport

    def _send(self, kind: str, src: str, dst: str, route: int, idx: int, now: int, payload) -> None:
        arrive = now + self.config.hop_latency_ms
        if self.config.contention:
            busy_until = self._next_free.get(dst, 0)
            deliver = max(arrive, busy_until) + self.config.endpoint_service_ms
            self._next_free[dst] = deliver
        else:
            deliver = arrive
        record = MessageRecord(kind, src, dst, now, deliver, self._seq, payload)
        self.messages.append(record)
        heapq.heappush(self._heap, (deliver, self._seq, _DELIVERY, (record, route, idx)))
        self._seq += 1

    def _push_event(self, time: int, kind: int, payload) -> None:
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    # ------------------------------------------------------------------- run

    def run(self) -> RunResult:
        tasks = self.trace.tasks
        s = self.config.num_schedulers
        if tasks:
            self._log_registrations()
            self._push_event(self.config.utilization_sample_ms, _SAMPLE, None)
        for i, task in enumerate(tasks):
            self.records.append(TaskRecord(task.task_id, i % s, task.submit_time))
            self._push_event(task.submit_time, _ARRIVAL, i)

        heap = self._heap
        while heap:
            time_, _, kind, payload = heapq.heappop(heap)
            self._event_count += 1
            if kind == _DELIVERY:
                record, route, idx = payload
                if route == _TO_NODE:
                    self._on_node_message(record, idx, time_)
                elif route == _TO_SCHED:
                    self._on_scheduler_message(record, idx, time_)
                else:
                    self._on_store_message(record, time_)
            elif kind == _COMPLETE:
                self._on_complete(payload, time_)
            elif kind == _ARRIVAL:
                self._on_arrival(payload, time_)
            else:
                self._on_sample(time_)

        if self._completed != len(tasks):
            raise SimulationError(
                f"run did not quiesce: {self._completed}/{len(tasks)} tasks completed"
            )
        return self._result()

    def _result(self) -> RunResult:
        final_caches = None
        if self.policy == "dodoor":
            final_caches = {
                sched.scheduler_id: sched.cache.snapshot_all() for sched in self.schedulers
            }
        return RunResult(
            policy=self.policy,
            config=self.config,
            topology=self.topology,
            tasks=self.trace.tasks,
            trace_metadata=dict(self.trace.metadata),
            decisions=self.decisions,
            records=self.records,
            messages=self.messages,
            samples=self.samples,
            push_count=self.store.push_count,
            event_count=self._event_count,
            final_store_rows=self.store.snapshot_table(),
            final_scheduler_caches=final_caches,
        )

    # --------------------------------------------------------------- handlers

    def _on_arrival(self, task_index: int, now: int) -> None:
        task = self.trace.tasks[task_index]
        sched_id = task_index % self.config.num_schedulers
        self._send(SCHEDULE, "client", self._sched_ep[sched_id], _TO_SCHED, sched_id, now, task)

    def _on_scheduler_message(self, record: MessageRecord, sched_id: int, now: int) -> None:
        kind = record.kind
        if kind == SCHEDULE:
            task: TaskSpec = record.payload
            self.records[task.task_id].sched_arrival = now
            self._dispatch_policy(task, sched_id, now)
        elif kind == PROBE_REPLY:
            self._on_probe_reply(record.payload, sched_id, now)
        elif kind == UPDATE_NODE_STATES:
            self.schedulers[sched_id].apply_cache_update(record.payload)
        else:
            raise SimulationError(f"scheduler received unexpected {kind}")

    def _dispatch_policy(self, task: TaskSpec, sched_id: int, now: int) -> None:
        policy = self.policy
        scheduler = self.schedulers[sched_id]
        if policy == "dodoor":
            decision = scheduler.schedule(task)
            self._place(task, decision, sched_id, now)
            delta = scheduler.maybe_flush_delta()
            if delta is not None:
                self._send(
                    ADD_NEW_LOAD, self._sched_ep[sched_id], "store", _TO_STORE, 0, now, delta
                )
        elif policy == "random":
            node_id = scheduler.schedule(task)
            decision = SchedulerDecision(task.task_id, node_id, node_id, node_id, None, 0)
            self._place(task, decision, sched_id, now)
        elif policy == "pot":
            node_a, node_b = scheduler.sample_candidates(task)
            self._pot_pending[task.task_id] = [task, node_a, node_b, None, None]
            src = self._sched_ep[sched_id]
            self._send(
                PROBE_REQUEST,
                src,
                self._node_ep[node_a],
                _TO_NODE,
                node_a,
                now,
                ("pot", sched_id, task.task_id, 0),
            )
            self._send(
                PROBE_REQUEST,
                src,
                self._node_ep[node_b],
                _TO_NODE,
                node_b,
                now,
                ("pot", sched_id, task.task_id, 1),
            )
        else:  # prequal
            outcome = scheduler.schedule(task)
            decision = SchedulerDecision(
                task.task_id, outcome.node_id, outcome.node_id, outcome.node_id, None, 0
            )
            self._place(task, decision, sched_id, now)
            src = self._sched_ep[sched_id]
            for target in outcome.probe_targets:
                self._send(
                    PROBE_REQUEST,
                    src,
                    self._node_ep[target],
                    _TO_NODE,
                    target,
                    now,
                    ("prequal", sched_id),
                )

    def _place(self, task: TaskSpec, decision: SchedulerDecision, sched_id: int, now: int) -> None:
        self.decisions.append(decision)
        record = self.records[task.task_id]
        record.decided = now
        record.node_id = decision.chosen
        self._send(
            ENQUEUE,
            self._sched_ep[sched_id],
            self._node_ep[decision.chosen],
            _TO_NODE,
            decision.chosen,
            now,
            task,
        )

    def _on_probe_reply(self, payload, sched_id: int, now: int) -> None:
        tag = payload[0]
        if tag == "pot":
            _, _, task_id, slot, _node_id, rif, _duration = payload
            pending = self._pot_pending[task_id]
            pending[3 + slot] = rif
            if pending[3] is None or pending[4] is None:
                return
            del self._pot_pending[task_id]
            task, node_a, node_b = pending[0], pending[1], pending[2]
            scheduler = self.schedulers[sched_id]
            chosen = scheduler.decide(node_a, pending[3], node_b, pending[4])
            decision = SchedulerDecision(task.task_id, node_a, node_b, chosen, None, 0)
            self._place(task, decision, sched_id, now)
        else:  # prequal
            from .baselines import ProbeResult

            _, _, node_id, rif, duration = payload
            self.schedulers[sched_id].insert_probe(
                ProbeResult(node_id, rif, duration, issued_at=now)
            )

    def _on_node_message(self, record: MessageRecord, node_id: int, now: int) -> None:
        server = self.servers[node_id]
        if record.kind == ENQUEUE:
            task: TaskSpec = record.payload
            self.records[task.task_id].enqueue_deliver = now
            server.enqueue(task)
            self._start_tasks(server, now)
        elif record.kind == PROBE_REQUEST:
            request = record.payload
            reply = request + (node_id, server.rif, int(server.duration_total))
            sched_id = request[1]
            self._send(
                PROBE_REPLY,
                record.dst,
                self._sched_ep[sched_id],
                _TO_SCHED,
                sched_id,
                now,
                reply,
            )
        else:
            raise SimulationError(f"node received unexpected {record.kind}")

    def _start_tasks(self, server: ServerRuntime, now: int) -> None:
        for task in server.try_start():
            self.records[task.task_id].start = now
            finish = now + self._actual_duration(task, server)
            self._push_event(finish, _COMPLETE, (server.spec.node_id, task))

    def _actual_duration(self, task: TaskSpec, server: ServerRuntime) -> int:
        base = task.durations[server.node_type]
        noise = self.config.duration_noise
        if noise == 0:
            return base
        rng = Random(
            placement_seed(task.task_id, self.config.placement_salt) * 0x9E3779B1
            + server.spec.node_id
        )
        factor = 1.0 + noise * (2.0 * rng.random() - 1.0)
        return max(1, round(base * factor))

    def _on_complete(self, payload, now: int) -> None:
        node_id, task = payload
        server = self.servers[node_id]
        snapshot = server.complete(task)
        self.records[task.task_id].complete = now
        self._completed += 1
        self._send(
            OVERRIDE_NODE_STATE,
            self._node_ep[node_id],
            "store",
            _TO_STORE,
            0,
            now,
            (node_id, snapshot),
        )
        self._start_tasks(server, now)

    def _on_store_message(self, record: MessageRecord, now: int) -> None:
        if record.kind == ADD_NEW_LOAD:
            push = self.store.add_new_load(record.payload)
            if push is not None:
                for target in push.targets:
                    self._send(
                        UPDATE_NODE_STATES,
                        "store",
                        self._sched_ep[target],
                        _TO_SCHED,
                        target,
                        now,
                        push.snapshot,
                    )
        elif record.kind == OVERRIDE_NODE_STATE:
            node_id, snapshot = record.payload
            self.store.override_node_state(node_id, snapshot)
        else:
            raise SimulationError(f"store received unexpected {record.kind}")

    def _on_sample(self, now: int) -> None:
        if self._completed >= len(self.trace.tasks):
            return
        utils = [self.servers[node.node_id].utilization() for node in self.topology]
        self.samples.append(UtilizationSample(now, utils))
        self._push_event(now + self.config.utilization_sample_ms, _SAMPLE, None)


def run(
    config: ClusterConfig,
    topology: Sequence[NodeSpec],
    trace: Trace,
    policy: str,
) -> RunResult:
    """Simulate one policy over one trace; see module docstring for the model."""
    return Simulation(config, topology, trace, policy).run()
