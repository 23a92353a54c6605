"""Decentralized scheduler algorithms and a deterministic cluster simulator.

The flagship policy samples two candidate servers per task from a locally
cached, batch-refreshed cluster view and places on the lower anti-affinity
load score; baselines cover uniform random placement, probing power-of-two,
and a probe-pool policy. A discrete-event engine reproduces message
accounting, load balance, and latency comparisons at desk scale.
"""
from .core import (
    ClusterConfig,
    NodeLoadSnapshot,
    NodeSpec,
    RegistrationError,
    ResourceVector,
    SchedulingError,
    TaskSpec,
    UnschedulableTask,
    dot,
    fits_within,
    l2_norm_sq,
)
from .scoring import ScorePair, load_score_pair, pre_filter, resource_load
from .scheduler import DodoorScheduler, LoadCache, LoadDelta, SchedulerDecision
from .baselines import (
    PowerOfTwoScheduler,
    PrequalConfig,
    PrequalScheduler,
    ProbeResult,
    RandomScheduler,
)
from .datastore import BatchPush, DataStore
from .sim import MessageRecord, RunResult, ServerRuntime, SimulationError, run
from .workload import (
    Trace,
    assign_arrivals_poisson,
    build_topology,
    gen_azure_like,
    gen_functionbench,
    load_trace,
    saturation_qps,
    write_trace,
)
from .metrics import RunSummary, gap_statistic, summarize, utilization_series

__version__ = "0.1.0"

__all__ = [
    "ClusterConfig",
    "NodeLoadSnapshot",
    "NodeSpec",
    "RegistrationError",
    "ResourceVector",
    "SchedulingError",
    "TaskSpec",
    "UnschedulableTask",
    "dot",
    "fits_within",
    "l2_norm_sq",
    "ScorePair",
    "load_score_pair",
    "pre_filter",
    "resource_load",
    "DodoorScheduler",
    "LoadCache",
    "LoadDelta",
    "SchedulerDecision",
    "PowerOfTwoScheduler",
    "PrequalConfig",
    "PrequalScheduler",
    "ProbeResult",
    "RandomScheduler",
    "BatchPush",
    "DataStore",
    "MessageRecord",
    "RunResult",
    "ServerRuntime",
    "SimulationError",
    "run",
    "Trace",
    "assign_arrivals_poisson",
    "build_topology",
    "gen_azure_like",
    "gen_functionbench",
    "load_trace",
    "saturation_qps",
    "write_trace",
    "RunSummary",
    "gap_statistic",
    "summarize",
    "utilization_series",
    "__version__",
]
