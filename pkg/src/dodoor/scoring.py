"""Anti-affinity load scoring and the capacity pre-filter.

The resource-load score of a task against a node is the inner product of the
task's demand and the node's current load, normalized by the squared L2 norm
of the node's capacity. Larger means a worse pairing (anti-affinity), the
opposite convention of alignment-style packing scores. The pairwise load
score blends the two candidates' resource-load shares with their total
pending-duration shares under a tunable weight.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

from .core import NodeSpec, ResourceVector, UnschedulableTask, dot, fits_within, l2_norm_sq


class ScorePair(NamedTuple):
    """Scores of candidates A and B; each in [0, 1], summing to 1."""

    score_a: float
    score_b: float


def resource_load(r: ResourceVector, load: ResourceVector, capacity: ResourceVector) -> float:
    """dot(demand, load) / ||capacity||^2; zero iff demand and load are orthogonal."""
    return dot(r, load) / l2_norm_sq(capacity)


def _shares(value_a: float, value_b: float) -> tuple[float, float]:
    # Zero total (both candidates idle) is an exact tie, not a NaN.
    total = value_a + value_b
    if total == 0:
        return 0.5, 0.5
    return value_a / total, value_b / total


def load_score_pair(
    r: ResourceVector,
    load_a: ResourceVector,
    load_b: ResourceVector,
    duration_a: float,
    duration_b: float,
    capacity_a: ResourceVector,
    capacity_b: ResourceVector,
    alpha: float,
) -> ScorePair:
    """Pairwise-normalized score of two candidates for one task.

    ``duration_a``/``duration_b`` must already include the candidate task's
    own estimated duration on that node (callers add d before calling).
    With alpha=0 the pair depends only on resource-load shares, with alpha=1
    only on duration shares. The lower score wins; ties keep candidate A.
    """
    rl_a = resource_load(r, load_a, capacity_a)
    rl_b = resource_load(r, load_b, capacity_b)
    rl_share_a, rl_share_b = _shares(rl_a, rl_b)
    d_share_a, d_share_b = _shares(duration_a, duration_b)
    beta = 1.0 - alpha
    return ScorePair(
        beta * rl_share_a + alpha * d_share_a,
        beta * rl_share_b + alpha * d_share_b,
    )


def pre_filter(demand: ResourceVector, nodes: Sequence[NodeSpec]) -> list[int]:
    """Positions of all nodes whose total capacity can hold the demand.

    Preserves input order. Raises UnschedulableTask when no node qualifies,
    since every placement policy needs at least one candidate.
    """
    filtered = [i for i, node in enumerate(nodes) if fits_within(demand, node.capacity)]
    if not filtered:
        raise UnschedulableTask(
            f"demand ({demand.cpu} cores, {demand.memory} MB) exceeds every node's capacity"
        )
    return filtered
