from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dodoor.core import (
    ClusterConfig,
    NodeLoadSnapshot,
    NodeSpec,
    ResourceVector,
    TaskSpec,
    default_batch_size,
    default_mini_batch,
    dot,
    fits_within,
    l2_norm_sq,
    placement_seed,
)

components = st.floats(min_value=0, max_value=1e6, allow_nan=False)
vectors = st.builds(ResourceVector, components, components)


def test_dot_hand_examples():
    assert dot(ResourceVector(2, 4), ResourceVector(4, 8)) == 40
    assert dot(ResourceVector(0, 0), ResourceVector(5, 9)) == 0
    assert dot(ResourceVector(1, 0), ResourceVector(0, 1)) == 0


@given(vectors, vectors)
def test_dot_symmetry(a, b):
    assert dot(a, b) == dot(b, a)


@given(vectors, vectors, st.floats(min_value=0, max_value=100, allow_nan=False))
def test_dot_scales_linearly(a, b, lam):
    scaled = ResourceVector(a.cpu * lam, a.memory * lam)
    assert dot(scaled, b) == pytest.approx(lam * dot(a, b), rel=1e-9, abs=1e-9)


def test_l2_norm_sq_examples():
    assert l2_norm_sq(ResourceVector(8, 16)) == 320
    assert l2_norm_sq(ResourceVector(3, 4)) == 25


def test_l2_norm_sq_rejects_degenerate_capacity():
    with pytest.raises(ValueError):
        l2_norm_sq(ResourceVector(1, 0))
    with pytest.raises(ValueError):
        l2_norm_sq(ResourceVector(0, 0))


def test_fits_within_examples():
    assert fits_within(ResourceVector(8, 64), ResourceVector(8, 64))
    assert not fits_within(ResourceVector(9, 1), ResourceVector(8, 64))
    assert fits_within(ResourceVector(0, 0), ResourceVector(8, 64))


def test_resource_vector_rejects_negative():
    with pytest.raises(ValueError):
        ResourceVector(-1, 0)


def test_resource_vector_arithmetic():
    a = ResourceVector(4, 8)
    b = ResourceVector(1, 2)
    assert a + b == ResourceVector(5, 10)
    assert a - b == ResourceVector(3, 6)
    with pytest.raises(ValueError):
        b - a  # callers must never drive a component negative


def test_task_spec_validation():
    with pytest.raises(ValueError):
        TaskSpec(0, 0, ResourceVector(1, 1), {})
    with pytest.raises(ValueError):
        TaskSpec(0, 0, ResourceVector(1, 1), {"m510": 0})
    with pytest.raises(ValueError):
        TaskSpec(-1, 0, ResourceVector(1, 1), {"m510": 5})


def test_task_spec_per_type_lookups():
    task = TaskSpec(
        3,
        10,
        ResourceVector(4, 100),
        {"a": 100, "b": 200},
        exec_demands={"a": ResourceVector(2, 50)},
    )
    assert task.duration_on("b") == 200
    assert task.demand_on("a") == ResourceVector(2, 50)
    assert task.demand_on("b") == ResourceVector(4, 100)  # falls back to demand
    assert TaskSpec(0, 0, ResourceVector(1, 1), {"a": 1}).demand_on("a") == ResourceVector(1, 1)


def test_node_spec_core_count_must_match_cpu():
    NodeSpec(0, "m510", ResourceVector(8, 65536), 8)
    with pytest.raises(ValueError):
        NodeSpec(0, "m510", ResourceVector(8, 65536), 10)
    with pytest.raises(ValueError):
        NodeSpec(0, "m510", ResourceVector(8, 0), 8)


def test_node_load_snapshot_zero():
    snap = NodeLoadSnapshot.zero()
    assert snap.load.is_zero() and snap.total_duration == 0 and snap.rif == 0
    with pytest.raises(ValueError):
        NodeLoadSnapshot(ResourceVector(0, 0), -1, 0)


def test_cluster_config_defaults():
    config = ClusterConfig.for_topology(100)
    assert config.batch_size == 50
    assert config.num_schedulers == 5
    assert config.mini_batch == 5  # floor(b / 2s)
    assert config.duration_weight == 0.5

    assert default_batch_size(20) == 10
    assert default_mini_batch(10, 5) == 1  # clamped up to 1


def test_cluster_config_validation():
    with pytest.raises(ValueError):
        ClusterConfig(batch_size=0)
    with pytest.raises(ValueError):
        ClusterConfig(batch_size=10, duration_weight=1.5)
    with pytest.raises(ValueError):
        ClusterConfig(batch_size=10, mini_batch=11)  # mini_batch must be <= b
    ClusterConfig(batch_size=10, mini_batch=10)


def test_placement_seed_is_task_id_when_unsalted():
    assert placement_seed(1234) == 1234
    assert placement_seed(7, salt=1) != 7
    assert placement_seed(7, salt=1) != placement_seed(7, salt=2)
    assert placement_seed(7, salt=3) != placement_seed(8, salt=3)
