from __future__ import annotations

import pytest

from dodoor import workload


@pytest.fixture(scope="session")
def table2_topology():
    return workload.build_topology("table2-100")


@pytest.fixture(scope="session")
def scaled20_topology():
    return workload.build_topology("scaled(20)")
