import numpy as np
import pytest

from replenlab.datagen import DemandPanel, ScenarioConfig, SkuRecord, generate_panel
from replenlab.sim_core import CandidateGrid

pytest_plugins = ["pytester", "replenlab.pytest_oracles"]


@pytest.fixture(autouse=True)
def _divert_atexit(request, monkeypatch):
    import atexit

    finalizers = []

    def fake_register(func, *args, **kwargs):
        finalizers.append((func, args, kwargs))

    monkeypatch.setattr(atexit, "register", fake_register)

    yield

    while finalizers:
        func, args, kwargs = finalizers.pop()
        func(*args, **kwargs)


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="run the end-to-end tests marked slow",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("run_slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def make_sku(sku_id="SKU00000", category_id="AX", cost=600, price=1000, vlt=1, nrt=1):
    return SkuRecord(
        sku_id=sku_id,
        category_id=category_id,
        unit_cost=cost,
        unit_price=price,
        vlt_days=vlt,
        nrt_days=nrt,
    )


@pytest.fixture
def sku():
    return make_sku()


@pytest.fixture
def grid():
    return CandidateGrid(3, 8)


@pytest.fixture
def small_panel():
    return generate_panel(ScenarioConfig(n_skus=6, horizon_days=60, seed=3))


@pytest.fixture
def constant_panel():
    """Two categories of two skus each with flat demand."""
    skus = [
        make_sku("SKU00000", "AX", 600, 1000, vlt=1, nrt=1),
        make_sku("SKU00001", "AX", 300, 500, vlt=2, nrt=1),
        make_sku("SKU00002", "BY", 200, 400, vlt=1, nrt=2),
        make_sku("SKU00003", "BY", 900, 1200, vlt=0, nrt=1),
    ]
    demand = np.array([[5] * 60, [3] * 60, [8] * 60, [2] * 60])
    return DemandPanel(skus, demand)


@pytest.fixture
def pluginmanager():
    """A fresh plugin manager with the built-in hooks registered."""
    import pluggy

    from replenlab import hookspec, plugin

    pm = pluggy.PluginManager("replenlab")
    pm.add_hookspecs(hookspec)
    pm.register(plugin, "replenlab.plugin")
    return pm


class MockGateway:
    _count = 0

    def __init__(self):
        self.id = str(MockGateway._count)
        MockGateway._count += 1


class MockNode:
    """Stands in for a WorkerController in scheduler tests."""

    def __init__(self):
        self.sent = []
        self.gateway = MockGateway()
        self._shutdown = False

    def send_cells(self, indices):
        self.sent.extend(indices)

    def shutdown(self):
        self._shutdown = True

    @property
    def shutting_down(self):
        return self._shutdown
