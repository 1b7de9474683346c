import ast
import json
import math

import numpy as np
import pytest

from replenlab import oracles
from replenlab.errors import DomainError
from replenlab.sim_core import SimConfig

from conftest import make_sku


def test_oracles_import_nothing_under_test():
    tree = ast.parse(open(oracles.__file__, encoding="utf-8").read())
    modules = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            modules.update(alias.name for alias in node.names)
        elif isinstance(node, ast.ImportFrom):
            modules.add(node.module)
    ours = {m for m in modules if m.split(".")[0] == "replenlab"}
    assert ours == {"replenlab.errors"}


class TestCompare:
    def test_exact(self):
        report = oracles.compare("c", 3, 3)
        assert report.passed
        assert report.abs_deviation == 0.0

    def test_tolerances(self):
        assert oracles.compare("c", 1.0, 1.05, abs_tol=0.1).passed
        assert oracles.compare("c", 100.0, 101.0, rel_tol=0.02).passed
        report = oracles.compare("c", 1.0, 2.0, abs_tol=0.5, rel_tol=0.1)
        assert report.verdict == "fail"
        assert report.rel_deviation == 0.5

    def test_sequences(self):
        report = oracles.compare("c", np.array([1, 2, 3]), [1, 2, 4])
        assert report.abs_deviation == 1.0
        assert report.main_value == [1, 2, 3]
        shape = oracles.compare("c", [1, 2], [1, 2, 3])
        assert math.isinf(shape.abs_deviation)
        assert not shape.passed

    def test_recorder(self, tmpdir):
        path = tmpdir.join("oracles.jsonl")
        recorder = oracles.ReportRecorder(path)
        recorder.record(oracles.compare("a", 1, 1))
        recorder.record(oracles.compare("b", 1, 2))
        lines = [json.loads(line) for line in path.readlines()]
        assert [d["case_id"] for d in lines] == ["a", "b"]
        assert [d["verdict"] for d in lines] == ["pass", "fail"]
        assert [r.case_id for r in recorder.failures] == ["b"]


def test_fd_gradient_quadratic():
    a = np.array([[1.0, -2.0], [0.5, 3.0]])

    def f(x):
        return float((a * x * x).sum())

    x = np.array([[0.3, -1.2], [2.0, 0.1]])
    np.testing.assert_allclose(oracles.fd_gradient(f, x), 2 * a * x, atol=1e-8)


def test_percentile_sorted():
    assert oracles.percentile_sorted([4, 1, 3, 2], 50) == 2.5
    assert oracles.percentile_sorted([7], 30) == 7.0


def test_leave_one_out_reference():
    assert oracles.leave_one_out_reference([[1.0, 3.0], [2.0, 2.0, 5.0]]) == [
        [3.0, 1.0],
        [3.5, 3.5, 2.0],
    ]


def test_replay_decision_count():
    cfg = SimConfig(horizon_days=4)
    with pytest.raises(DomainError):
        oracles.replay_simulator([1, 1, 1, 1], make_sku(nrt=2), [3, 3, 3], cfg)
    with pytest.raises(DomainError):
        oracles.replay_simulator([], make_sku(), 3, cfg)


def test_quantile_oracles():
    assert oracles.normal_quantile_bisect(0.5) == pytest.approx(0.0, abs=1e-12)
    # exponential distribution: shape 1
    q = oracles.gamma_quantile_bisect(1.0, 2.0, 0.5)
    assert q == pytest.approx(2.0 * math.log(2.0), rel=1e-10)
    assert oracles.gamma_cdf_reference(1.0, 2.0, q) == pytest.approx(0.5)
