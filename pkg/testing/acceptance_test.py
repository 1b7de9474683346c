"""
End-to-end runs of the command line; enable with ``--run-slow``.
"""
import pandas as pd
import py
import pytest

from replenlab.cli import cli_main
from replenlab.config import BUILTIN_METHODS

pytestmark = pytest.mark.slow

EXPERIMENT_INI = """
[scenario]
n_skus = 8
horizon_days = 120
promo_calendar = 100:4:1.8

[grid]
min_days = 3
max_days = 12

[labels]
epoch_days = 20
max_iter = 12

[train]
epochs_s1 = 5
epochs_s2 = 10
epochs_s3 = 5
hidden = 16
embed = 8
latent = 4
batch_size = 32

[reward]
sim_horizon_days = 7

[finetune]
n_steps = 10
batch_size = 16
eval_every = 5

[split]
train = 0-60
validation = 60-80
test = 80-120
"""


@pytest.fixture
def experiment_ini(tmpdir):
    path = tmpdir.join("experiment.ini")
    path.write(EXPERIMENT_INI)
    return str(path)


def run(*args):
    return cli_main(["run", "-q"] + [str(a) for a in args])


class TestEndToEnd:
    def test_run_all_methods(self, tmpdir, experiment_ini):
        out = tmpdir.join("out")
        assert run("--config", experiment_ini, "--seed", 11, "--out", out) == 0
        report = pd.read_csv(str(out.join("report.csv")), dtype=str, keep_default_na=False)
        assert list(report["method"]) == list(BUILTIN_METHODS)
        assert report.loc[0, "relative_total_pct"] == "0.00"
        assert (report["instock_rate"].astype(float) <= 1.0).all()
        for name in (
            "params.csv",
            "params.meta.json",
            "labels.csv",
            "calibration.json",
            "solver_log.jsonl",
            "model_pretrained.json",
            "model_finetuned.json",
            "results.json",
            "decisions.csv",
            "series.csv",
            "report.meta.json",
        ):
            assert out.join(name).check(file=1), name

    def test_workers_do_not_change_results(self, tmpdir, experiment_ini):
        a, b = tmpdir.join("inproc"), tmpdir.join("workers")
        assert run("--config", experiment_ini, "--out", a, "-n", 0) == 0
        assert run("--config", experiment_ini, "--out", b, "-n", 2) == 0
        for name in ("params.csv", "labels.csv", "report.csv", "decisions.csv"):
            assert a.join(name).read() == b.join(name).read(), name

    def test_report_is_repeatable(self, tmpdir, experiment_ini):
        out = tmpdir.join("out")
        assert run("--config", experiment_ini, "--out", out) == 0
        first = out.join("report.csv").read()
        args = ["report", "-q", "--out", str(out), "--reference", "PTO_normal"]
        assert cli_main(args) == 0
        relative = pd.read_csv(str(out.join("report.csv")), dtype=str, keep_default_na=False)
        assert relative.set_index("method").loc["PTO_normal", "relative_total_pct"] == "0.00"
        assert cli_main(["report", "-q", "--out", str(out)]) == 0
        assert out.join("report.csv").read() == first


DEFAULT_INI = py.path.local(__file__).dirpath().dirpath().join("example", "default.ini")
SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="module")
def default_totals(tmpdir_factory):
    """Test-split total cost per method for each seed of the default scenario."""
    totals = {}
    for seed in SEEDS:
        out = tmpdir_factory.mktemp("seed%d" % seed)
        assert run("--config", DEFAULT_INI, "--seed", seed, "--out", out, "-n", "auto") == 0
        report = pd.read_csv(str(out.join("report.csv")))
        totals[seed] = dict(zip(report["method"], report["total_cost"]))
    return totals


class TestDefaultScenario:
    def test_cost_ordering(self, default_totals):
        for seed, cost in default_totals.items():
            assert cost["OR"] <= cost["ORPR_finetuned"], seed
            assert cost["ORPR_finetuned"] <= min(cost["BM_50"], cost["BM_85"]), seed

    def test_finetuning_helps_on_most_seeds(self, default_totals):
        wins = sum(
            cost["ORPR_finetuned"] <= cost["DL_pretrain"] for cost in default_totals.values()
        )
        assert wins >= 3
