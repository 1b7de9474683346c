import io
import json
from dataclasses import replace

import py
import pytest

from replenlab.config import config_from_sections
from replenlab.errors import StageError, UsageError
from replenlab.experiment import (
    REPORT_COLUMNS,
    Method,
    Pipeline,
    ReportRow,
    TerminalStageReporter,
    aggregate_metrics,
    build_report_rows,
    emit_report,
)
from replenlab.plugin import hookimpl
from replenlab.sim_core import MetricSet, SimOutcome, review_days


def outcome(inventory, stock_cents, lost_cents, instock):
    n = len(inventory)
    zeros = [0] * n
    return SimOutcome(stock_cents, lost_cents, inventory, zeros, zeros, zeros, 0, instock, 0)


def tiny_config(**run):
    return config_from_sections(
        {
            "scenario": {"n_skus": 3, "horizon_days": 60},
            "grid": {"min_days": 3, "max_days": 8},
            "labels": {"alpha": 0.3, "epoch_days": 10},
            "train": {
                "epochs_s1": 1,
                "epochs_s2": 2,
                "epochs_s3": 1,
                "hidden": 8,
                "embed": 6,
                "latent": 4,
                "batch_size": 8,
            },
            "reward": {"sim_horizon_days": 5, "k_samples": 2},
            "finetune": {"n_steps": 2, "batch_size": 4, "eval_every": 1},
            "split": {"train": (0, 30), "validation": (30, 40), "test": (40, 60)},
            "run": dict({"seed": 3}, **run),
        }
    )


def calibrated_config():
    cfg = tiny_config()
    return replace(cfg, labels=replace(cfg.labels, alpha=None, max_iter=3))


class TestAggregate:
    def test_weights(self):
        outcomes = [outcome([2, 2], 100, 0, 2), outcome([0, 0], 0, 500, 0)]
        m = aggregate_metrics(outcomes, [[1, 1], [3, 3]])
        assert m.turnover_days == 0.5
        assert m.instock_rate == 0.5
        assert (m.holding_cents, m.stockout_cents, m.total_cents) == (100, 500, 600)

    def test_zero_demand(self):
        m = aggregate_metrics([outcome([4, 4], 80, 0, 2)], [[0, 0]])
        assert m.turnover_days is None
        assert m.instock_rate == 1.0

    def test_mismatch(self):
        with pytest.raises(UsageError):
            aggregate_metrics([outcome([1], 0, 0, 1)], [])
        with pytest.raises(UsageError):
            aggregate_metrics([], [])


class TestReportRows:
    def metrics(self):
        return {
            "OR": MetricSet(10.0, 0.9, 1000, 1000),
            "BM_50": MetricSet(None, 1.0, 1500, 1500),
        }

    def test_relative_to_reference(self):
        rows = build_report_rows(self.metrics(), "OR")
        assert [r.method for r in rows] == ["OR", "BM_50"]
        assert rows[0].relative_total_pct == 0.0
        assert rows[1].relative_total_pct == 50.0
        assert rows[1].as_record() == [
            "BM_50", "n/a", "1.000000", "15.00", "15.00", "30.00", "50.00"
        ]

    def test_missing_reference(self):
        rows = build_report_rows(self.metrics(), "ORPR_finetuned")
        assert [r.relative_total_pct for r in rows] == [None, None]
        assert rows[0].as_record()[-1] == "n/a"

    def test_free_reference(self):
        metrics = {"OR": MetricSet(1.0, 1.0, 0, 0), "X": MetricSet(1.0, 1.0, 5, 0)}
        assert [r.relative_total_pct for r in build_report_rows(metrics, "OR")] == [None, None]

    def test_empty(self):
        with pytest.raises(UsageError):
            build_report_rows({}, "OR")


class TestEmitReport:
    def rows(self):
        return [
            ReportRow("OR", 10.0, 0.9, 1000, 1000, 0.0),
            ReportRow("BM_85", 12.5, 1.0, 2500, 0),
        ]

    def test_csv(self, tmpdir):
        emit_report(self.rows(), tmpdir)
        lines = tmpdir.join("report.csv").read().splitlines()
        assert lines[0] == ",".join(REPORT_COLUMNS)
        assert lines[1] == "OR,10.0000,0.900000,10.00,10.00,20.00,0.00"
        assert lines[2] == "BM_85,12.5000,1.000000,25.00,0.00,25.00,n/a"
        assert not tmpdir.join("decisions.csv").check()

    def test_idempotent(self, tmpdir):
        decisions = [["OR", "SKU00000", 40, 40, "v_days", "5"]]
        series = [["OR", 40, 12, 0]]
        meta = {"reference_method": "OR"}
        first = emit_report(self.rows(), tmpdir.join("a"), decisions, series, meta)
        second = emit_report(self.rows(), tmpdir.join("a"), decisions, series, meta)
        assert [p.basename for p in first] == [
            "report.csv",
            "decisions.csv",
            "series.csv",
            "report.meta.json",
        ]
        assert [p.read_binary() for p in first] == [p.read_binary() for p in second]
        assert json.loads(tmpdir.join("a", "report.meta.json").read()) == meta

    def test_empty(self, tmpdir):
        with pytest.raises(UsageError):
            emit_report([], tmpdir)


class StageRecorder:
    def __init__(self):
        self.calls = []

    @hookimpl
    def replenlab_stage_start(self, stage):
        self.calls.append(("start", stage))

    @hookimpl
    def replenlab_stage_finished(self, stage, artifacts):
        self.calls.append(("finished", stage, [py.path.local(p).basename for p in artifacts]))


class ConstantDays(Method):
    def decisions(self, i):
        ctx = self.context
        sku = ctx.panel.skus[i]
        return [5] * len(review_days(ctx.horizon, sku.nrt_days, ctx.config.sim.order_offset))


class ConstantPlugin:
    @hookimpl
    def replenlab_make_method(self, name, context):
        if name == "CONST5":
            return ConstantDays(name, context)


class TestPipeline:
    def test_missing_artifact(self, tmpdir, pluginmanager):
        pipeline = Pipeline(tiny_config(), tmpdir, pluginmanager)
        with pytest.raises(StageError) as excinfo:
            pipeline.run_stage("labels")
        assert excinfo.value.stage == "labels"
        assert "skus.csv" in str(excinfo.value)
        assert "'gen' stage" in str(excinfo.value)

    def test_unknown_stage(self, tmpdir, pluginmanager):
        with pytest.raises(UsageError):
            Pipeline(tiny_config(), tmpdir, pluginmanager).run_stage("deploy")

    def test_unknown_method(self, tmpdir, pluginmanager):
        cfg = tiny_config(methods=("OR", "NOPE"))
        pipeline = Pipeline(cfg, tmpdir, pluginmanager)
        for stage in ("gen", "params", "labels"):
            pipeline.run_stage(stage)
        with pytest.raises(StageError, match="unknown method 'NOPE'"):
            pipeline.run_stage("eval")

    def test_full_run(self, tmpdir, pluginmanager):
        recorder = StageRecorder()
        pluginmanager.register(recorder)
        cfg = tiny_config()
        rows = Pipeline(cfg, tmpdir, pluginmanager).run_all()
        assert [r.method for r in rows] == list(cfg.methods)
        assert rows[0].method == "OR" and rows[0].relative_total_pct == 0.0
        assert [c[1] for c in recorder.calls if c[0] == "start"] == [
            "gen",
            "params",
            "labels",
            "pretrain",
            "finetune",
            "eval",
            "report",
        ]
        assert ("finished", "gen", ["skus.csv", "demand.csv"]) in recorder.calls
        results = json.loads(tmpdir.join("results.json").read())
        assert results["config_hash"] == cfg.config_hash()
        assert results["test_split"] == [40, 60]
        report = tmpdir.join("report.csv").read().splitlines()
        assert len(report) == len(cfg.methods) + 1
        series = tmpdir.join("series.csv").read().splitlines()
        assert len(series) == 1 + 20 * len(cfg.methods)
        calibration = json.loads(tmpdir.join("calibration.json").read())
        assert calibration["alpha_star"] == 0.3
        assert calibration["calibrated"] is False
        for name in ("model_pretrained.json", "model_finetuned.json", "finetune_log.jsonl"):
            assert tmpdir.join(name).check(file=1)

    def test_deterministic(self, tmpdir, pluginmanager):
        cfg = tiny_config(methods=("OR", "PTO_normal", "BM_85", "DL_pretrain"))
        for name in ("a", "b"):
            pipeline = Pipeline(cfg, tmpdir.join(name), pluginmanager)
            for stage in ("gen", "params", "labels", "pretrain", "eval", "report"):
                pipeline.run_stage(stage)
        for name in ("report.csv", "decisions.csv", "labels.csv", "model_pretrained.json"):
            assert tmpdir.join("a", name).read() == tmpdir.join("b", name).read()

    def test_labels_calibrate_from_params_csv(self, tmpdir, pluginmanager):
        cfg = calibrated_config()
        inproc = Pipeline(cfg, tmpdir.join("a"), pluginmanager)
        for stage in ("gen", "params", "labels"):
            inproc.run_stage(stage)
        out = tmpdir.join("b")
        pipeline = Pipeline(cfg, out, pluginmanager)
        for stage in ("gen", "params"):
            pipeline.run_stage(stage)
        meta = json.loads(out.join("params.meta.json").read())
        assert meta["sim_hash"] == cfg.sim_hash()
        assert meta["sale_total_cents"] > 0
        Pipeline(cfg, out, pluginmanager).run_stage("labels")
        assert json.loads(out.join("calibration.json").read())["calibrated"] is True
        for name in ("params.csv", "labels.csv", "calibration.json"):
            assert out.join(name).read() == tmpdir.join("a", name).read(), name

    def test_stale_param_table(self, tmpdir, pluginmanager):
        cfg = calibrated_config()
        pipeline = Pipeline(cfg, tmpdir, pluginmanager)
        for stage in ("gen", "params"):
            pipeline.run_stage(stage)
        other = replace(cfg, sim=replace(cfg.sim, initial_inventory=5))
        with pytest.raises(StageError, match="rerun the 'params' stage"):
            Pipeline(other, tmpdir, pluginmanager).run_stage("labels")
        tmpdir.join("params.csv").remove()
        with pytest.raises(StageError, match="params.csv"):
            Pipeline(cfg, tmpdir, pluginmanager).run_stage("labels")

    def test_fixed_alpha_needs_no_params(self, tmpdir, pluginmanager):
        pipeline = Pipeline(tiny_config(), tmpdir, pluginmanager)
        pipeline.run_stage("gen")
        pipeline.run_stage("labels")
        assert tmpdir.join("labels.csv").check(file=1)
        assert not tmpdir.join("params.csv").check()

    def test_plugin_method_and_reference(self, tmpdir, pluginmanager):
        pluginmanager.register(ConstantPlugin())
        cfg = tiny_config(methods=("OR", "CONST5", "BM_50"))
        pipeline = Pipeline(cfg, tmpdir, pluginmanager)
        for stage in ("gen", "params", "labels", "eval"):
            pipeline.run_stage(stage)
        pipeline.run_stage("report", reference_method="CONST5")
        assert [r.method for r in pipeline.rows] == ["OR", "CONST5", "BM_50"]
        assert pipeline.rows[1].relative_total_pct == 0.0
        decisions = tmpdir.join("decisions.csv").read().splitlines()
        const = [line for line in decisions if line.startswith("CONST5,")]
        assert const and all(line.endswith(",v_days,5") for line in const)
        meta = json.loads(tmpdir.join("report.meta.json").read())
        assert meta["reference_method"] == "CONST5"


def test_terminal_reporter(tmpdir):
    out = io.StringIO()
    reporter = TerminalStageReporter(tw=py.io.TerminalWriter(file=out))
    reporter.replenlab_stage_start(stage="gen")
    reporter.replenlab_stage_finished(
        stage="gen", artifacts=[tmpdir.join("skus.csv"), tmpdir.join("demand.csv")]
    )
    assert out.getvalue().splitlines() == ["[gen] running", "[gen] wrote skus.csv, demand.csv"]
