"""
The experiment pipeline: stages, method evaluation, aggregation and reports.

Stages run in the order of :data:`STAGES`; each reads the artifacts of its
predecessors from the output directory and writes its own.  All methods of
one report are simulated on the same test-split traces with the same
SimConfig.
"""
import functools
import json
import math
import sys
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
import py

from replenlab.baselines import base_stock_levels
from replenlab.config import ExperimentConfig, is_base_stock_percentile
from replenlab.datagen import format_cents, generate_panel, load_panel, save_panel
from replenlab.errors import ReplenlabError, StageError, UsageError, WriteError
from replenlab.or_select import LabelSet, calibrate_alpha, generate_labels, solve
from replenlab.plugin import get_plugin_manager, hookimpl
from replenlab.plugin import log as _rootlog
from replenlab.plugin import resolve_numprocesses
from replenlab.policy_net import (
    FeatureBatch,
    PolicyNet,
    build_features,
    greedy_actions,
    make_batch,
    pretrain,
)
from replenlab.rloo import ReferenceSource, finetune, make_prompts
from replenlab.sim_core import (
    MetricSet,
    ParamTable,
    Simulator,
    compute_metrics,
    review_days,
    simulate_base_stock,
    simulate_policy,
    tabulate_parameters,
)

log = _rootlog.experiment

STAGES = ("gen", "params", "labels", "pretrain", "finetune", "eval", "report")

ARTIFACTS = {
    "gen": ("skus.csv", "demand.csv"),
    "params": ("params.csv", "params.meta.json"),
    "labels": ("labels.csv", "calibration.json", "solver_log.jsonl"),
    "pretrain": ("model_pretrained.json", "train_log.jsonl"),
    "finetune": ("model_finetuned.json", "finetune_log.jsonl"),
    "eval": ("results.json",),
    "report": ("report.csv", "decisions.csv", "series.csv", "report.meta.json"),
}
PRODUCER = {name: stage for stage, names in ARTIFACTS.items() for name in names}

REPORT_COLUMNS = [
    "method",
    "turnover_days",
    "instock_rate",
    "holding_cost",
    "stockout_cost",
    "total_cost",
    "relative_total_pct",
]
DECISION_COLUMNS = ["method", "sku_id", "day_index", "epoch_start_day", "decision_kind", "value"]
SERIES_COLUMNS = ["method", "day_index", "inventory_units", "lost_units"]
NOT_APPLICABLE = "n/a"
#: days of future demand averaged into the forecast target of a sample
FORECAST_TARGET_DAYS = 7


# -------------------------------------------------------------------------
# metrics and reports
# -------------------------------------------------------------------------


def sku_summary(outcome, trace):
    m = compute_metrics(outcome, trace)
    return {
        "avg_inventory_units": m.avg_inventory_units,
        "avg_demand_units": m.avg_demand_units,
        "holding_cents": m.holding_cents,
        "stockout_cents": m.stockout_cents,
        "instock_days": outcome.instock_days,
        "days": outcome.horizon_days,
    }


def metrics_from_summaries(summaries) -> MetricSet:
    if not summaries:
        raise UsageError("cannot aggregate an empty set of outcomes")
    inventory = math.fsum(s["avg_inventory_units"] for s in summaries)
    demand = math.fsum(s["avg_demand_units"] for s in summaries)
    days = sum(s["days"] for s in summaries)
    return MetricSet(
        turnover_days=inventory / demand if demand > 0 else None,
        instock_rate=sum(s["instock_days"] for s in summaries) / days,
        holding_cents=sum(s["holding_cents"] for s in summaries),
        stockout_cents=sum(s["stockout_cents"] for s in summaries),
        avg_inventory_units=inventory,
        avg_demand_units=demand,
    )


def aggregate_metrics(outcomes, traces) -> MetricSet:
    """Sum costs; turnover is demand weighted and the in-stock rate day weighted."""
    if len(outcomes) != len(traces):
        raise UsageError("{} outcomes for {} traces".format(len(outcomes), len(traces)))
    return metrics_from_summaries([sku_summary(o, t) for o, t in zip(outcomes, traces)])


@dataclass(frozen=True)
class ReportRow:
    method: str
    turnover_days: Optional[float]
    instock_rate: float
    holding_cents: int
    stockout_cents: int
    #: None when the reference method is absent or costs nothing
    relative_total_pct: Optional[float] = None

    @property
    def total_cents(self):
        return self.holding_cents + self.stockout_cents

    @property
    def holding_cost(self):
        return self.holding_cents / 100.0

    @property
    def stockout_cost(self):
        return self.stockout_cents / 100.0

    @property
    def total_cost(self):
        return self.total_cents / 100.0

    def as_record(self):
        def fmt(value, spec):
            return NOT_APPLICABLE if value is None else format(value, spec)

        return [
            self.method,
            fmt(self.turnover_days, ".4f"),
            format(self.instock_rate, ".6f"),
            format_cents(self.holding_cents),
            format_cents(self.stockout_cents),
            format_cents(self.total_cents),
            fmt(self.relative_total_pct, ".2f"),
        ]


def build_report_rows(metrics, reference_method) -> List[ReportRow]:
    """``metrics`` maps method name -> MetricSet, in report order."""
    if not metrics:
        raise UsageError("no methods to report")
    ref = metrics.get(reference_method)
    if ref is None:
        log("reference method", reference_method, "not evaluated; relative column is n/a")
    rows = []
    for name, m in metrics.items():
        rel = None
        if ref is not None and ref.total_cents > 0:
            rel = 100.0 * (m.total_cents - ref.total_cents) / ref.total_cents
        rows.append(
            ReportRow(name, m.turnover_days, m.instock_rate, m.holding_cents, m.stockout_cents, rel)
        )
    return rows


def _write_csv(path, records, columns):
    try:
        pd.DataFrame(records, columns=columns).to_csv(str(path), index=False, lineterminator="\n")
    except OSError as e:
        raise WriteError("cannot write {}: {}".format(path, e)) from e
    return path


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError("not JSON serializable: {!r}".format(obj))


def write_json(path, data):
    try:
        py.path.local(path).write(
            json.dumps(data, sort_keys=True, indent=2, default=_jsonable) + "\n", ensure=True
        )
    except OSError as e:
        raise WriteError("cannot write {}: {}".format(path, e)) from e
    return path


def write_jsonl(path, records):
    lines = "".join(json.dumps(r, sort_keys=True, default=_jsonable) + "\n" for r in records)
    try:
        py.path.local(path).write(lines, ensure=True)
    except OSError as e:
        raise WriteError("cannot write {}: {}".format(path, e)) from e
    return path


def emit_report(rows, path, decisions=None, series=None, meta=None):
    """Write report.csv (and the optional companions) into directory ``path``."""
    if not rows:
        raise UsageError("cannot emit an empty report")
    out = py.path.local(path)
    try:
        out.ensure(dir=True)
    except OSError as e:
        raise WriteError("cannot create {}: {}".format(out, e)) from e
    written = [_write_csv(out.join("report.csv"), [r.as_record() for r in rows], REPORT_COLUMNS)]
    if decisions is not None:
        written.append(_write_csv(out.join("decisions.csv"), decisions, DECISION_COLUMNS))
    if series is not None:
        written.append(_write_csv(out.join("series.csv"), series, SERIES_COLUMNS))
    if meta is not None:
        written.append(write_json(out.join("report.meta.json"), meta))
    return written


# -------------------------------------------------------------------------
# methods
# -------------------------------------------------------------------------


class EvalContext:
    """What methods may read: the panel, the config, the test span and artifacts."""

    def __init__(self, panel, config: ExperimentConfig, span, grouping, artifacts):
        self.panel = panel
        self.config = config
        self.span = span
        self.grouping = grouping
        self._artifacts = artifacts
        self._cache = {}

    @property
    def horizon(self):
        return self.span[1] - self.span[0]

    @property
    def sim_config(self):
        return self.config.sim.with_horizon(self.horizon)

    def trace(self, i):
        a, b = self.span
        return self.panel.demand[i, a:b]

    def history(self, i):
        a = self.span[0]
        return self.panel.demand[i, :a] if a else None

    def label_key(self, sku):
        return sku.sku_id if self.config.labels.per_sku else self.grouping[sku.sku_id]

    def labels(self):
        if "labels" not in self._cache:
            self._cache["labels"] = LabelSet.load(self._artifacts("labels.csv"))
        return self._cache["labels"]

    def model(self, filename):
        if filename not in self._cache:
            self._cache[filename] = PolicyNet.load(self._artifacts(filename))
        return self._cache[filename]


@dataclass
class MethodRun:
    name: str
    summaries: list
    decisions: list
    inventory: list
    lost: list


class Method:
    """Evaluation of one replenishment method on the test split."""

    kind = "v_days"

    def __init__(self, name, context: EvalContext):
        self.name = name
        self.context = context

    def decisions(self, i) -> list:
        raise NotImplementedError

    def simulate(self, i, decisions):
        ctx = self.context
        return simulate_policy(
            ctx.trace(i), ctx.panel.skus[i], decisions, ctx.sim_config, history=ctx.history(i)
        )

    def format_decision(self, value):
        return str(int(value))

    def run(self) -> MethodRun:
        ctx = self.context
        a = ctx.span[0]
        epoch_days = ctx.config.labels.epoch_days
        summaries, rows = [], []
        inventory = np.zeros(ctx.horizon, dtype=np.int64)
        lost = np.zeros(ctx.horizon, dtype=np.int64)
        for i, sku in enumerate(ctx.panel.skus):
            decisions = self.decisions(i)
            out = self.simulate(i, decisions)
            summaries.append(sku_summary(out, ctx.trace(i)))
            inventory += out.inventory_trace
            lost += out.lost_trace
            days = review_days(ctx.horizon, sku.nrt_days, ctx.config.sim.order_offset)
            for t, value in zip(days, decisions):
                rows.append(
                    [
                        self.name,
                        sku.sku_id,
                        a + t,
                        a + (t // epoch_days) * epoch_days,
                        self.kind,
                        self.format_decision(value),
                    ]
                )
        log(self.name, "evaluated on", len(ctx.panel.skus), "skus")
        return MethodRun(self.name, summaries, rows, inventory.tolist(), lost.tolist())


class HindsightLabelMethod(Method):
    """The reference labels of the test split, executed as decisions."""

    def decisions(self, i):
        ctx = self.context
        sku = ctx.panel.skus[i]
        key = ctx.label_key(sku)
        a = ctx.span[0]
        days = review_days(ctx.horizon, sku.nrt_days, ctx.config.sim.order_offset)
        return [ctx.labels().lookup(key, a + t) for t in days]


class PolicyMethod(Method):
    """Greedy actions of a trained policy network."""

    def __init__(self, name, context, model_file):
        super().__init__(name, context)
        self.model_file = model_file

    def decisions(self, i):
        ctx = self.context
        sku = ctx.panel.skus[i]
        a = ctx.span[0]
        days = review_days(ctx.horizon, sku.nrt_days, ctx.config.sim.order_offset)
        vectors = [
            build_features(ctx.panel, i, a + t, ctx.config.grid, ctx.config.features) for t in days
        ]
        actions = greedy_actions(ctx.model(self.model_file), FeatureBatch.stack(vectors))
        return [int(v) for v in actions]


class BaseStockMethod(Method):
    kind = "base_stock"

    def __init__(self, name, context, method, percentile=None):
        super().__init__(name, context)
        self.method = method
        self.percentile = percentile

    def decisions(self, i):
        ctx = self.context
        b = ctx.config.baselines
        return base_stock_levels(
            ctx.panel.demand[i],
            ctx.span[0],
            ctx.horizon,
            ctx.panel.skus[i],
            self.method,
            window=b.window,
            percentile=self.percentile,
            order_offset=ctx.config.sim.order_offset,
            holding_rate=b.holding_rate,
        )

    def simulate(self, i, decisions):
        ctx = self.context
        return simulate_base_stock(
            ctx.trace(i), ctx.panel.skus[i], decisions, ctx.sim_config, history=ctx.history(i)
        )

    def format_decision(self, value):
        return format(value, ".4f")


def make_builtin_method(name, context):
    if name == "OR":
        return HindsightLabelMethod(name, context)
    if name in ("PTO_normal", "PTO_gamma"):
        return BaseStockMethod(name, context, name)
    if name == "DL_pretrain":
        return PolicyMethod(name, context, "model_pretrained.json")
    if name == "ORPR_finetuned":
        return PolicyMethod(name, context, "model_finetuned.json")
    x = is_base_stock_percentile(name)
    if x is not None:
        return BaseStockMethod(name, context, "BM", x)
    return None


# -------------------------------------------------------------------------
# the pipeline
# -------------------------------------------------------------------------


class Pipeline:
    def __init__(
        self, config: ExperimentConfig, out_dir, pluginmanager=None, maxworkerrestart=None
    ):
        self.config = config
        self.out = py.path.local(out_dir)
        self.pluginmanager = pluginmanager or get_plugin_manager()
        self.hook = self.pluginmanager.hook
        self.maxworkerrestart = maxworkerrestart
        self._numprocesses = None
        self._table = None
        self._current = None
        self.rows = None

    @property
    def numprocesses(self):
        if self._numprocesses is None:
            self._numprocesses = resolve_numprocesses(self.config.numprocesses, self.pluginmanager)
        return self._numprocesses

    @property
    def solver(self):
        return functools.partial(solve, pluginmanager=self.pluginmanager)

    def artifact(self, name):
        return self.out.join(name)

    def require(self, name):
        path = self.artifact(name)
        if not path.check(file=1):
            raise StageError(
                self._current,
                "missing {} (written by the {!r} stage)".format(path, PRODUCER.get(name, "?")),
            )
        return path

    def run_stage(self, stage, **kwargs):
        if stage not in STAGES:
            raise UsageError("unknown stage {!r}".format(stage))
        self._current = stage
        self.hook.replenlab_stage_start(stage=stage)
        try:
            self.out.ensure(dir=True)
            artifacts = getattr(self, "stage_" + stage)(**kwargs)
        except StageError:
            raise
        except (ReplenlabError, ValueError, ArithmeticError, OSError, KeyError) as e:
            raise StageError(stage, e) from e
        self.hook.replenlab_stage_finished(stage=stage, artifacts=artifacts)
        return artifacts

    def run_all(self):
        for stage in STAGES:
            self.run_stage(stage)
        return self.rows

    # -- shared inputs -------------------------------------------------

    def panel(self):
        self.require("skus.csv")
        self.require("demand.csv")
        return load_panel(self.out)

    def grouping(self, panel):
        if self.config.labels.per_sku:
            return {sku.sku_id: sku.sku_id for sku in panel.skus}
        return panel.categories()

    def _split(self, panel, span):
        a, b = span
        history = panel.demand[:, :a] if a else None
        return panel.window(a, b), history, self.config.sim.with_horizon(b - a)

    # -- stages --------------------------------------------------------

    def stage_gen(self):
        if self.config.panel_dir is not None:
            panel = load_panel(self.config.panel_dir)
        else:
            panel = generate_panel(self.config.scenario)
        save_panel(panel, self.out)
        return [self.artifact(n) for n in ARTIFACTS["gen"]]

    def _train_table(self, panel):
        if self._table is None:
            train, history, sim = self._split(panel, self.config.split.train)
            self._table = tabulate_parameters(
                train,
                self.config.grid,
                sim,
                self.grouping(panel),
                history=history,
                numprocesses=self.numprocesses,
                pluginmanager=self.pluginmanager,
                maxworkerrestart=self.maxworkerrestart,
            )
        return self._table

    def _table_key(self):
        cfg = self.config
        return {
            "sim_hash": cfg.sim_hash(),
            "train_split": list(cfg.split.train),
            "per_sku": cfg.labels.per_sku,
        }

    def param_table(self):
        """The train-split table as written by the params stage."""
        if self._table is None:
            path = self.require("params.csv")
            meta = json.loads(self.require("params.meta.json").read())
            key = self._table_key()
            if {k: meta.get(k) for k in key} != key:
                raise StageError(
                    self._current,
                    "{} was tabulated under another configuration;"
                    " rerun the 'params' stage".format(path),
                )
            self._table = ParamTable.load(path, self.config.grid, meta["sale_total_cents"])
        return self._table

    def stage_params(self):
        table = self._train_table(self.panel())
        table.save(self.artifact("params.csv"))
        meta = dict(self._table_key(), sale_total_cents=table.sale_total_cents)
        write_json(self.artifact("params.meta.json"), meta)
        return [self.artifact(n) for n in ARTIFACTS["params"]]

    def stage_labels(self):
        panel = self.panel()
        cfg = self.config
        grouping = self.grouping(panel)
        records = []
        train, history, sim = self._split(panel, cfg.split.train)
        calibrated = cfg.labels.alpha is None
        if calibrated:
            alpha_star, _ = calibrate_alpha(
                train,
                cfg.grid,
                sim,
                cfg.labels.target_turnover,
                cfg.labels.tol,
                grouping=grouping,
                max_iter=cfg.labels.max_iter,
                solver=self.solver,
                history=history,
                start_day=cfg.split.train[0],
                probe_log=records,
                table=self.param_table(),
            )
        else:
            alpha_star = cfg.labels.alpha
        labels = LabelSet()
        for span in (cfg.split.train, cfg.split.validation, cfg.split.test):
            window, history, sim = self._split(panel, span)
            labels.extend(
                generate_labels(
                    window,
                    cfg.grid,
                    sim,
                    alpha_star,
                    epoch_days=min(cfg.labels.epoch_days, span[1] - span[0]),
                    grouping=grouping,
                    solver=self.solver,
                    history=history,
                    start_day=span[0],
                    numprocesses=self.numprocesses,
                    diagnostics=records.append,
                )
            )
        labels.validate(cfg.grid)
        labels.save(self.artifact("labels.csv"))
        write_json(
            self.artifact("calibration.json"),
            {
                "alpha_star": alpha_star,
                "calibrated": calibrated,
                "target_turnover": cfg.labels.target_turnover,
                "tol": cfg.labels.tol,
            },
        )
        write_jsonl(self.artifact("solver_log.jsonl"), records)
        log("labels at alpha*=%r: %d rows" % (alpha_star, len(labels)))
        return [self.artifact(n) for n in ARTIFACTS["labels"]]

    def training_set(self, panel, labels):
        cfg = self.config
        grouping = self.grouping(panel)
        a, b = cfg.split.train
        vectors, targets, demand = [], [], []
        for i, sku in enumerate(panel.skus):
            key = sku.sku_id if cfg.labels.per_sku else grouping[sku.sku_id]
            for day in range(a, b, cfg.sample_stride):
                vectors.append(build_features(panel, i, day, cfg.grid, cfg.features))
                targets.append(labels.lookup(key, day))
                ahead = panel.demand[i, day : min(day + FORECAST_TARGET_DAYS, b)]
                demand.append(float(ahead.mean()))
        return make_batch(vectors, targets, demand)

    def stage_pretrain(self):
        panel = self.panel()
        labels = LabelSet.load(self.require("labels.csv"))
        dataset = self.training_set(panel, labels)
        net = PolicyNet(self.config.net)
        net.fit_standardization(dataset.features, dataset.demand_targets)
        net, records = pretrain(net, dataset, self.config.train)
        net.save(self.artifact("model_pretrained.json"))
        write_jsonl(self.artifact("train_log.jsonl"), records)
        return [self.artifact(n) for n in ARTIFACTS["pretrain"]]

    def _reference_inventory(self, panel, labels, grouping):
        """On-hand units after each train-split day under the reference labels."""
        cfg = self.config
        a, b = cfg.split.train
        train, history, sim = self._split(panel, cfg.split.train)
        on_hand = []
        for i, sku in enumerate(panel.skus):
            key = sku.sku_id if cfg.labels.per_sku else grouping[sku.sku_id]
            days = review_days(b - a, sku.nrt_days, sim.order_offset)
            out = simulate_policy(
                train.demand[i],
                sku,
                [labels.lookup(key, a + t) for t in days],
                sim,
                history=None if history is None else history[i],
            )
            on_hand.append(out.inventory_trace)
        a0 = cfg.sim.initial_inventory

        def inventory_fn(i, day):
            return on_hand[i][day - a - 1] if day > a else a0

        return inventory_fn

    def validation_cost(self, policy, panel, grouping):
        ctx = EvalContext(panel, self.config, self.config.split.validation, grouping, self.require)
        ctx._cache["model.json"] = policy
        run = PolicyMethod("validation", ctx, "model.json").run()
        m = metrics_from_summaries(run.summaries)
        return float(m.total_cents)

    def stage_finetune(self):
        cfg = self.config
        panel = self.panel()
        labels = LabelSet.load(self.require("labels.csv"))
        pretrained = PolicyNet.load(self.require("model_pretrained.json"))
        grouping = self.grouping(panel)
        a, b = cfg.split.train
        train_panel = panel.window(0, b)
        reference = ReferenceSource.from_labels(labels, panel, grouping)
        last = max(a + 1, b - cfg.reward.sim_horizon_days + 1)
        prompts = make_prompts(
            train_panel,
            range(a, last, cfg.prompt_stride),
            reference,
            pretrained,
            cfg.grid,
            lambda i, day: build_features(panel, i, day, cfg.grid, cfg.features),
            cfg.reward,
            inventory_fn=self._reference_inventory(panel, labels, grouping),
        )
        tuned, records = finetune(
            pretrained,
            pretrained,
            prompts,
            cfg.reward,
            sim=Simulator(),
            settings=cfg.finetune,
            validate=lambda policy: self.validation_cost(policy, panel, grouping),
        )
        tuned.save(self.artifact("model_finetuned.json"))
        write_jsonl(self.artifact("finetune_log.jsonl"), records)
        return [self.artifact(n) for n in ARTIFACTS["finetune"]]

    def stage_eval(self):
        cfg = self.config
        panel = self.panel()
        ctx = EvalContext(panel, cfg, cfg.split.test, self.grouping(panel), self.require)
        methods = {}
        for name in cfg.methods:
            method = self.hook.replenlab_make_method(name=name, context=ctx)
            if method is None:
                raise UsageError("unknown method {!r}".format(name))
            run = method.run()
            methods[name] = {
                "skus": run.summaries,
                "decisions": run.decisions,
                "inventory": run.inventory,
                "lost": run.lost,
            }
        results = {
            "config_hash": cfg.config_hash(),
            "sim_hash": cfg.sim_hash(),
            "test_split": list(cfg.split.test),
            "method_order": list(cfg.methods),
            "reference_method": cfg.reference_method,
            "methods": methods,
        }
        path = write_json(self.artifact("results.json"), results)
        return [path]

    def stage_report(self, reference_method=None):
        path = self.require("results.json")
        try:
            results = json.loads(path.read())
        except ValueError as e:
            raise StageError("report", "{} is not valid JSON: {}".format(path, e)) from e
        reference = reference_method or results["reference_method"]
        order = results["method_order"]
        methods = results["methods"]
        metrics = {name: metrics_from_summaries(methods[name]["skus"]) for name in order}
        self.rows = build_report_rows(metrics, reference)
        a = results["test_split"][0]
        decisions = [row for name in order for row in methods[name]["decisions"]]
        series = [
            [name, a + t, inv, lost]
            for name in order
            for t, (inv, lost) in enumerate(zip(methods[name]["inventory"], methods[name]["lost"]))
        ]
        meta = {
            "config_hash": results["config_hash"],
            "sim_hash": results["sim_hash"],
            "reference_method": reference,
            "test_split": results["test_split"],
            "methods": order,
        }
        return emit_report(self.rows, self.out, decisions, series, meta)


def run_experiment(config: ExperimentConfig, out_dir, pluginmanager=None, maxworkerrestart=None):
    """Run every stage; returns the report rows."""
    return Pipeline(config, out_dir, pluginmanager, maxworkerrestart).run_all()


# -------------------------------------------------------------------------
# terminal output
# -------------------------------------------------------------------------


class TerminalStageReporter:
    """Progress lines for stages and worker nodes."""

    def __init__(self, tw=None, verbose=0):
        self.tw = tw or py.io.TerminalWriter(sys.stderr)
        self.verbose = verbose
        self._specs = []

    def write_line(self, msg, **markup):
        self.tw.line(msg, **markup)

    @hookimpl
    def replenlab_stage_start(self, stage):
        self.write_line("[{}] running".format(stage), bold=True)

    @hookimpl
    def replenlab_stage_finished(self, stage, artifacts):
        names = ", ".join(py.path.local(p).basename for p in artifacts)
        self.write_line("[{}] wrote {}".format(stage, names), green=True)

    @hookimpl
    def replenlab_setupnodes(self, specs):
        self._specs = specs
        self.write_line("bringing up {} worker(s)".format(len(specs)))

    @hookimpl
    def replenlab_newgateway(self, gateway):
        if self.verbose > 0:
            self.write_line("[{}] gateway ready".format(gateway.id))

    @hookimpl
    def replenlab_workernodedown(self, node, error):
        if error:
            self.write_line("[{}] node down: {}".format(node.gateway.id, error), red=True)
