"""
Trace-driven periodic-review replenishment simulator.

Every simulated day runs, in order: arrivals, demand (unmet demand is lost),
cost accrual on the post-demand inventory, and, on review days, an order
that arrives ``max(vlt_days, 1)`` days later.  Money is integer cents.
"""
import math
from dataclasses import dataclass, replace
from decimal import InvalidOperation
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from replenlab.datagen import _int_column, _read_table, format_cents, parse_cents
from replenlab.errors import DomainError, ParseError, WriteError
from replenlab.plugin import log as _rootlog

log = _rootlog.sim

SALE_BASES = ("demand", "fulfilled")
PARAM_COLUMNS = ["category_id", "v_days", "stock_value", "loss_value"]


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class CandidateGrid:
    min_days: int = 3
    max_days: int = 30

    def __post_init__(self):
        if not 1 <= self.min_days <= self.max_days:
            raise DomainError(
                "invalid candidate grid [{}, {}]".format(self.min_days, self.max_days)
            )

    @property
    def size(self):
        return self.max_days - self.min_days + 1

    def values(self):
        return np.arange(self.min_days, self.max_days + 1)

    def index(self, v):
        if v not in self:
            raise DomainError("v={} outside grid [{}, {}]".format(v, self.min_days, self.max_days))
        return int(v) - self.min_days

    def clip(self, v):
        return min(max(int(v), self.min_days), self.max_days)

    def __contains__(self, v):
        return float(v).is_integer() and self.min_days <= v <= self.max_days


@dataclass(frozen=True)
class SimConfig:
    horizon_days: int
    initial_inventory: int = 0
    demand_avg_window: int = 14
    #: first review day; later reviews follow every nrt_days
    order_offset: int = 0
    #: overrides the trailing demand average when set
    fixed_demand_avg: Optional[float] = None
    sale_basis: str = "demand"
    #: bounds every constant candidate when set
    grid: Optional[CandidateGrid] = None

    def __post_init__(self):
        if self.horizon_days < 1:
            raise DomainError("horizon_days must be >= 1")
        if self.demand_avg_window < 1:
            raise DomainError("demand_avg_window must be >= 1")
        if self.initial_inventory < 0:
            raise DomainError("initial_inventory must be >= 0")
        if self.order_offset < 0:
            raise DomainError("order_offset must be >= 0")
        if self.sale_basis not in SALE_BASES:
            raise DomainError("sale_basis must be one of {}".format(SALE_BASES))

    def with_horizon(self, horizon_days, **kwargs):
        return replace(self, horizon_days=horizon_days, **kwargs)


class SimOutcome:
    """One simulated trajectory of a single SKU."""

    _fields = (
        "stock_cents",
        "lost_sales_cents",
        "inventory_trace",
        "lost_trace",
        "arrivals_trace",
        "orders_trace",
        "sold_units_total",
        "instock_days",
        "pipeline_units",
    )

    def __init__(
        self,
        stock_cents,
        lost_sales_cents,
        inventory_trace,
        lost_trace,
        arrivals_trace,
        orders_trace,
        sold_units_total,
        instock_days,
        pipeline_units,
    ):
        self.stock_cents = int(stock_cents)
        self.lost_sales_cents = int(lost_sales_cents)
        self.inventory_trace = np.asarray(inventory_trace, dtype=np.int64)
        self.lost_trace = np.asarray(lost_trace, dtype=np.int64)
        self.arrivals_trace = np.asarray(arrivals_trace, dtype=np.int64)
        self.orders_trace = np.asarray(orders_trace, dtype=np.int64)
        self.sold_units_total = int(sold_units_total)
        self.instock_days = int(instock_days)
        self.pipeline_units = int(pipeline_units)

    @property
    def stock_value(self):
        return self.stock_cents / 100.0

    @property
    def lost_sales_value(self):
        return self.lost_sales_cents / 100.0

    @property
    def horizon_days(self):
        return len(self.inventory_trace)

    @property
    def avg_inventory_units(self):
        return float(self.inventory_trace.mean())

    def __eq__(self, other):
        if not isinstance(other, SimOutcome):
            return NotImplemented
        for name in self._fields:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    def __repr__(self):
        return "<SimOutcome stock={} lost={} days={}>".format(
            format_cents(self.stock_cents), format_cents(self.lost_sales_cents), self.horizon_days
        )


def review_days(horizon_days, nrt_days, offset=0):
    """Indices of the review (ordering) days within the horizon."""
    return list(range(offset, horizon_days, nrt_days))


def _as_trace(trace, cfg):
    demand = np.asarray(trace, dtype=np.int64)
    if demand.ndim != 1 or demand.size == 0:
        raise DomainError("demand trace must be a non-empty vector")
    if (demand < 0).any():
        raise DomainError("negative demand in trace")
    if demand.size != cfg.horizon_days:
        raise DomainError(
            "trace length {} != horizon_days {}".format(demand.size, cfg.horizon_days)
        )
    return demand


class _DemandAverage:
    """Trailing mean of realized demand before a given trace day."""

    def __init__(self, demand, history, cfg):
        self.fixed = cfg.fixed_demand_avg
        self.window = cfg.demand_avg_window
        history = np.asarray(history if history is not None else [], dtype=np.int64)
        self.offset = history.size
        full = np.concatenate([history, demand])
        self.prefix = np.concatenate([[0], np.cumsum(full)])
        if history.size:
            self.start = float(history[-self.window :].mean())
        else:
            self.start = float(demand[: self.window].mean())

    def __call__(self, t):
        if self.fixed is not None:
            return float(self.fixed)
        n = self.offset + t
        if n < self.window:
            return self.start
        return float(self.prefix[n] - self.prefix[n - self.window]) / self.window


def _run(demand, sku, cfg, order_quantity, history=None):
    horizon = len(demand)
    dbar = _DemandAverage(demand, history, cfg)
    lead = max(sku.vlt_days, 1)
    unit_cost, unit_price = sku.unit_cost, sku.unit_price
    due = [0] * horizon
    inventory = [0] * horizon
    lost = [0] * horizon
    arrivals = [0] * horizon
    orders = [0] * horizon
    on_hand = int(cfg.initial_inventory)
    pipeline = 0
    stock_cents = lost_cents = sold_total = instock = 0
    review = 0
    next_review = cfg.order_offset
    for t in range(horizon):
        arrived = due[t]
        on_hand += arrived
        pipeline -= arrived
        arrivals[t] = arrived
        d = int(demand[t])
        short = d - on_hand if d > on_hand else 0
        sold = d - short
        on_hand -= sold
        sold_total += sold
        inventory[t] = on_hand
        lost[t] = short
        stock_cents += unit_cost * on_hand
        lost_cents += unit_price * short
        if not short:
            instock += 1
        if t == next_review:
            q = int(order_quantity(t, review, on_hand, pipeline, dbar(t)))
            if q < 0:
                raise DomainError("negative order quantity {} on day {}".format(q, t))
            orders[t] = q
            pipeline += q
            if t + lead < horizon:
                due[t + lead] += q
            review += 1
            next_review += sku.nrt_days
    return SimOutcome(
        stock_cents, lost_cents, inventory, lost, arrivals, orders, sold_total, instock, pipeline
    )


def evaluate_candidate(trace, sku, v, cfg, grid=None, history=None) -> SimOutcome:
    """Simulate ordering ``round(v * dbar)`` units at every review day.

    ``v`` is checked against ``grid``, falling back to ``cfg.grid``.
    """
    if grid is None:
        grid = cfg.grid
    if grid is not None and v not in grid:
        raise DomainError("v={} outside grid [{}, {}]".format(v, grid.min_days, grid.max_days))
    if v < 0:
        raise DomainError("inventory days must be >= 0, got {}".format(v))
    demand = _as_trace(trace, cfg)
    return _run(demand, sku, cfg, lambda t, k, oh, pipe, dbar: round_half_up(v * dbar), history)


def simulate_policy(trace, sku, decisions, cfg, history=None) -> SimOutcome:
    """Like :func:`evaluate_candidate` with one decision per review day."""
    demand = _as_trace(trace, cfg)
    n = len(review_days(len(demand), sku.nrt_days, cfg.order_offset))
    decisions = list(decisions)
    if len(decisions) != n:
        raise DomainError(
            "expected {} decisions (one per review day), got {}".format(n, len(decisions))
        )
    if any(v < 0 for v in decisions):
        raise DomainError("inventory days must be >= 0")
    return _run(
        demand,
        sku,
        cfg,
        lambda t, k, oh, pipe, dbar: round_half_up(decisions[k] * dbar),
        history,
    )


def simulate_base_stock(trace, sku, levels, cfg, history=None) -> SimOutcome:
    """Order up to ``levels`` (one per review day, or a scalar) on the review calendar.

    The order closes the gap between the level and the inventory position
    (on hand plus pipeline).
    """
    demand = _as_trace(trace, cfg)
    n = len(review_days(len(demand), sku.nrt_days, cfg.order_offset))
    if np.ndim(levels) == 0:
        levels = [float(levels)] * n
    levels = [float(s) for s in levels]
    if len(levels) != n:
        raise DomainError("expected {} base stock levels, got {}".format(n, len(levels)))
    if any(s < 0 or not math.isfinite(s) for s in levels):
        raise DomainError("base stock levels must be finite and >= 0")

    def order_up_to(t, k, on_hand, pipeline, dbar):
        return max(0, round_half_up(levels[k] - on_hand - pipeline))

    return _run(demand, sku, cfg, order_up_to, history)


class Simulator:
    """Bound simulator that counts how often it was asked to simulate."""

    def __init__(self):
        self.calls = 0

    def evaluate_candidate(self, *args, **kwargs):
        self.calls += 1
        return evaluate_candidate(*args, **kwargs)

    def simulate_policy(self, *args, **kwargs):
        self.calls += 1
        return simulate_policy(*args, **kwargs)

    def simulate_base_stock(self, *args, **kwargs):
        self.calls += 1
        return simulate_base_stock(*args, **kwargs)


# -------------------------------------------------------------------------
# metrics
# -------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricSet:
    #: None when average demand is zero
    turnover_days: Optional[float]
    instock_rate: float
    holding_cents: int
    stockout_cents: int
    avg_inventory_units: float = 0.0
    avg_demand_units: float = 0.0

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


def compute_metrics(outcome: SimOutcome, trace) -> MetricSet:
    demand = np.asarray(trace, dtype=np.int64)
    if demand.size != outcome.horizon_days:
        raise DomainError(
            "trace length {} does not match outcome horizon {}".format(
                demand.size, outcome.horizon_days
            )
        )
    avg_demand = float(demand.mean())
    avg_inv = outcome.avg_inventory_units
    return MetricSet(
        turnover_days=avg_inv / avg_demand if avg_demand > 0 else None,
        instock_rate=outcome.instock_days / outcome.horizon_days,
        holding_cents=outcome.stock_cents,
        stockout_cents=outcome.lost_sales_cents,
        avg_inventory_units=avg_inv,
        avg_demand_units=avg_demand,
    )


# -------------------------------------------------------------------------
# parameter tabulation
# -------------------------------------------------------------------------


class ParamTable:
    """Per category and candidate ``v``: summed holding value and lost-sales value."""

    def __init__(self, categories, grid, stock, loss, sale_total_cents):
        self.categories = tuple(categories)
        self.grid = grid
        self.stock = np.asarray(stock, dtype=np.int64)
        self.loss = np.asarray(loss, dtype=np.int64)
        self.sale_total_cents = int(sale_total_cents)
        shape = (len(self.categories), grid.size)
        if self.stock.shape != shape or self.loss.shape != shape:
            raise DomainError("param matrices must have shape {}".format(shape))
        if self.sale_total_cents < 0:
            raise DomainError("sale_total must be >= 0")

    @property
    def sale_total(self):
        return self.sale_total_cents / 100.0

    def row(self, category_id):
        return self.categories.index(category_id)

    def to_frame(self):
        rows = []
        for i, cat in enumerate(self.categories):
            for j, v in enumerate(self.grid.values()):
                rows.append(
                    [cat, int(v), format_cents(self.stock[i, j]), format_cents(self.loss[i, j])]
                )
        return pd.DataFrame(rows, columns=PARAM_COLUMNS)

    def save(self, path):
        try:
            self.to_frame().to_csv(str(path), index=False, lineterminator="\n")
        except OSError as e:
            raise WriteError("cannot write {}: {}".format(path, e)) from e

    @classmethod
    def load(cls, path, grid, sale_total_cents):
        """Read a table written by :meth:`save`; every (category, v) cell must be present."""
        filename = str(path)
        df = _read_table(filename, PARAM_COLUMNS)
        days = _int_column(df, "v_days", filename)
        categories = sorted(set(df["category_id"]))
        if not categories:
            raise ParseError(filename, 1, "no parameter rows")
        row = {cat: k for k, cat in enumerate(categories)}
        shape = (len(categories), grid.size)
        stock = np.zeros(shape, dtype=np.int64)
        loss = np.zeros(shape, dtype=np.int64)
        seen = np.zeros(shape, dtype=bool)
        cells = zip(df["category_id"], days, df["stock_value"], df["loss_value"])
        for n, (cat, v, stock_text, loss_text) in enumerate(cells):
            lineno = n + 2
            if v not in grid:
                raise ParseError(
                    filename,
                    lineno,
                    "v_days {} outside grid [{}, {}]".format(v, grid.min_days, grid.max_days),
                )
            k, j = row[cat], grid.index(v)
            if seen[k, j]:
                raise ParseError(
                    filename, lineno, "duplicate row for category {!r} v {}".format(cat, v)
                )
            try:
                s, lost = parse_cents(stock_text), parse_cents(loss_text)
            except (InvalidOperation, ValueError) as e:
                raise ParseError(filename, lineno, "bad currency value: {}".format(e)) from e
            if s < 0 or lost < 0:
                raise ParseError(filename, lineno, "negative value")
            stock[k, j], loss[k, j], seen[k, j] = s, lost, True
        if not seen.all():
            k, j = (int(x) for x in np.argwhere(~seen)[0])
            raise ParseError(
                filename,
                0,
                "no row for category {!r} v {}".format(categories[k], grid.min_days + j),
            )
        return cls(categories, grid, stock, loss, sale_total_cents)


def category_order(panel, grouping):
    missing = [sku.sku_id for sku in panel.skus if sku.sku_id not in grouping]
    if missing:
        raise DomainError("sku(s) without category: {}".format(", ".join(missing)))
    return sorted({grouping[sku.sku_id] for sku in panel.skus})


def sku_payload(sku):
    """Plain-builtin form of a SkuRecord, for sending to worker processes."""
    return {
        "sku_id": sku.sku_id,
        "category_id": sku.category_id,
        "unit_cost": sku.unit_cost,
        "unit_price": sku.unit_price,
        "vlt_days": sku.vlt_days,
        "nrt_days": sku.nrt_days,
        "volatility_class": sku.volatility_class,
        "value_class": sku.value_class,
    }


def simconfig_payload(cfg):
    return {
        "horizon_days": cfg.horizon_days,
        "initial_inventory": cfg.initial_inventory,
        "demand_avg_window": cfg.demand_avg_window,
        "order_offset": cfg.order_offset,
        "fixed_demand_avg": cfg.fixed_demand_avg,
        "sale_basis": cfg.sale_basis,
    }


def evaluate_cell(trace, sku, v, cfg, history=None):
    """(stock_cents, lost_cents, sold_units) of one (sku, v) cell."""
    out = evaluate_candidate(trace, sku, v, cfg, history=history)
    return out.stock_cents, out.lost_sales_cents, out.sold_units_total


def tabulate_parameters(
    panel,
    grid: CandidateGrid,
    cfg: SimConfig,
    grouping: Mapping[str, str],
    history=None,
    numprocesses=0,
    pluginmanager=None,
    maxworkerrestart=None,
) -> ParamTable:
    """Sum per-SKU simulation outcomes of every candidate into category rows.

    ``history`` is an optional ``[sku x days]`` matrix of demand preceding the
    panel, used for the trailing demand average.  With ``numprocesses > 0``
    the (sku, v) cells are evaluated by local worker processes; the result
    does not depend on how cells were scheduled.
    """
    categories = category_order(panel, grouping)
    values = [int(v) for v in grid.values()]
    cells = [(i, j) for i in range(len(panel.skus)) for j in range(len(values))]
    if numprocesses:
        from replenlab.distsim import DistSession

        session = DistSession(
            panel,
            values,
            cfg,
            history=history,
            numprocesses=numprocesses,
            pluginmanager=pluginmanager,
            maxworkerrestart=maxworkerrestart,
        )
        results = session.run(cells)
    else:
        results = [
            evaluate_cell(
                panel.demand[i],
                panel.skus[i],
                values[j],
                cfg,
                history=None if history is None else history[i],
            )
            for i, j in cells
        ]
    stock = np.zeros((len(categories), len(values)), dtype=np.int64)
    loss = np.zeros_like(stock)
    row = {cat: k for k, cat in enumerate(categories)}
    for (i, j), (stock_cents, lost_cents, _) in zip(cells, results):
        k = row[grouping[panel.skus[i].sku_id]]
        stock[k, j] += stock_cents
        loss[k, j] += lost_cents
    sale_total = sale_total_cents(panel, cells, results, values, cfg)
    log("tabulated", len(cells), "cells into", len(categories), "categories")
    return ParamTable(categories, grid, stock, loss, sale_total)


def sale_total_cents(panel, cells, results, values, cfg):
    """SALE: demand value, or fulfilled value at the largest candidate."""
    prices = np.array([sku.unit_price for sku in panel.skus], dtype=np.int64)
    if cfg.sale_basis == "demand":
        return int((panel.demand.sum(axis=1) * prices).sum())
    last = len(values) - 1
    total = 0
    for (i, j), (_, _, sold) in zip(cells, results):
        if j == last:
            total += int(prices[i]) * sold
    return total


def broadcast_labels(panel, grouping, category_v: Mapping[str, int]):
    """Per-SKU decisions from per-category labels."""
    return [category_v[grouping[sku.sku_id]] for sku in panel.skus]


def simulate_panel(panel, decisions: Sequence, cfg: SimConfig, history=None):
    """Constant-decision outcomes for every SKU of ``panel``."""
    return [
        evaluate_candidate(
            panel.demand[i],
            sku,
            decisions[i],
            cfg,
            history=None if history is None else history[i],
        )
        for i, sku in enumerate(panel.skus)
    ]
