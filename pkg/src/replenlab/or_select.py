"""
Multi-category inventory-days selection.

One candidate ``v`` is chosen per category so that the summed holding value
is minimal while the summed lost-sales value stays within the loss budget
``SALE * (1 - alpha_loss)``.  This is a multiple-choice knapsack; three
solvers are provided:

* :func:`solve_exact` enumerates small instances and runs a dynamic program
  over discretized loss otherwise,
* :func:`solve_lagrangian` bisects the loss multiplier and repairs the
  resulting primal selection,
* :func:`min_loss_selection` is the fallback for infeasible budgets.

Ties between equal-objective selections prefer smaller ``v``, then the lower
category index.
"""
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from replenlab.errors import (
    CalibrationWarning,
    DomainError,
    InfeasibleError,
    LabelingWarning,
    ParseError,
    WriteError,
)
from replenlab.plugin import get_plugin_manager
from replenlab.plugin import log as _rootlog
from replenlab.sim_core import (
    CandidateGrid,
    broadcast_labels,
    simulate_panel,
    tabulate_parameters,
)

log = _rootlog.select

EXHAUSTIVE_CAP = 200_000
DP_CELL_LIMIT = 50_000
DP_RESOLUTION_STEPS = 10_000


@dataclass(frozen=True)
class SelectionProblem:
    grid: CandidateGrid
    stock: np.ndarray
    loss: np.ndarray
    sale_total_cents: int
    alpha_loss: float = 0.0
    categories: tuple = ()

    def __post_init__(self):
        stock = np.asarray(self.stock, dtype=np.int64)
        loss = np.asarray(self.loss, dtype=np.int64)
        object.__setattr__(self, "stock", stock)
        object.__setattr__(self, "loss", loss)
        if stock.ndim != 2 or stock.shape != loss.shape or stock.shape[1] != self.grid.size:
            raise DomainError(
                "stock/loss must both have shape (categories, {}), got {} and {}".format(
                    self.grid.size, stock.shape, loss.shape
                )
            )
        if stock.shape[0] < 1:
            raise DomainError("selection problem needs at least one category")
        if not 0.0 <= self.alpha_loss <= 1.0:
            raise DomainError("alpha_loss must lie in [0, 1], got {}".format(self.alpha_loss))
        if self.sale_total_cents < 0:
            raise DomainError("sale_total must be >= 0")
        if not self.categories:
            object.__setattr__(
                self, "categories", tuple(str(i) for i in range(stock.shape[0]))
            )
        elif len(self.categories) != stock.shape[0]:
            raise DomainError("one category id per row required")

    @classmethod
    def from_table(cls, table, alpha_loss=0.0):
        return cls(
            grid=table.grid,
            stock=table.stock,
            loss=table.loss,
            sale_total_cents=table.sale_total_cents,
            alpha_loss=alpha_loss,
            categories=table.categories,
        )

    def with_alpha(self, alpha_loss):
        return replace(self, alpha_loss=alpha_loss)

    @property
    def n_categories(self):
        return self.stock.shape[0]

    @property
    def budget(self):
        """Loss budget in cents."""
        return self.sale_total_cents * (1.0 - self.alpha_loss)

    @property
    def min_loss(self):
        return int(self.loss.min(axis=1).sum())

    def check_feasible(self):
        if self.min_loss > self.budget:
            raise InfeasibleError(self.min_loss / 100.0, self.budget / 100.0)


@dataclass
class SelectionSolution:
    chosen_days: np.ndarray
    indicator: np.ndarray
    objective_cents: int
    total_loss_cents: int
    optimality_gap: float = 0.0
    solver: str = ""
    iterations: int = 0
    dual_bound_cents: Optional[float] = None
    categories: tuple = ()

    @classmethod
    def from_indices(cls, problem, idx, **kwargs):
        idx = np.asarray(idx, dtype=np.int64)
        rows = np.arange(problem.n_categories)
        indicator = np.zeros(problem.stock.shape, dtype=np.int64)
        indicator[rows, idx] = 1
        return cls(
            chosen_days=idx + problem.grid.min_days,
            indicator=indicator,
            objective_cents=int(problem.stock[rows, idx].sum()),
            total_loss_cents=int(problem.loss[rows, idx].sum()),
            categories=problem.categories,
            **kwargs
        )

    @property
    def objective_value(self):
        return self.objective_cents / 100.0

    @property
    def total_loss(self):
        return self.total_loss_cents / 100.0

    def labels(self):
        """Map category id -> chosen inventory days."""
        return {cat: int(v) for cat, v in zip(self.categories, self.chosen_days)}

    def diagnostics(self, **extra):
        data = {
            "solver": self.solver,
            "objective": self.objective_value,
            "total_loss": self.total_loss,
            "gap": self.optimality_gap,
            "iterations": self.iterations,
        }
        data.update(extra)
        return data


# -------------------------------------------------------------------------
# solvers
# -------------------------------------------------------------------------


def _rows(problem):
    return np.arange(problem.n_categories)


def _exhaustive(problem):
    n, V = problem.stock.shape
    combos = np.stack(np.unravel_index(np.arange(V ** n), (V,) * n), axis=1)
    rows = _rows(problem)
    losses = problem.loss[rows, combos].sum(axis=1)
    stocks = problem.stock[rows, combos].sum(axis=1)
    feasible = np.flatnonzero(losses <= problem.budget)
    # combos are in lexicographic order, argmin keeps the first minimum
    best = feasible[np.argmin(stocks[feasible])]
    return SelectionSolution.from_indices(
        problem, combos[best], solver="exhaustive", iterations=int(V ** n)
    )


def _knapsack(weights, stock, capacity):
    """Min-stock selection with summed integer weight <= capacity.

    Returns (value, choices) where value is inf when no selection fits.
    """
    n, V = stock.shape
    inf = np.inf
    best = np.zeros(capacity + 1)
    choices = np.zeros((n, capacity + 1), dtype=np.int32)
    for i in range(n):
        new = np.full(capacity + 1, inf)
        pick = np.zeros(capacity + 1, dtype=np.int32)
        for j in range(V):
            w = int(weights[i, j])
            if w > capacity:
                continue
            cand = np.full(capacity + 1, inf)
            cand[w:] = best[: capacity + 1 - w] + stock[i, j]
            better = cand < new
            new[better] = cand[better]
            pick[better] = j
        best = new
        choices[i] = pick
    return best[capacity], choices


def _backtrack(weights, choices, capacity):
    n = choices.shape[0]
    idx = np.zeros(n, dtype=np.int64)
    k = capacity
    for i in range(n - 1, -1, -1):
        j = int(choices[i, k])
        idx[i] = j
        k -= int(weights[i, j])
    return idx


def _dynamic_program(problem, steps):
    budget = problem.budget
    if budget > 0:
        resolution = budget / steps
        capacity = steps
        up = np.ceil(problem.loss / resolution - 1e-12).astype(np.int64)
        down = np.floor(problem.loss / resolution + 1e-12).astype(np.int64)
    else:
        capacity = 0
        up = np.where(problem.loss > 0, 1, 0)
        down = up
    stock = problem.stock.astype(float)
    value, choices = _knapsack(np.minimum(up, capacity + 1), stock, capacity)
    if math.isinf(value):
        # rounding up lost every selection; the min-loss pick is feasible
        sol = min_loss_selection(problem)
    else:
        idx = _backtrack(np.minimum(up, capacity + 1), choices, capacity)
        sol = SelectionSolution.from_indices(problem, idx)
    lower, _ = _knapsack(np.minimum(down, capacity + 1), stock, capacity)
    lower = min(float(lower), float(sol.objective_cents))
    sol.solver = "dp"
    sol.iterations = problem.n_categories * problem.grid.size
    sol.dual_bound_cents = lower
    sol.optimality_gap = _gap(sol.objective_cents, lower)
    return sol


def _gap(primal, dual):
    if primal <= 0:
        return 0.0
    return max(0.0, (primal - dual) / primal)


def solve_exact(
    problem: SelectionProblem,
    exhaustive_cap=EXHAUSTIVE_CAP,
    resolution_steps=DP_RESOLUTION_STEPS,
) -> SelectionSolution:
    """Optimal selection: enumeration for small instances, loss-discretized DP otherwise.

    The DP rounds losses up to stay feasible and reports the gap to the
    rounded-down relaxation, so ``optimality_gap`` bounds the suboptimality.
    """
    problem.check_feasible()
    if problem.grid.size ** problem.n_categories <= exhaustive_cap:
        return _exhaustive(problem)
    return _dynamic_program(problem, resolution_steps)


def min_loss_selection(problem: SelectionProblem) -> SelectionSolution:
    """Per category the least-loss candidate; ties go to less stock, then smaller v."""
    order = np.lexsort((problem.stock, problem.loss), axis=1)
    idx = order[:, 0]
    return SelectionSolution.from_indices(problem, idx, solver="min_loss")


def _lagrangian_pick(problem, lam):
    scores = problem.stock + lam * problem.loss
    idx = np.argmin(scores, axis=1)
    dual = float(scores[_rows(problem), idx].sum() - lam * problem.budget)
    return idx, dual


def _repair(problem, idx, pair_limit):
    """Greedy single and pairwise exchanges that lower stock within budget."""
    rows = _rows(problem)
    n, V = problem.stock.shape
    idx = idx.copy()
    moves = 0
    while True:
        cur_stock = problem.stock[rows, idx]
        cur_loss = problem.loss[rows, idx]
        slack = problem.budget - cur_loss.sum()
        ds = problem.stock - cur_stock[:, None]
        dl = problem.loss - cur_loss[:, None]
        single = np.where((ds < 0) & (dl <= slack), ds, 0)
        if single.min() < 0:
            i, j = np.unravel_index(np.argmin(single), single.shape)
            idx[i] = j
            moves += 1
            continue
        if n * V > pair_limit or n < 2:
            break
        fs = ds.reshape(-1)
        fl = dl.reshape(-1)
        owner = np.repeat(rows, V)
        total_s = fs[:, None] + fs[None, :]
        ok = (
            (total_s < 0)
            & (fl[:, None] + fl[None, :] <= slack)
            & (owner[:, None] < owner[None, :])
        )
        if not ok.any():
            break
        flat = np.argmin(np.where(ok, total_s, 0))
        a, b = np.unravel_index(flat, total_s.shape)
        idx[owner[a]] = a % V
        idx[owner[b]] = b % V
        moves += 1
    return idx, moves


def solve_lagrangian(
    problem: SelectionProblem, max_iter=60, pair_limit=3000
) -> SelectionSolution:
    """Dual bisection on the loss multiplier followed by greedy repair.

    ``dual_bound_cents <= optimum <= objective_cents`` always holds.
    """
    problem.check_feasible()
    rows = _rows(problem)

    def loss_of(idx):
        return int(problem.loss[rows, idx].sum())

    def stock_of(idx):
        return int(problem.stock[rows, idx].sum())

    idx, best_dual = _lagrangian_pick(problem, 0.0)
    iterations = 1
    if loss_of(idx) <= problem.budget:
        sol = SelectionSolution.from_indices(problem, idx, solver="lagrangian", iterations=1)
        sol.dual_bound_cents = float(sol.objective_cents)
        return sol

    lo, hi = 0.0, 1.0
    hi_idx, dual = _lagrangian_pick(problem, hi)
    best_dual = max(best_dual, dual)
    while loss_of(hi_idx) > problem.budget:
        lo, hi = hi, hi * 2.0
        hi_idx, dual = _lagrangian_pick(problem, hi)
        best_dual = max(best_dual, dual)
        iterations += 1
        if hi > 1e30:
            hi_idx = min_loss_selection(problem).chosen_days - problem.grid.min_days
            break
    best_idx = hi_idx
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        mid_idx, dual = _lagrangian_pick(problem, mid)
        best_dual = max(best_dual, dual)
        iterations += 1
        if loss_of(mid_idx) <= problem.budget:
            hi = mid
            if stock_of(mid_idx) < stock_of(best_idx):
                best_idx = mid_idx
        else:
            lo = mid
    repaired, moves = _repair(problem, best_idx, pair_limit)
    sol = SelectionSolution.from_indices(
        problem, repaired, solver="lagrangian", iterations=iterations + moves
    )
    sol.dual_bound_cents = min(best_dual, float(sol.objective_cents))
    sol.optimality_gap = _gap(sol.objective_cents, sol.dual_bound_cents)
    return sol


def default_solver(problem: SelectionProblem) -> Callable:
    """DP/exact for up to ``DP_CELL_LIMIT`` cells, Lagrangian beyond."""
    if problem.n_categories * problem.grid.size <= DP_CELL_LIMIT:
        return solve_exact
    return solve_lagrangian


def solve(problem: SelectionProblem, pluginmanager=None) -> SelectionSolution:
    pm = pluginmanager or get_plugin_manager()
    solver = pm.hook.replenlab_make_solver(problem=problem)
    return solver(problem)


def solve_or_fallback(problem, solver=None):
    """Solve, falling back to the min-loss selection when infeasible.

    Returns ``(solution, alpha_used)``; ``alpha_used`` reflects the loss
    level the fallback really achieves.
    """
    try:
        sol = (solver or solve)(problem)
        return sol, problem.alpha_loss
    except InfeasibleError:
        sol = min_loss_selection(problem)
        if problem.sale_total_cents > 0:
            alpha_used = max(0.0, 1.0 - sol.total_loss_cents / problem.sale_total_cents)
        else:
            alpha_used = 0.0
        return sol, alpha_used


# -------------------------------------------------------------------------
# pareto sweep
# -------------------------------------------------------------------------


class SweepEntry(NamedTuple):
    alpha: float
    solution: Optional[SelectionSolution]
    error: Optional[InfeasibleError] = None

    @property
    def feasible(self):
        return self.error is None


def pareto_sweep(base: SelectionProblem, alphas, solver=solve_exact) -> List[SweepEntry]:
    """Solve ``base`` at every ``alpha_loss`` of ``alphas`` (ascending).

    Infeasible levels are flagged per entry and the sweep continues.
    """
    alphas = [float(a) for a in alphas]
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise DomainError("alphas must be sorted ascending")
    entries = []
    for alpha in alphas:
        try:
            entries.append(SweepEntry(alpha, solver(base.with_alpha(alpha))))
        except InfeasibleError as e:
            log("sweep: infeasible at alpha", alpha)
            entries.append(SweepEntry(alpha, None, e))
    return entries


# -------------------------------------------------------------------------
# labels
# -------------------------------------------------------------------------


class LabelRow(NamedTuple):
    category_id: str
    epoch_start_day: int
    v_days: int
    alpha_used: float


LABEL_COLUMNS = list(LabelRow._fields)


class LabelSet:
    """Reference decisions, one row per category per labeling epoch."""

    def __init__(self, rows=()):
        self.rows = [LabelRow(*row) for row in rows]

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        if not isinstance(other, LabelSet):
            return NotImplemented
        return self.rows == other.rows

    def __repr__(self):
        return "<LabelSet {} rows>".format(len(self.rows))

    def extend(self, rows):
        self.rows.extend(LabelRow(*row) for row in rows)

    @property
    def epochs(self):
        return sorted({row.epoch_start_day for row in self.rows})

    def for_epoch(self, epoch_start_day):
        return {
            row.category_id: row.v_days
            for row in self.rows
            if row.epoch_start_day == epoch_start_day
        }

    def lookup(self, category_id, day):
        """Label of ``category_id`` in the epoch covering ``day``."""
        best = None
        for row in self.rows:
            if row.category_id == category_id and row.epoch_start_day <= day:
                if best is None or row.epoch_start_day > best.epoch_start_day:
                    best = row
        if best is None:
            raise KeyError((category_id, day))
        return best.v_days

    def validate(self, grid):
        for row in self.rows:
            if row.v_days not in grid:
                raise DomainError("label {!r} outside grid".format(row))

    def to_frame(self):
        return pd.DataFrame(
            [
                [r.category_id, r.epoch_start_day, r.v_days, repr(float(r.alpha_used))]
                for r in self.rows
            ],
            columns=LABEL_COLUMNS,
        )

    def save(self, path):
        try:
            self.to_frame().to_csv(str(path), index=False, lineterminator="\n")
        except OSError as e:
            raise WriteError("cannot write {}: {}".format(path, e)) from e

    @classmethod
    def load(cls, path):
        path = str(path)
        if not os.path.exists(path):
            raise ParseError(path, 0, "file not found")
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
        missing = [c for c in LABEL_COLUMNS if c not in df.columns]
        if missing:
            raise ParseError(path, 1, "missing column(s): {}".format(", ".join(missing)))
        rows = []
        for n, rec in enumerate(df.itertuples(index=False)):
            try:
                rows.append(
                    LabelRow(
                        rec.category_id,
                        int(rec.epoch_start_day),
                        int(rec.v_days),
                        float(rec.alpha_used),
                    )
                )
            except ValueError as e:
                raise ParseError(path, n + 2, str(e)) from e
        return cls(rows)


def _grouping(panel, grouping, per_sku):
    if per_sku:
        return {sku.sku_id: sku.sku_id for sku in panel.skus}
    return dict(grouping) if grouping is not None else panel.categories()


def achieved_turnover(panel, cfg, grouping, labels, history=None):
    """Demand-weighted turnover of the constant per-category ``labels``."""
    decisions = broadcast_labels(panel, grouping, labels)
    outcomes = simulate_panel(panel, decisions, cfg, history=history)
    inventory = sum(out.avg_inventory_units for out in outcomes)
    demand = float(panel.demand.mean(axis=1).sum())
    return inventory / demand if demand > 0 else 0.0


@dataclass
class _Probe:
    alpha: float
    turnover: float
    solution: SelectionSolution = field(repr=False)
    alpha_used: float = 0.0


def calibrate_alpha(
    panel,
    grid,
    cfg,
    target_turnover,
    tol,
    grouping=None,
    per_sku=False,
    max_iter=20,
    alpha_tol=2.0 ** -20,
    solver=None,
    history=None,
    start_day=0,
    numprocesses=0,
    probe_log=None,
    table=None,
):
    """Bisect ``alpha_loss`` until the labels' turnover meets ``target_turnover``.

    Every probe solves the selection problem and simulates the chosen
    decisions on the same trace.  Both endpoints are probed first; a target
    they do not bracket gives a :class:`CalibrationWarning` and the nearer
    endpoint.  The best probe seen is returned if the response is not
    monotone.  Returns ``(alpha_star, LabelSet)``.
    """
    grouping = _grouping(panel, grouping, per_sku)
    if table is None:
        table = tabulate_parameters(
            panel, grid, cfg, grouping, history=history, numprocesses=numprocesses
        )
    base = SelectionProblem.from_table(table)
    probes = []

    def probe(alpha):
        sol, alpha_used = solve_or_fallback(base.with_alpha(alpha), solver)
        turnover = achieved_turnover(panel, cfg, grouping, sol.labels(), history)
        p = _Probe(alpha, turnover, sol, alpha_used)
        probes.append(p)
        log("calibration probe alpha=%.6f turnover=%.4f" % (alpha, turnover))
        if probe_log is not None:
            probe_log.append(sol.diagnostics(alpha=alpha, turnover=turnover))
        return p

    def finish(p):
        labels = LabelSet(
            (cat, start_day, v, p.alpha_used) for cat, v in sorted(p.solution.labels().items())
        )
        return p.alpha, labels

    def dev(p):
        return abs(p.turnover - target_turnover)

    if not math.isfinite(tol):
        return finish(probe(0.5))

    low = probe(0.0)
    if dev(low) <= tol:
        return finish(low)
    high = probe(1.0)
    if dev(high) <= tol:
        return finish(high)

    lo_t, hi_t = sorted((low.turnover, high.turnover))
    if not lo_t <= target_turnover <= hi_t:
        nearest = min((low, high), key=dev)
        msg = "turnover target {:.3f} not bracketed by [{:.3f}, {:.3f}]; using alpha={}".format(
            target_turnover, lo_t, hi_t, nearest.alpha
        )
        log(msg)
        warnings.warn(CalibrationWarning(msg), stacklevel=2)
        return finish(nearest)

    increasing = high.turnover >= low.turnover
    lo, hi = 0.0, 1.0
    best = min((low, high), key=dev)
    for _ in range(max_iter):
        if hi - lo < alpha_tol:
            break
        p = probe(0.5 * (lo + hi))
        if dev(p) < dev(best):
            best = p
        if dev(p) <= tol:
            break
        if (p.turnover < target_turnover) == increasing:
            lo = p.alpha
        else:
            hi = p.alpha
    return finish(best)


def generate_labels(
    panel,
    grid,
    cfg,
    alpha_star,
    epoch_days=30,
    grouping=None,
    per_sku=False,
    solver=None,
    history=None,
    start_day=0,
    numprocesses=0,
    diagnostics=None,
):
    """Solve one selection problem per consecutive epoch at ``alpha_star``.

    Parameters of an epoch are tabulated on its sub-trace; the preceding
    days serve as demand history.  The last epoch may be shorter.
    """
    horizon = panel.horizon_days
    if epoch_days < 1:
        raise DomainError("epoch_days must be >= 1")
    if epoch_days > horizon:
        raise DomainError("epoch_days {} longer than horizon {}".format(epoch_days, horizon))
    grouping = _grouping(panel, grouping, per_sku)
    labels = LabelSet()
    for start in range(0, horizon, epoch_days):
        end = min(start + epoch_days, horizon)
        sub = panel.window(start, end)
        if history is None:
            hist = panel.demand[:, :start]
        else:
            hist = np.concatenate([history, panel.demand[:, :start]], axis=1)
        table = tabulate_parameters(
            sub,
            grid,
            replace(cfg, horizon_days=end - start),
            grouping,
            history=hist if hist.shape[1] else None,
            numprocesses=numprocesses,
        )
        problem = SelectionProblem.from_table(table, alpha_star)
        sol, alpha_used = solve_or_fallback(problem, solver)
        if alpha_used != problem.alpha_loss:
            msg = "epoch starting day {} infeasible at alpha={}; min-loss labels (alpha {:.4f})"
            msg = msg.format(
                start_day + start, alpha_star, alpha_used
            )
            log(msg)
            warnings.warn(LabelingWarning(msg), stacklevel=2)
        if diagnostics is not None:
            diagnostics(sol.diagnostics(alpha=alpha_star, epoch_start_day=start_day + start))
        labels.extend(
            (cat, start_day + start, v, alpha_used) for cat, v in sorted(sol.labels().items())
        )
    return labels
