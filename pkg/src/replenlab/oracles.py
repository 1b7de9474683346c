"""
Brute-force and closed-form reference implementations for the test suite.

Nothing here imports the simulator, the solvers or the baselines: every
oracle is a separate, deliberately naive transcription, so agreement with
the main path means something.
"""
import itertools
import json
import math
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np
from scipy import special

from replenlab.errors import DomainError, InfeasibleError, SizeError

ENUMERATION_LIMIT = 10 ** 7


@dataclass
class OracleReport:
    case_id: str
    main_value: object
    oracle_value: object
    abs_deviation: float
    rel_deviation: float
    tolerance: float
    verdict: str

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, default=str)


def compare(case_id, main_value, oracle_value, abs_tol=0.0, rel_tol=0.0) -> OracleReport:
    """Compare scalars (or equal-length sequences, by the largest deviation)."""
    a = np.atleast_1d(np.asarray(main_value, dtype=float))
    b = np.atleast_1d(np.asarray(oracle_value, dtype=float))
    if a.shape != b.shape:
        abs_dev = rel_dev = math.inf
    else:
        diff = np.abs(a - b)
        abs_dev = float(diff.max()) if diff.size else 0.0
        scale = np.maximum(np.abs(b), 1e-300)
        rel_dev = float((diff / scale).max()) if diff.size else 0.0
    ok = abs_dev <= abs_tol or rel_dev <= rel_tol
    return OracleReport(
        str(case_id),
        _plain(main_value),
        _plain(oracle_value),
        abs_dev,
        rel_dev,
        max(abs_tol, rel_tol),
        "pass" if ok else "fail",
    )


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


class ReportRecorder:
    """Append OracleReports to a JSON-lines file (or just keep them)."""

    def __init__(self, path=None):
        self.path = path
        self.reports: List[OracleReport] = []

    def record(self, report: OracleReport):
        self.reports.append(report)
        if self.path:
            with open(str(self.path), "a", encoding="utf-8") as f:
                f.write(report.to_json() + "\n")
        return report

    @property
    def failures(self):
        return [r for r in self.reports if not r.passed]


# -------------------------------------------------------------------------
# selection
# -------------------------------------------------------------------------


@dataclass
class OracleSelection:
    chosen_days: tuple
    objective_cents: int
    total_loss_cents: int


def enumerate_selection(problem) -> OracleSelection:
    """Global optimum by trying every combination in lexicographic order."""
    stock = [[int(x) for x in row] for row in np.asarray(problem.stock)]
    loss = [[int(x) for x in row] for row in np.asarray(problem.loss)]
    n, V = len(stock), len(stock[0])
    if V ** n > ENUMERATION_LIMIT:
        raise SizeError("{}^{} combinations exceed the enumeration limit".format(V, n))
    budget = problem.sale_total_cents * (1.0 - problem.alpha_loss)
    best = None
    for combo in itertools.product(range(V), repeat=n):
        total_loss = 0
        total_stock = 0
        for i, j in enumerate(combo):
            total_loss += loss[i][j]
            total_stock += stock[i][j]
        if total_loss > budget:
            continue
        if best is None or total_stock < best[0]:
            best = (total_stock, total_loss, combo)
    if best is None:
        min_loss = sum(min(row) for row in loss)
        raise InfeasibleError(min_loss / 100.0, budget / 100.0)
    lo = problem.grid.min_days
    return OracleSelection(tuple(j + lo for j in best[2]), best[0], best[1])


# -------------------------------------------------------------------------
# simulation
# -------------------------------------------------------------------------


@dataclass
class OracleOutcome:
    stock_cents: int
    lost_sales_cents: int
    inventory_trace: list
    lost_trace: list
    arrivals_trace: list
    orders_trace: list
    sold_units_total: int
    instock_days: int
    pipeline_units: int


def replay_simulator(trace, sku, decisions, cfg, history=None) -> OracleOutcome:
    """Straight day-by-day replay: arrivals, demand, costs, review."""
    demand = [int(d) for d in trace]
    if not demand:
        raise DomainError("empty trace")
    past = [int(d) for d in (history if history is not None else [])]
    window = cfg.demand_avg_window
    if past:
        tail = past[-window:]
        start_avg = sum(tail) / len(tail)
    else:
        head = demand[:window]
        start_avg = sum(head) / len(head)

    review_list = []
    day = cfg.order_offset
    while day < len(demand):
        review_list.append(day)
        day += sku.nrt_days
    if isinstance(decisions, (int, float)):
        decisions = [decisions] * len(review_list)
    if len(decisions) != len(review_list):
        raise DomainError("decision count mismatch")

    on_hand = cfg.initial_inventory
    incoming = {}
    ordered = 0
    arrived_total = 0
    stock = lost_value = sold_total = instock = 0
    inventory, lost, arrivals, orders = [], [], [], []
    for t, d in enumerate(demand):
        got = incoming.pop(t, 0)
        on_hand = on_hand + got
        arrived_total += got
        arrivals.append(got)
        if d <= on_hand:
            sold, short = d, 0
        else:
            sold, short = on_hand, d - on_hand
        on_hand = on_hand - sold
        sold_total += sold
        inventory.append(on_hand)
        lost.append(short)
        stock += sku.unit_cost * on_hand
        lost_value += sku.unit_price * short
        if short == 0:
            instock += 1
        if t in review_list:
            k = review_list.index(t)
            if cfg.fixed_demand_avg is not None:
                avg = float(cfg.fixed_demand_avg)
            else:
                seen = past + demand[:t]
                if len(seen) >= window:
                    avg = sum(seen[-window:]) / window
                else:
                    avg = start_avg
            qty = math.floor(decisions[k] * avg + 0.5)
            orders.append(qty)
            ordered += qty
            lead = sku.vlt_days if sku.vlt_days > 0 else 1
            incoming[t + lead] = incoming.get(t + lead, 0) + qty
        else:
            orders.append(0)
    return OracleOutcome(
        stock,
        lost_value,
        inventory,
        lost,
        arrivals,
        orders,
        sold_total,
        instock,
        ordered - arrived_total,
    )


# -------------------------------------------------------------------------
# gradients and distributions
# -------------------------------------------------------------------------


def fd_gradient(f, params, epsilon=1e-5):
    """Central-difference gradient of scalar ``f`` at ``params``."""
    x = np.array(params, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        up = f(x.copy())
        flat[i] = orig - epsilon
        down = f(x.copy())
        flat[i] = orig
        grad[i] = (up - down) / (2.0 * epsilon)
    return grad.reshape(x.shape)


def _bisect(cdf, p, lo, hi, iterations=200):
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normal_quantile_bisect(p):
    return _bisect(lambda x: 0.5 * (1.0 + math.erf(x / math.sqrt(2.0))), p, -40.0, 40.0)


def gamma_quantile_bisect(shape, scale, p):
    hi = scale * (shape + 50.0 * math.sqrt(shape) + 50.0)
    return _bisect(lambda x: special.gammainc(shape, x / scale), p, 0.0, hi)


def gamma_cdf_reference(shape, scale, x):
    return float(special.gammainc(shape, x / scale))


def percentile_sorted(window, x):
    """Linear-interpolated percentile by sorting."""
    values = sorted(float(v) for v in window)
    rank = x / 100.0 * (len(values) - 1)
    lo = int(math.floor(rank))
    hi = min(lo + 1, len(values) - 1)
    return values[lo] + (rank - lo) * (values[hi] - values[lo])


def leave_one_out_reference(returns) -> Optional[list]:
    """Peer means computed one by one."""
    out = []
    for row in returns:
        k = len(row)
        out.append([sum(row[m] for m in range(k) if m != j) / (k - 1) for j in range(k)])
    return out
