"""
Synthetic demand panels and their CSV representation.

A panel is a set of SKUs with daily integer demand over a common horizon.
Generated panels draw negative-binomial demand around a weekly sinusoid,
scaled by promotion multipliers, with one counter-based random stream per
SKU so that the panel does not depend on generation order.
"""
import math
import os
import warnings
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import List, Tuple

import numpy as np
import pandas as pd

from replenlab.errors import DomainError, PanelWarning, ParseError, UsageError, WriteError
from replenlab.plugin import log as _rootlog

log = _rootlog.datagen

SKU_COLUMNS = [
    "sku_id",
    "category_id",
    "unit_cost",
    "unit_price",
    "vlt_days",
    "nrt_days",
    "volatility_class",
    "value_class",
]
DEMAND_COLUMNS = ["sku_id", "day_index", "units"]


def format_cents(cents):
    """Render integer cents as a decimal string with two places."""
    cents = int(cents)
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return "{}{}.{:02d}".format(sign, cents // 100, cents % 100)


def parse_cents(text):
    """Parse a decimal currency string into integer cents."""
    value = Decimal(text.strip()) * 100
    if value != value.to_integral_value():
        raise ValueError("more than two decimal places: {!r}".format(text))
    return int(value)


def to_cents(amount):
    """Round a currency amount to integer cents (half up)."""
    return int(math.floor(amount * 100 + 0.5))


@dataclass(frozen=True)
class SkuRecord:
    sku_id: str
    category_id: str
    unit_cost: int  # cents
    unit_price: int  # cents
    vlt_days: int
    nrt_days: int
    volatility_class: str = "X"
    value_class: str = "A"

    def __post_init__(self):
        if not self.unit_cost > 0:
            raise DomainError("unit_cost must be positive: {!r}".format(self))
        if self.unit_price < self.unit_cost:
            raise DomainError("unit_price below unit_cost: {!r}".format(self))
        if self.vlt_days < 0:
            raise DomainError("vlt_days must be >= 0: {!r}".format(self))
        if self.nrt_days < 1:
            raise DomainError("nrt_days must be >= 1: {!r}".format(self))


class DemandPanel:
    """Daily demand ``demand[i, t]`` for the SKUs ``skus[i]``."""

    def __init__(self, skus, demand):
        self.skus = list(skus)
        demand = np.asarray(demand, dtype=np.int64)
        if demand.ndim != 2 or demand.shape[0] != len(self.skus):
            raise DomainError(
                "demand matrix shape {} does not match {} skus".format(
                    demand.shape, len(self.skus)
                )
            )
        if (demand < 0).any():
            raise DomainError("negative demand in panel")
        ids = [sku.sku_id for sku in self.skus]
        if len(set(ids)) != len(ids):
            raise DomainError("duplicate sku ids in panel")
        self.demand = demand
        self.demand.setflags(write=False)
        self._index = {sku_id: i for i, sku_id in enumerate(ids)}

    @property
    def horizon_days(self):
        return self.demand.shape[1]

    def __len__(self):
        return len(self.skus)

    def __eq__(self, other):
        if not isinstance(other, DemandPanel):
            return NotImplemented
        return self.skus == other.skus and np.array_equal(self.demand, other.demand)

    def __repr__(self):
        return "<DemandPanel skus={} horizon={}>".format(len(self.skus), self.horizon_days)

    def index_of(self, sku_id):
        return self._index[sku_id]

    def trace(self, i, start=0, end=None):
        return self.demand[i, start:end]

    def window(self, start, end):
        """Return the sub-panel of days ``[start, end)``."""
        if not 0 <= start < end <= self.horizon_days:
            raise DomainError(
                "window [{}, {}) outside horizon {}".format(start, end, self.horizon_days)
            )
        return DemandPanel(self.skus, self.demand[:, start:end])

    def categories(self):
        """Map sku_id -> category_id."""
        return {sku.sku_id: sku.category_id for sku in self.skus}


@dataclass(frozen=True)
class ScenarioConfig:
    n_skus: int = 24
    horizon_days: int = 240
    base_demand_range: Tuple[float, float] = (2.0, 40.0)
    #: (class name, coefficient of variation), most stable first
    volatility_classes: Tuple[Tuple[str, float], ...] = (("X", 0.3), ("Y", 0.7), ("Z", 1.2))
    #: (class name, unit price tier), highest value first
    value_classes: Tuple[Tuple[str, float], ...] = (("A", 60.0), ("B", 20.0), ("C", 6.0))
    #: (start_day, duration_days, demand_multiplier)
    promo_calendar: Tuple[Tuple[int, int, float], ...] = ()
    seed: int = 0
    season_amplitude: float = 0.15
    season_period_days: int = 7
    cost_ratio: float = 0.6
    vlt_days_range: Tuple[int, int] = (1, 4)
    nrt_days_choices: Tuple[int, ...] = (1, 2, 3)
    extra: dict = field(default_factory=dict, compare=False)

    def validate(self):
        if self.n_skus < 1:
            raise UsageError("scenario needs at least one sku, got n_skus={}".format(self.n_skus))
        if self.horizon_days < 1:
            raise UsageError("scenario horizon_days must be >= 1")
        lo, hi = self.base_demand_range
        if not 0 <= lo <= hi:
            raise UsageError("invalid base_demand_range {!r}".format(self.base_demand_range))
        if not self.volatility_classes or not self.value_classes:
            raise UsageError("scenario needs volatility and value classes")
        for name, cv in self.volatility_classes:
            if cv < 0:
                raise UsageError("negative coefficient of variation for class {}".format(name))
        for name, price in self.value_classes:
            if price <= 0:
                raise UsageError("non-positive price tier for class {}".format(name))
        for start, duration, mult in self.promo_calendar:
            if start < 0 or duration < 1 or not mult > 0:
                raise UsageError(
                    "invalid promotion window {!r}".format((start, duration, mult))
                )
        if not 0 < self.cost_ratio <= 1:
            raise UsageError("cost_ratio must lie in (0, 1]")
        if not 0 <= self.season_amplitude < 1:
            raise UsageError("season_amplitude must lie in [0, 1)")
        vlo, vhi = self.vlt_days_range
        if not 0 <= vlo <= vhi:
            raise UsageError("invalid vlt_days_range {!r}".format(self.vlt_days_range))
        if not self.nrt_days_choices or min(self.nrt_days_choices) < 1:
            raise UsageError("nrt_days_choices must be >= 1")


def sku_stream(seed, index):
    """Counter-based random stream of SKU ``index`` under ``seed``."""
    seq = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(seq))


def promo_multipliers(config):
    mult = np.ones(config.horizon_days)
    for start, duration, factor in config.promo_calendar:
        mult[start : start + duration] *= factor
    return mult


def mean_demand_curve(base, phase, config):
    t = np.arange(config.horizon_days)
    season = 1.0 + config.season_amplitude * np.sin(
        2.0 * np.pi * t / config.season_period_days + phase
    )
    return base * season * promo_multipliers(config)


def draw_demand(rng, means, cv):
    """Overdispersed integer demand with the given means and coefficient of variation.

    Negative binomial where the target variance exceeds the mean, Poisson
    otherwise.
    """
    means = np.asarray(means, dtype=float)
    var = (cv * means) ** 2
    units = np.zeros(means.shape, dtype=np.int64)
    nb = (means > 0) & (var > means)
    po = (means > 0) & ~nb
    if nb.any():
        m = means[nb]
        r = m * m / (var[nb] - m)
        units[nb] = rng.negative_binomial(r, r / (r + m))
    if po.any():
        units[po] = rng.poisson(means[po])
    return units


def _make_sku(i, rng, config):
    vol_name, cv = config.volatility_classes[i % len(config.volatility_classes)]
    val_name, tier = config.value_classes[
        (i // len(config.volatility_classes)) % len(config.value_classes)
    ]
    price = max(to_cents(tier * rng.uniform(0.8, 1.2)), 2)
    cost = min(max(to_cents(price * config.cost_ratio / 100.0), 1), price)
    vlo, vhi = config.vlt_days_range
    sku = SkuRecord(
        sku_id="SKU{:05d}".format(i),
        category_id=val_name + vol_name,
        unit_cost=cost,
        unit_price=price,
        vlt_days=int(rng.integers(vlo, vhi + 1)),
        nrt_days=int(rng.choice(config.nrt_days_choices)),
        volatility_class=vol_name,
        value_class=val_name,
    )
    return sku, cv


def generate_panel(config: ScenarioConfig) -> DemandPanel:
    """Generate a reproducible synthetic panel for ``config``."""
    config.validate()
    lo, hi = config.base_demand_range
    skus = []
    rows = []
    for i in range(config.n_skus):
        rng = sku_stream(config.seed, i)
        sku, cv = _make_sku(i, rng, config)
        base = rng.uniform(lo, hi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        rows.append(draw_demand(rng, mean_demand_curve(base, phase, config), cv))
        skus.append(sku)
    log("generated panel", config.n_skus, "skus x", config.horizon_days, "days")
    return DemandPanel(skus, np.vstack(rows))


# -------------------------------------------------------------------------
# csv files
# -------------------------------------------------------------------------


def save_panel(panel: DemandPanel, path) -> None:
    """Write ``skus.csv`` and ``demand.csv`` into directory ``path``."""
    path = str(path)
    skus = pd.DataFrame(
        [
            [
                sku.sku_id,
                sku.category_id,
                format_cents(sku.unit_cost),
                format_cents(sku.unit_price),
                sku.vlt_days,
                sku.nrt_days,
                sku.volatility_class,
                sku.value_class,
            ]
            for sku in panel.skus
        ],
        columns=SKU_COLUMNS,
    )
    n, horizon = panel.demand.shape
    demand = pd.DataFrame(
        {
            "sku_id": np.repeat([sku.sku_id for sku in panel.skus], horizon),
            "day_index": np.tile(np.arange(horizon), n),
            "units": panel.demand.reshape(-1),
        },
        columns=DEMAND_COLUMNS,
    )
    try:
        os.makedirs(path, exist_ok=True)
        skus.to_csv(os.path.join(path, "skus.csv"), index=False, lineterminator="\n")
        demand.to_csv(os.path.join(path, "demand.csv"), index=False, lineterminator="\n")
    except OSError as e:
        raise WriteError("cannot write panel to {}: {}".format(path, e)) from e


def _read_table(filename, columns):
    if not os.path.exists(filename):
        raise ParseError(filename, 0, "file not found")
    try:
        df = pd.read_csv(filename, dtype=str, keep_default_na=False, encoding="utf-8")
    except (ValueError, pd.errors.ParserError) as e:
        raise ParseError(filename, 0, str(e)) from e
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ParseError(filename, 1, "missing column(s): {}".format(", ".join(missing)))
    return df


def _int_column(df, column, filename):
    values = pd.to_numeric(df[column], errors="coerce")
    bad = values.isna() | (values != values.round())
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(
            filename, row + 2, "{} is not an integer: {!r}".format(column, df[column].iloc[row])
        )
    return values.astype(np.int64).to_numpy()


def _parse_skus(filename) -> List[SkuRecord]:
    df = _read_table(filename, SKU_COLUMNS)
    vlt = _int_column(df, "vlt_days", filename)
    nrt = _int_column(df, "nrt_days", filename)
    skus = []
    for row, rec in enumerate(df.itertuples(index=False)):
        lineno = row + 2
        try:
            cost = parse_cents(rec.unit_cost)
            price = parse_cents(rec.unit_price)
        except (InvalidOperation, ValueError) as e:
            raise ParseError(filename, lineno, "bad currency value: {}".format(e)) from e
        try:
            sku = SkuRecord(
                sku_id=rec.sku_id,
                category_id=rec.category_id,
                unit_cost=cost,
                unit_price=price,
                vlt_days=int(vlt[row]),
                nrt_days=int(nrt[row]),
                volatility_class=rec.volatility_class,
                value_class=rec.value_class,
            )
        except DomainError as e:
            raise ParseError(filename, lineno, str(e)) from e
        skus.append(sku)
    seen = set()
    for row, sku in enumerate(skus):
        if sku.sku_id in seen:
            raise ParseError(filename, row + 2, "duplicate sku_id {!r}".format(sku.sku_id))
        seen.add(sku.sku_id)
    return skus


def load_panel(path) -> DemandPanel:
    """Read the panel stored by :func:`save_panel` in directory ``path``.

    Missing (sku, day) rows read as zero demand and raise a PanelWarning.
    """
    path = str(path)
    skus = _parse_skus(os.path.join(path, "skus.csv"))
    filename = os.path.join(path, "demand.csv")
    df = _read_table(filename, DEMAND_COLUMNS)
    days = _int_column(df, "day_index", filename)
    units = _int_column(df, "units", filename)
    negative = np.flatnonzero(units < 0)
    if negative.size:
        row = int(negative[0])
        raise ParseError(filename, row + 2, "negative demand {}".format(units[row]))
    if (days < 0).any():
        row = int(np.flatnonzero(days < 0)[0])
        raise ParseError(filename, row + 2, "negative day_index {}".format(days[row]))
    dupes = np.flatnonzero(df.duplicated(["sku_id", "day_index"]).to_numpy())
    if dupes.size:
        row = int(dupes[0])
        raise ParseError(
            filename,
            row + 2,
            "duplicate row for sku {!r} day {}".format(df["sku_id"].iloc[row], days[row]),
        )
    index = {sku.sku_id: i for i, sku in enumerate(skus)}
    rows = np.empty(len(df), dtype=np.int64)
    for row, sku_id in enumerate(df["sku_id"]):
        try:
            rows[row] = index[sku_id]
        except KeyError:
            raise ParseError(filename, row + 2, "unknown sku_id {!r}".format(sku_id)) from None
    horizon = int(days.max()) + 1 if len(days) else 0
    if horizon < 1:
        raise ParseError(filename, 1, "no demand rows")
    demand = np.zeros((len(skus), horizon), dtype=np.int64)
    demand[rows, days] = units
    present = np.zeros(demand.shape, dtype=bool)
    present[rows, days] = True
    gaps = int((~present).sum())
    if gaps:
        sku_row, day = (int(x) for x in np.argwhere(~present)[0])
        msg = "{}: {} (sku, day) row(s) missing, read as zero demand (first: {} day {})".format(
            filename, gaps, skus[sku_row].sku_id, day
        )
        log(msg)
        warnings.warn(PanelWarning(msg), stacklevel=2)
    log("loaded panel", len(skus), "skus x", horizon, "days from", path)
    return DemandPanel(skus, demand)
