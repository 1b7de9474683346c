"""
Predict-then-optimize and empirical-quantile base stock policies.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, special

from replenlab.errors import DomainError
from replenlab.sim_core import review_days, round_half_up

# Acklam's rational approximation of the normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _poly(coeffs, x):
    out = 0.0
    for c in coeffs:
        out = out * x + c
    return out


def normal_quantile(p):
    """Inverse standard normal CDF, refined by a Newton step on ``ndtr``."""
    if not 0.0 < p < 1.0:
        raise DomainError("probability must lie in (0, 1), got {}".format(p))
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = _poly(_C, q) / (_poly(_D, q) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = _poly(_A, r) * q / (_poly(_B, r) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -_poly(_C, q) / (_poly(_D, q) * q + 1.0)
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if pdf > 0:
        x -= (special.ndtr(x) - p) / pdf
    return float(x)


def gamma_cdf(shape, scale, x):
    """Regularized lower incomplete gamma P(shape, x / scale)."""
    if shape <= 0 or scale <= 0:
        raise DomainError("gamma shape and scale must be > 0")
    if x <= 0:
        return 0.0
    t = x / scale
    log_front = shape * math.log(t) - t - special.gammaln(shape)
    if t < shape + 1.0:
        # series
        term = total = 1.0 / shape
        a = shape
        for _ in range(10000):
            a += 1.0
            term *= t / a
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return min(1.0, total * math.exp(log_front))
    # continued fraction for the upper tail (modified Lentz)
    tiny = 1e-300
    b = t + 1.0 - shape
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - shape)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return max(0.0, 1.0 - math.exp(log_front) * h)


def gamma_quantile(shape, scale, p):
    """Inverse of :func:`gamma_cdf` by bracketed root finding."""
    if shape <= 0 or scale <= 0:
        raise DomainError("gamma shape and scale must be > 0")
    if not 0.0 < p < 1.0:
        raise DomainError("probability must lie in (0, 1), got {}".format(p))
    mean = shape * scale
    hi = mean + 10.0 * math.sqrt(shape) * scale + scale
    while gamma_cdf(shape, scale, hi) < p:
        hi *= 2.0
    return float(
        optimize.brentq(
            lambda x: gamma_cdf(shape, scale, x) - p, 0.0, hi, xtol=1e-14, rtol=1e-12, maxiter=500
        )
    )


@dataclass(frozen=True)
class PtoInputs:
    mu_d: float
    sigma_d: float
    review_days: int
    lead_days: int
    stockout_cost: float
    holding_cost: float
    gamma_shape: Optional[float] = None
    gamma_scale: Optional[float] = None

    def __post_init__(self):
        if self.mu_d < 0 or self.sigma_d < 0:
            raise DomainError("demand mean and deviation must be >= 0")
        if self.review_days < 1 or self.lead_days < 0:
            raise DomainError("review_days must be >= 1 and lead_days >= 0")
        if not (self.stockout_cost > 0 and self.holding_cost > 0):
            raise DomainError("stockout and holding cost must be > 0")
        for value in (self.gamma_shape, self.gamma_scale):
            if value is not None and not value > 0:
                raise DomainError("gamma shape and scale must be > 0")

    @property
    def risk_days(self):
        return self.review_days + self.lead_days

    @property
    def critical_ratio(self):
        return self.stockout_cost / (self.stockout_cost + self.holding_cost)


@dataclass(frozen=True)
class BaseStockPolicy:
    base_stock_level: float
    method: str


def pto_normal(inp: PtoInputs) -> BaseStockPolicy:
    level = inp.mu_d * inp.risk_days
    if inp.sigma_d > 0:
        level += normal_quantile(inp.critical_ratio) * inp.sigma_d * math.sqrt(inp.risk_days)
    return BaseStockPolicy(max(0.0, level), "PTO_normal")


def pto_gamma(inp: PtoInputs) -> BaseStockPolicy:
    if inp.gamma_shape is None or inp.gamma_scale is None or inp.sigma_d == 0:
        # degenerate moments: deterministic demand over the risk period
        return BaseStockPolicy(max(0.0, inp.mu_d * inp.risk_days), "PTO_gamma")
    level = gamma_quantile(inp.risk_days * inp.gamma_shape, inp.gamma_scale, inp.critical_ratio)
    return BaseStockPolicy(max(0.0, level), "PTO_gamma")


def quantile_policy(window, x, risk_days) -> float:
    window = np.asarray(window, dtype=float)
    if window.size == 0:
        raise DomainError("empty demand window")
    if not 0 < x < 100:
        raise DomainError("percentile must lie in (0, 100)")
    return float(np.percentile(window, x)) * risk_days


def base_stock_to_order(S, inventory_position) -> int:
    return max(0, round_half_up(S - inventory_position))


def estimate_inputs(window, sku, holding_rate=1.0) -> PtoInputs:
    """Moment estimates from a trailing demand window.

    Stockout cost is the unit price, holding cost ``holding_rate`` times the
    unit cost.
    """
    window = np.asarray(window, dtype=float)
    if window.size == 0:
        raise DomainError("empty demand window")
    mu = float(window.mean())
    sigma = float(window.std(ddof=1)) if window.size > 1 else 0.0
    shape = scale = None
    if mu > 0 and sigma > 0:
        shape = mu * mu / (sigma * sigma)
        scale = sigma * sigma / mu
    return PtoInputs(
        mu_d=mu,
        sigma_d=sigma,
        review_days=sku.nrt_days,
        lead_days=max(sku.vlt_days, 1),
        stockout_cost=sku.unit_price / 100.0,
        holding_cost=holding_rate * sku.unit_cost / 100.0,
        gamma_shape=shape,
        gamma_scale=scale,
    )


def base_stock_levels(demand, start, horizon, sku, method, window=28, percentile=None,
                      order_offset=0, holding_rate=1.0):
    """Order-up-to level for every review day of ``demand[start:start+horizon]``.

    Each level uses only the ``window`` days of demand before its review day.
    ``method`` is ``"PTO_normal"``, ``"PTO_gamma"`` or ``"BM"`` (with
    ``percentile``).
    """
    demand = np.asarray(demand)
    levels = []
    for t in review_days(horizon, sku.nrt_days, order_offset):
        day = start + t
        recent = demand[max(0, day - window) : day]
        if recent.size == 0:
            recent = np.zeros(1)
        if method == "PTO_normal":
            levels.append(pto_normal(estimate_inputs(recent, sku, holding_rate)).base_stock_level)
        elif method == "PTO_gamma":
            levels.append(pto_gamma(estimate_inputs(recent, sku, holding_rate)).base_stock_level)
        elif method == "BM":
            risk = sku.nrt_days + max(sku.vlt_days, 1)
            levels.append(quantile_policy(recent, percentile, risk))
        else:
            raise DomainError("unknown base stock method {!r}".format(method))
    return levels
