"""
RLOO fine-tuning of a pretrained policy against reference decisions.

Per prompt ``k`` actions are sampled from the current policy.  Each gets the
hybrid reward ``omega * rule + (1 - omega) * sim``, is penalized by
``beta * (log pi - log pi_ref)`` and is compared with the mean of its
``k - 1`` peers.  Parameters ascend the surrogate
``sum_j (R_j - b_j) * log pi(y_j | x) / (B * k)``.

The rule reward is a sign-aware focal loss on the distance to the reference
action ``a_star``; the sign test compares both actions as adjustments from
an incumbent decision ``a_base``.  The simulation reward is a Pareto
dominance indicator on (average inventory, lost-sales value) of an
``H``-day rollout against the reference action.
"""
import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional

import numpy as np
from scipy.special import log_softmax, softmax

from replenlab.errors import DomainError, NumericError, RewardWarning
from replenlab.plugin import log as _rootlog
from replenlab.policy_net import FeatureBatch, RMSProp, _forward, backward, greedy_actions
from replenlab.sim_core import SimConfig, Simulator, review_days

log = _rootlog.rloo

REWARD_LEVELS = ("sample", "batch")
BASE_KINDS = ("pretrained_greedy", "prior_epoch")
REFERENCE_KINDS = ("OR_labels", "expert_labels")
PARETO_EPS = 1e-9


@dataclass(frozen=True)
class RewardConfig:
    omega: float = 0.5
    focal_gamma: float = 1.0
    sign_alpha: float = 2.0
    kl_beta: float = 0.05
    sim_horizon_days: int = 14
    k_samples: int = 4
    temperature: float = 1.0
    reward_level: str = "sample"
    base_kind: str = "pretrained_greedy"

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise DomainError("omega must lie in [0, 1]")
        if self.focal_gamma < 0:
            raise DomainError("focal_gamma must be >= 0")
        if not self.sign_alpha > 1:
            raise DomainError("sign_alpha must be > 1")
        if self.kl_beta < 0:
            raise DomainError("kl_beta must be >= 0")
        if self.sim_horizon_days < 1:
            raise DomainError("sim_horizon_days must be >= 1")
        if self.k_samples < 2:
            raise DomainError("k_samples must be >= 2")
        if not self.temperature > 0:
            raise DomainError("temperature must be > 0")
        if self.reward_level not in REWARD_LEVELS:
            raise DomainError("reward_level must be one of {}".format(REWARD_LEVELS))
        if self.base_kind not in BASE_KINDS:
            raise DomainError("base_kind must be one of {}".format(BASE_KINDS))


# -------------------------------------------------------------------------
# rewards
# -------------------------------------------------------------------------


def _sign(x):
    return (x > 0) - (x < 0)


def rule_reward(y, a_star, a_base, cfg: RewardConfig) -> float:
    """Negative sign-aware focal loss of ``y`` against ``a_star``.

    Adjustments in the wrong direction relative to ``a_base`` are weighted
    by ``sign_alpha``; a zero adjustment matches either direction.
    """
    dy, dstar = _sign(y - a_base), _sign(a_star - a_base)
    w = 1.0 if dy == 0 or dstar == 0 or dy == dstar else cfg.sign_alpha
    we = w * float(y - a_star) ** 2
    return -((1.0 - math.exp(-we)) ** cfg.focal_gamma) * we


def _less(a, b):
    return a < b - PARETO_EPS * max(abs(a), abs(b))


def _leq(a, b):
    return a <= b + PARETO_EPS * max(abs(a), abs(b))


def _dominates(p, q):
    return all(_leq(a, b) for a, b in zip(p, q)) and any(_less(a, b) for a, b in zip(p, q))


def sim_reward(trace, sku, y, a_star, cfg: RewardConfig, sim=None, history=None,
               initial_inventory=0, demand_avg_window=14):
    """+1 if ``y`` Pareto-dominates ``a_star`` on (turnover, lost sales), -1 if dominated.

    Both decisions are rolled forward ``sim_horizon_days`` from the decision
    day with ``initial_inventory`` on hand, reviewing with the same decision
    throughout.  Returns None when the trace is shorter than the horizon.
    """
    H = cfg.sim_horizon_days
    trace = np.asarray(trace)
    if len(trace) < H:
        return None
    sim = sim or Simulator()
    sim_cfg = SimConfig(
        horizon_days=H,
        initial_inventory=int(initial_inventory),
        demand_avg_window=demand_avg_window,
    )
    n = len(review_days(H, sku.nrt_days))
    points = []
    for v in (y, a_star):
        out = sim.simulate_policy(trace[:H], sku, [v] * n, sim_cfg, history=history)
        points.append((out.avg_inventory_units, float(out.lost_sales_cents)))
    if _dominates(points[0], points[1]):
        return 1
    if _dominates(points[1], points[0]):
        return -1
    return 0


def hybrid_reward(rule, sim, cfg: RewardConfig) -> float:
    if sim is None:
        return cfg.omega * rule
    return cfg.omega * rule + (1.0 - cfg.omega) * sim


def kl_adjusted_return(r_total, logp_theta, logp_ref, beta) -> float:
    if not (math.isfinite(logp_theta) and math.isfinite(logp_ref)):
        raise NumericError("non-finite log-probability", sample=(logp_theta, logp_ref))
    return r_total - beta * (logp_theta - logp_ref)


def leave_one_out(returns):
    """Peer-mean baselines and advantages of a ``[prompts x k]`` return matrix."""
    returns = np.asarray(returns, dtype=float)
    k = returns.shape[-1]
    baselines = (returns.sum(axis=-1, keepdims=True) - returns) / (k - 1)
    return baselines, returns - baselines


def exact_kl(logits, ref_logits):
    """Mean categorical KL(pi || pi_ref) over prompts."""
    lp = log_softmax(np.atleast_2d(logits), axis=1)
    lq = log_softmax(np.atleast_2d(ref_logits), axis=1)
    return float(np.mean(np.sum(np.exp(lp) * (lp - lq), axis=1)))


# -------------------------------------------------------------------------
# references and prompts
# -------------------------------------------------------------------------


class ReferenceSource:
    """Reference actions ``a_star`` keyed by (sku_id, epoch_start_day).

    ``prior_decision`` holds the incumbent actions ``a_base``.
    """

    def __init__(self, kind, labels, prior_decision=None):
        if kind not in REFERENCE_KINDS:
            raise DomainError("reference kind must be one of {}".format(REFERENCE_KINDS))
        self.kind = kind
        self.labels = dict(labels)
        self.prior_decision = dict(prior_decision or {})

    @classmethod
    def from_labels(cls, labelset, panel, grouping=None, kind="OR_labels"):
        grouping = grouping if grouping is not None else panel.categories()
        labels = {}
        for row in labelset:
            for sku in panel.skus:
                key = grouping.get(sku.sku_id)
                if key == row.category_id or sku.sku_id == row.category_id:
                    labels[(sku.sku_id, row.epoch_start_day)] = row.v_days
        return cls(kind, labels)

    @classmethod
    def from_expert(cls, rows, panel, grouping=None):
        """Expert decisions in the label row layout."""
        from replenlab.or_select import LabelSet

        return cls.from_labels(LabelSet(rows), panel, grouping, kind="expert_labels")

    def epochs(self, sku_id):
        return sorted(day for s, day in self.labels if s == sku_id)

    def resolve(self, sku_id, day):
        starts = [d for d in self.epochs(sku_id) if d <= day]
        if not starts:
            raise KeyError((sku_id, day))
        return self.labels[(sku_id, starts[-1])]

    def previous(self, sku_id, day):
        """Reference of the epoch before the one covering ``day``, or None."""
        starts = [d for d in self.epochs(sku_id) if d <= day]
        if len(starts) < 2:
            return None
        return self.labels[(sku_id, starts[-2])]

    def base(self, sku_id, day):
        return self.prior_decision[(sku_id, day)]


class Prompt(NamedTuple):
    features: object  # FeatureVector
    a_star: int
    a_base: int
    sku: object
    trace: np.ndarray  # demand from the decision day on
    history: np.ndarray  # demand before the decision day
    initial_inventory: int
    day: int = 0


def make_prompts(panel, days, reference, ref_policy, grid, feature_fn, cfg: RewardConfig,
                 inventory_fn=None):
    """Prompts for every (sku, day) in ``days``.

    ``feature_fn(sku_index, day)`` builds the features; ``inventory_fn``
    returns the on-hand units at the decision day (0 when omitted).
    """
    vectors, keys = [], []
    for i, sku in enumerate(panel.skus):
        for day in days:
            vectors.append(feature_fn(i, day))
            keys.append((i, day))
    if not vectors:
        raise DomainError("no prompts to build")
    greedy = greedy_actions(ref_policy, FeatureBatch.stack(vectors))
    prompts = []
    for (i, day), vec, g in zip(keys, vectors, greedy):
        sku = panel.skus[i]
        a_star = grid.clip(reference.resolve(sku.sku_id, day))
        if (sku.sku_id, day) in reference.prior_decision:
            a_base = reference.base(sku.sku_id, day)
        elif cfg.base_kind == "prior_epoch":
            prev = reference.previous(sku.sku_id, day)
            a_base = int(g) if prev is None else prev
        else:
            a_base = int(g)
        prompts.append(
            Prompt(
                vec,
                int(a_star),
                int(a_base),
                sku,
                panel.demand[i, day:],
                panel.demand[i, :day],
                0 if inventory_fn is None else int(inventory_fn(i, day)),
                day,
            )
        )
    return prompts


# -------------------------------------------------------------------------
# the RLOO step
# -------------------------------------------------------------------------


class SampleRecord(NamedTuple):
    prompt: int
    action: int
    rule: Optional[float]
    sim: Optional[float]
    total_return: float
    baseline: float


class RlooBatchStats(NamedTuple):
    mean_reward: float
    mean_rule_reward: float
    mean_sim_reward: float
    mean_kl: float
    mean_advantage: float
    grad_norm: float
    samples: List[SampleRecord]


class RewardChain:
    """Rule/simulation/hybrid reward evaluation with call counters."""

    def __init__(self, cfg: RewardConfig, sim=None, demand_avg_window=14):
        self.cfg = cfg
        self.sim = sim or Simulator()
        self.demand_avg_window = demand_avg_window
        self.rule_calls = 0
        self.skipped = 0

    def __call__(self, prompt: Prompt, y):
        cfg = self.cfg
        rule = sim = None
        if cfg.omega > 0:
            self.rule_calls += 1
            rule = rule_reward(y, prompt.a_star, prompt.a_base, cfg)
        if cfg.omega < 1:
            sim = sim_reward(
                prompt.trace,
                prompt.sku,
                y,
                prompt.a_star,
                cfg,
                self.sim,
                history=prompt.history,
                initial_inventory=prompt.initial_inventory,
                demand_avg_window=self.demand_avg_window,
            )
            if sim is None:
                self.skipped += 1
                msg = "sku {} day {}: fewer than {} days left, rule reward only".format(
                    prompt.sku.sku_id, prompt.day, cfg.sim_horizon_days
                )
                log(msg)
                warnings.warn(RewardWarning(msg), stacklevel=3)
        if rule is None:
            total = (1.0 - cfg.omega) * (sim or 0)
        else:
            total = hybrid_reward(rule, sim, cfg)
        return rule, sim, total


def surrogate(logits, indices, advantages):
    """``sum_j A_j log pi(y_j) / (B k)`` and its gradient with respect to the logits."""
    logits = np.atleast_2d(logits)
    B, k = advantages.shape
    lp = log_softmax(logits, axis=1)
    rows = np.arange(B)[:, None]
    value = float(np.sum(advantages * lp[rows, indices]) / (B * k))
    probs = softmax(logits, axis=1)
    grad = -probs * advantages.sum(axis=1, keepdims=True)
    np.add.at(grad, (np.repeat(np.arange(B), k), indices.reshape(-1)), advantages.reshape(-1))
    return value, grad / (B * k)


def surrogate_grads(policy, features, indices, advantages):
    """Surrogate value and parameter gradients (deterministic latent)."""
    c = _forward(policy, features)
    value, dlogits = surrogate(c.logits, indices, advantages)
    return value, backward(policy, c, dlogits=dlogits)


def rloo_step(policy, ref_policy, batch: List[Prompt], cfg: RewardConfig, sim=None, rng=None,
              optimizer=None, learning_rate=0.005, chain=None):
    """One RLOO update of ``policy`` in place; returns ``(policy, stats)``."""
    if not batch:
        raise DomainError("empty prompt batch")
    rng = rng or np.random.default_rng()
    chain = chain or RewardChain(cfg, sim)
    optimizer = optimizer or RMSProp(learning_rate)
    features = FeatureBatch.stack([p.features for p in batch])
    c = _forward(policy, features)
    ref_logits = _forward(ref_policy, features).logits
    if not np.all(np.isfinite(c.logits)):
        bad = int(np.flatnonzero(~np.isfinite(c.logits).all(axis=1))[0])
        raise NumericError("non-finite logits", sample=batch[bad].sku.sku_id)
    B, k = len(batch), cfg.k_samples
    lp = log_softmax(c.logits, axis=1)
    lq = log_softmax(ref_logits, axis=1)
    probs = softmax(c.logits / cfg.temperature, axis=1)
    grid = policy.grid
    indices = np.zeros((B, k), dtype=np.int64)
    rules = np.full((B, k), np.nan)
    sims = np.full((B, k), np.nan)
    totals = np.zeros((B, k))
    for i, prompt in enumerate(batch):
        for j in range(k):
            idx = int(rng.choice(grid.size, p=probs[i]))
            indices[i, j] = idx
            rule, simr, total = chain(prompt, idx + grid.min_days)
            rules[i, j] = np.nan if rule is None else rule
            sims[i, j] = np.nan if simr is None else simr
            totals[i, j] = total
    if cfg.reward_level == "batch":
        totals = np.broadcast_to(totals.mean(axis=0, keepdims=True), totals.shape).copy()
    rows = np.arange(B)[:, None]
    log_ratio = lp[rows, indices] - lq[rows, indices]
    returns = totals - cfg.kl_beta * log_ratio
    if not np.all(np.isfinite(returns)):
        i, j = np.argwhere(~np.isfinite(returns))[0]
        raise NumericError(
            "non-finite return", sample=(batch[i].sku.sku_id, batch[i].day, int(indices[i, j]))
        )
    baselines, advantages = leave_one_out(returns)
    _, dlogits = surrogate(c.logits, indices, advantages)
    grads = backward(policy, c, dlogits=dlogits)
    grad_norm = math.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    if not math.isfinite(grad_norm):
        raise NumericError("non-finite gradient", sample=[p.sku.sku_id for p in batch])
    # ascend the surrogate: the optimizer minimizes, so feed the negation
    optimizer.step(policy.params, {n: -g for n, g in grads.items()}, list(grads))
    samples = [
        SampleRecord(
            i,
            int(indices[i, j]) + grid.min_days,
            None if np.isnan(rules[i, j]) else float(rules[i, j]),
            None if np.isnan(sims[i, j]) else float(sims[i, j]),
            float(returns[i, j]),
            float(baselines[i, j]),
        )
        for i in range(B)
        for j in range(k)
    ]
    stats = RlooBatchStats(
        mean_reward=float(totals.mean()),
        mean_rule_reward=float(np.nanmean(rules)) if np.isfinite(rules).any() else 0.0,
        mean_sim_reward=float(np.nanmean(sims)) if np.isfinite(sims).any() else 0.0,
        mean_kl=exact_kl(c.logits, ref_logits),
        mean_advantage=float(advantages.mean()),
        grad_norm=grad_norm,
        samples=samples,
    )
    return policy, stats


@dataclass(frozen=True)
class FinetuneConfig:
    n_steps: int = 200
    batch_size: int = 32
    learning_rate: float = 0.005
    eval_every: int = 25
    seed: int = 0


def finetune(policy, ref_policy, dataset: List[Prompt], cfg: RewardConfig, sim=None, n_steps=None,
             settings: FinetuneConfig = FinetuneConfig(), validate: Callable = None,
             log_sink=None):
    """Repeat :func:`rloo_step` over shuffled prompt batches.

    ``validate(policy)`` returns a cost; with it, the lowest-cost checkpoint
    (the starting policy included) is returned.  Returns ``(policy, log)``.
    """
    if not dataset:
        raise DomainError("empty fine-tuning dataset")
    n_steps = settings.n_steps if n_steps is None else n_steps
    if n_steps == 0:
        return policy, []
    policy = policy.copy()
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(settings.seed)))
    chain = RewardChain(cfg, sim)
    optimizer = RMSProp(settings.learning_rate)
    records = []
    best, best_cost = None, math.inf
    if validate is not None:
        best, best_cost = policy.copy(), validate(policy)
    order = rng.permutation(len(dataset))
    pos = 0
    for step in range(1, n_steps + 1):
        if pos + settings.batch_size > len(order):
            order = rng.permutation(len(dataset))
            pos = 0
        batch = [dataset[i] for i in order[pos : pos + settings.batch_size]]
        pos += settings.batch_size
        policy, stats = rloo_step(
            policy, ref_policy, batch, cfg, rng=rng, optimizer=optimizer, chain=chain
        )
        record = {
            "step": step,
            "mean_reward": stats.mean_reward,
            "mean_rule_reward": stats.mean_rule_reward,
            "mean_sim_reward": stats.mean_sim_reward,
            "exact_kl": stats.mean_kl,
            "grad_norm": stats.grad_norm,
        }
        if validate is not None and (step % settings.eval_every == 0 or step == n_steps):
            cost = validate(policy)
            record["validation_cost"] = cost
            if cost < best_cost:
                best, best_cost = policy.copy(), cost
        records.append(record)
        if log_sink is not None:
            log_sink(record)
    log("finetuned", n_steps, "steps; simulator calls:", chain.sim.calls)
    return (best if best is not None else policy), records


def greedy_agreement(policy, prompts: List[Prompt]) -> float:
    features = FeatureBatch.stack([p.features for p in prompts])
    greedy = greedy_actions(policy, features)
    return float(np.mean(greedy == np.array([p.a_star for p in prompts])))
