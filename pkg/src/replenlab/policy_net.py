"""
Compact stochastic replenishment policy.

Three feature streams (sales history, SKU attributes, decision objective)
are encoded by small tanh networks and mixed by a softmax gate.  The mixed
embedding feeds a demand forecast head and a variational decision head: a
Gaussian latent ``z = mu + sigma * noise`` is projected to raw logits over
the inventory-days grid.

Training follows three stages:

``S1_forecast``
    encoders, gate and forecast head on the squared forecast error.
``S2_decision_frozen``
    decision head only, on cross-entropy plus ``kl_weight`` times the KL of
    the latent to a standard normal.
``S3_joint``
    all parameters on the decision loss; the forecast loss is logged only.

All arithmetic is float64 numpy with hand-written gradients.
"""
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import expit, log_softmax, logsumexp, softmax

from replenlab.errors import (
    DataError,
    DomainError,
    ModelFormatError,
    NumericError,
    ShapeError,
    TrainingDiverged,
    WriteError,
)
from replenlab.plugin import log as _rootlog
from replenlab.sim_core import CandidateGrid

log = _rootlog.train

MODEL_FORMAT = "replenlab-policy"
MODEL_VERSION = 1

STREAMS = ("sales", "attrs", "objective")
STAGES = ("S1_forecast", "S2_decision_frozen", "S3_joint")

SALES_WINDOWS = (7, 14, 28)
VALUE_CLASSES = ("A", "B", "C")
VOLATILITY_CLASSES = ("X", "Y", "Z")
SALES_WIDTH = 2 * len(SALES_WINDOWS) + 6
ATTRS_WIDTH = len(VALUE_CLASSES) + len(VOLATILITY_CLASSES) + 5
OBJECTIVE_WIDTH = 3
#: sales features that scale linearly with demand
SALES_SCALE_FEATURES = tuple(range(2 * len(SALES_WINDOWS) + 4))


# -------------------------------------------------------------------------
# features
# -------------------------------------------------------------------------


class FeatureVector(NamedTuple):
    sales: np.ndarray
    attrs: np.ndarray
    objective: np.ndarray


class FeatureBatch(NamedTuple):
    sales: np.ndarray
    attrs: np.ndarray
    objective: np.ndarray

    @classmethod
    def stack(cls, vectors: Sequence[FeatureVector]):
        if not vectors:
            raise DataError("cannot stack an empty feature list")
        return cls(*(np.vstack([getattr(v, s) for v in vectors]) for s in STREAMS))

    @classmethod
    def of(cls, features):
        if isinstance(features, FeatureBatch):
            return features
        if isinstance(features, FeatureVector):
            return cls(*(np.atleast_2d(np.asarray(x, dtype=float)) for x in features))
        return cls.stack(list(features))

    def __len__(self):
        return self.sales.shape[0]

    def take(self, idx):
        return FeatureBatch(*(x[idx] for x in self))


@dataclass(frozen=True)
class FeatureTargets:
    turnover_target_days: float = 10.0
    lookback_days: int = 28


def _window(row, day, width):
    padded = np.zeros(width)
    start = max(0, day - width)
    seg = np.asarray(row[start:day], dtype=float)
    if seg.size:
        padded[width - seg.size :] = seg
    return padded


def _sales_stream(row, day, lookback):
    width = max(lookback, max(SALES_WINDOWS))
    window = _window(row, day, width)
    feats = []
    for w in SALES_WINDOWS:
        tail = window[-w:]
        feats.append(tail.mean())
        feats.append(tail.std())
    weights = 0.9 ** np.arange(width)[::-1]
    feats.append(float(weights @ window / weights.sum()))
    feats.append(window[-7])  # same weekday last week
    feats.append(window[-1])
    feats.append(window[-7:].max())
    feats.append(float((window[-lookback:] == 0).mean()))
    feats.append(1.0 if day < width else 0.0)
    return np.asarray(feats, dtype=float)


def build_features(panel, sku_index, day, grid: CandidateGrid, targets: FeatureTargets):
    """Features of SKU ``sku_index`` for a decision at the start of ``day``.

    Only demand before ``day`` is used.  Windows reaching before the first
    day are zero padded and the last sales feature flags the padding.
    """
    if not 0 <= day <= panel.horizon_days:
        raise DomainError("day {} outside panel horizon".format(day))
    sku = panel.skus[sku_index]
    row = panel.demand[sku_index]
    lookback = targets.lookback_days
    sales = _sales_stream(row, day, lookback)

    members = [i for i, s in enumerate(panel.skus) if s.category_id == sku.category_id]
    start = max(0, day - lookback)
    cat_demand = panel.demand[members, start:day]
    prices = np.array([panel.skus[i].unit_price for i in members], dtype=float)
    if day > start:
        cat_revenue = float((cat_demand.sum(axis=1) * prices).sum())
        own_revenue = float(row[start:day].sum()) * sku.unit_price
        traffic = float(cat_demand.sum(axis=0).mean())
    else:
        cat_revenue = own_revenue = traffic = 0.0
    attrs = np.concatenate(
        [
            [1.0 if sku.value_class == c else 0.0 for c in VALUE_CLASSES],
            [1.0 if sku.volatility_class == c else 0.0 for c in VOLATILITY_CLASSES],
            [
                math.log(sku.unit_price / 100.0),
                sku.unit_cost / sku.unit_price,
                sku.vlt_days / 30.0,
                sku.nrt_days / 30.0,
                math.log1p(traffic),
            ],
        ]
    )
    span = max(grid.max_days - grid.min_days, 1)
    objective = np.array(
        [
            own_revenue / cat_revenue if cat_revenue > 0 else 0.0,
            targets.turnover_target_days / 30.0,
            (targets.turnover_target_days - grid.min_days) / span,
        ]
    )
    return FeatureVector(sales, attrs, objective)


# -------------------------------------------------------------------------
# the network
# -------------------------------------------------------------------------


@dataclass(frozen=True)
class NetConfig:
    min_days: int = 3
    max_days: int = 30
    hidden: int = 32
    embed: int = 16
    latent: int = 16
    forecast_hidden: int = 16
    widths: Dict[str, int] = field(
        default_factory=lambda: {
            "sales": SALES_WIDTH,
            "attrs": ATTRS_WIDTH,
            "objective": OBJECTIVE_WIDTH,
        }
    )
    seed: int = 0

    @property
    def grid(self):
        return CandidateGrid(self.min_days, self.max_days)

    @property
    def n_actions(self):
        return self.max_days - self.min_days + 1


GROUPS = {
    "encoder": tuple(
        "{}_{}".format(p, s) for s in STREAMS for p in ("W1", "b1", "W2", "b2")
    )
    + ("gate",),
    "forecast": ("Wf1", "bf1", "wf2", "bf2"),
    "decision": ("Wmu", "bmu", "Wls", "bls", "W", "b"),
}
STAGE_GROUPS = {
    "S1_forecast": ("encoder", "forecast"),
    "S2_decision_frozen": ("decision",),
    "S3_joint": ("encoder", "forecast", "decision"),
}


def init_params(cfg: NetConfig):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))

    def dense(n_out, n_in):
        return rng.normal(0.0, 1.0 / math.sqrt(n_in), size=(n_out, n_in))

    p = {}
    for s in STREAMS:
        p["W1_" + s] = dense(cfg.hidden, cfg.widths[s])
        p["b1_" + s] = np.zeros(cfg.hidden)
        p["W2_" + s] = dense(cfg.embed, cfg.hidden)
        p["b2_" + s] = np.zeros(cfg.embed)
    p["gate"] = np.zeros(len(STREAMS))
    p["Wf1"] = dense(cfg.forecast_hidden, cfg.embed)
    p["bf1"] = np.zeros(cfg.forecast_hidden)
    p["wf2"] = rng.normal(0.0, 1.0 / math.sqrt(cfg.forecast_hidden), size=cfg.forecast_hidden)
    p["bf2"] = np.zeros(1)
    p["Wmu"] = dense(cfg.latent, cfg.embed)
    p["bmu"] = np.zeros(cfg.latent)
    p["Wls"] = dense(cfg.latent, cfg.embed) * 0.1
    p["bls"] = np.zeros(cfg.latent)
    p["W"] = dense(cfg.n_actions, cfg.latent)
    p["b"] = np.zeros(cfg.n_actions)
    return p


class PolicyNet:
    """Parameters, standardization statistics and demand scale of a policy."""

    def __init__(self, config: NetConfig = None, params=None, stats=None, demand_scale=1.0):
        self.config = config or NetConfig()
        self.params = params if params is not None else init_params(self.config)
        if stats is None:
            stats = {}
            for s in STREAMS:
                stats[s + "_mean"] = np.zeros(self.config.widths[s])
                stats[s + "_std"] = np.ones(self.config.widths[s])
        self.stats = stats
        self.demand_scale = float(demand_scale)

    @property
    def grid(self):
        return self.config.grid

    @property
    def n_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def copy(self):
        return PolicyNet(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.stats.items()},
            self.demand_scale,
        )

    def param_hash(self, names=None):
        h = hashlib.sha256()
        for name in sorted(names or self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name], dtype=np.float64).tobytes())
        return h.hexdigest()

    def group_hash(self, group):
        return self.param_hash(GROUPS[group])

    def fit_standardization(self, features: FeatureBatch, demand_targets=None):
        """Store per-feature training statistics (and the demand scale)."""
        for s, x in zip(STREAMS, features):
            std = x.std(axis=0)
            self.stats[s + "_mean"] = x.mean(axis=0)
            self.stats[s + "_std"] = np.where(std > 1e-12, std, 1.0)
        if demand_targets is not None and len(demand_targets):
            self.demand_scale = max(float(np.mean(demand_targets)), 1e-6)

    # -- container ---------------------------------------------------------

    def to_dict(self):
        cfg = asdict(self.config)
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": cfg,
            "demand_scale": self.demand_scale,
            "stats": {k: v.tolist() for k, v in sorted(self.stats.items())},
            "params": {
                k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()}
                for k, v in sorted(self.params.items())
            },
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != MODEL_FORMAT:
            raise ModelFormatError("not a policy model: format={!r}".format(data.get("format")))
        if data.get("version") != MODEL_VERSION:
            raise ModelFormatError(
                "unsupported model version {!r} (expected {})".format(
                    data.get("version"), MODEL_VERSION
                )
            )
        config = NetConfig(**data["config"])
        params = {
            k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
            for k, v in data["params"].items()
        }
        stats = {k: np.asarray(v, dtype=np.float64) for k, v in data["stats"].items()}
        return cls(config, params, stats, data["demand_scale"])

    def save(self, path):
        try:
            with open(str(path), "w", encoding="utf-8") as f:
                json.dump(self.to_dict(), f, sort_keys=True)
                f.write("\n")
        except OSError as e:
            raise WriteError("cannot write model {}: {}".format(path, e)) from e

    @classmethod
    def load(cls, path):
        try:
            with open(str(path), encoding="utf-8") as f:
                data = json.load(f)
        except ValueError as e:
            raise ModelFormatError("{}: not a JSON model container: {}".format(path, e)) from e
        return cls.from_dict(data)


# -------------------------------------------------------------------------
# forward pass
# -------------------------------------------------------------------------


class _Cache(NamedTuple):
    x: tuple
    h: tuple
    e: tuple
    gates: np.ndarray
    emb: np.ndarray
    hf: np.ndarray
    u: np.ndarray
    mu: np.ndarray
    logsig: np.ndarray
    noise: Optional[np.ndarray]
    z: np.ndarray
    logits: np.ndarray


def _standardize(net, features):
    features = FeatureBatch.of(features)
    out = []
    for s, x in zip(STREAMS, features):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != net.config.widths[s]:
            raise ShapeError(
                "{} stream has width {}, expected {}".format(
                    s, x.shape[-1] if x.ndim else 0, net.config.widths[s]
                )
            )
        out.append((x - net.stats[s + "_mean"]) / net.stats[s + "_std"])
    return tuple(out)


def _encode(net, x):
    p = net.params
    hs, es = [], []
    for s, xs in zip(STREAMS, x):
        h = np.tanh(xs @ p["W1_" + s].T + p["b1_" + s])
        hs.append(h)
        es.append(h @ p["W2_" + s].T + p["b2_" + s])
    gates = softmax(p["gate"])
    emb = sum(g * e for g, e in zip(gates, es))
    return tuple(hs), tuple(es), gates, emb


def _forward(net, features, noise=None):
    p = net.params
    x = _standardize(net, features)
    hs, es, gates, emb = _encode(net, x)
    hf = np.tanh(emb @ p["Wf1"].T + p["bf1"])
    u = hf @ p["wf2"] + p["bf2"][0]
    mu = emb @ p["Wmu"].T + p["bmu"]
    logsig = emb @ p["Wls"].T + p["bls"]
    if noise is None:
        z = mu
    else:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != mu.shape:
            raise ShapeError("noise shape {} != latent shape {}".format(noise.shape, mu.shape))
        z = mu + np.exp(logsig) * noise
    logits = z @ p["W"].T + p["b"]
    return _Cache(x, hs, es, gates, emb, hf, u, mu, logsig, noise, z, logits)


def encode(net: PolicyNet, features):
    """Gate-weighted sum of the stream embeddings."""
    _, _, _, emb = _encode(net, _standardize(net, features))
    return emb[0] if isinstance(features, FeatureVector) else emb


def stream_gates(net: PolicyNet):
    return softmax(net.params["gate"])


def forecast(net: PolicyNet, embedding):
    """Point forecast of daily demand (units), always finite and >= 0."""
    p = net.params
    emb = np.atleast_2d(np.asarray(embedding, dtype=float))
    if emb.shape[1] != net.config.embed:
        raise ShapeError("embedding width {} != {}".format(emb.shape[1], net.config.embed))
    u = np.tanh(emb @ p["Wf1"].T + p["bf1"]) @ p["wf2"] + p["bf2"][0]
    out = net.demand_scale * np.logaddexp(0.0, u)
    return float(out[0]) if np.ndim(embedding) == 1 else out


def decision_logits(net: PolicyNet, embedding, noise=None):
    """Raw logits ``W z + b`` and the latent ``z = mu + sigma * noise``.

    ``noise=None`` is the deterministic mode ``z = mu``.
    """
    p = net.params
    single = np.ndim(embedding) == 1
    emb = np.atleast_2d(np.asarray(embedding, dtype=float))
    if emb.shape[1] != net.config.embed:
        raise ShapeError("embedding width {} != {}".format(emb.shape[1], net.config.embed))
    mu = emb @ p["Wmu"].T + p["bmu"]
    if noise is None:
        z = mu
    else:
        noise = np.atleast_2d(np.asarray(noise, dtype=float))
        if noise.shape != mu.shape:
            raise ShapeError("noise shape {} != latent shape {}".format(noise.shape, mu.shape))
        z = mu + np.exp(emb @ p["Wls"].T + p["bls"]) * noise
    logits = z @ p["W"].T + p["b"]
    if single:
        return logits[0], z[0]
    return logits, z


def policy_logits(net: PolicyNet, features, noise=None):
    """Logits straight from features (deterministic latent by default)."""
    return _forward(net, features, noise).logits


def greedy_actions(net: PolicyNet, features):
    logits = policy_logits(net, features)
    return np.argmax(logits, axis=1) + net.config.min_days


def kl_standard_normal(mu, logsig):
    """Closed-form KL(N(mu, sigma^2) || N(0, 1)) summed over latent dims."""
    mu = np.asarray(mu, dtype=float)
    logsig = np.asarray(logsig, dtype=float)
    return 0.5 * np.sum(mu ** 2 + np.exp(2.0 * logsig) - 1.0 - 2.0 * logsig, axis=-1)


class ActionSample(NamedTuple):
    action: int
    index: int
    log_prob: float
    logits: np.ndarray
    latent: Optional[np.ndarray] = None


def sample_action(logits, temperature, rng, grid: CandidateGrid = None, latent=None):
    """Draw from ``softmax(logits / temperature)``.

    ``log_prob`` is the untempered ``log_softmax(logits)`` at the drawn
    index.  Actions are grid values when ``grid`` is given, indices
    otherwise.
    """
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits", sample=logits.tolist())
    if not temperature > 0:
        raise DomainError("temperature must be > 0")
    probs = softmax(logits / temperature)
    index = int(rng.choice(len(logits), p=probs))
    action = index + grid.min_days if grid is not None else index
    return ActionSample(action, index, float(log_softmax(logits)[index]), logits, latent)


# -------------------------------------------------------------------------
# losses and gradients
# -------------------------------------------------------------------------


class Batch(NamedTuple):
    features: FeatureBatch
    labels: np.ndarray  # grid values
    demand_targets: np.ndarray  # units/day

    def __len__(self):
        return len(self.features)

    def take(self, idx):
        return Batch(self.features.take(idx), self.labels[idx], self.demand_targets[idx])


def _label_index(net, labels):
    labels = np.asarray(labels)
    grid = net.grid
    bad = (labels < grid.min_days) | (labels > grid.max_days) | (labels != np.round(labels))
    if bad.any():
        raise DataError(
            "label {} outside grid [{}, {}]".format(
                labels[np.flatnonzero(bad)[0]], grid.min_days, grid.max_days
            )
        )
    return labels.astype(np.int64) - grid.min_days


def losses(net, batch: Batch, noise=None, kl_weight=0.1, cache=None):
    """Forecast, cross-entropy and KL terms (batch means)."""
    c = cache or _forward(net, batch.features, noise)
    idx = _label_index(net, batch.labels)
    target = np.asarray(batch.demand_targets, dtype=float) / net.demand_scale
    forecast_loss = float(np.mean((np.logaddexp(0.0, c.u) - target) ** 2))
    rows = np.arange(len(idx))
    ce = float(np.mean(logsumexp(c.logits, axis=1) - c.logits[rows, idx]))
    kl = float(np.mean(kl_standard_normal(c.mu, c.logsig)))
    return {
        "forecast_loss": forecast_loss,
        "cross_entropy": ce,
        "kl_term": kl,
        "decision_loss": ce + kl_weight * kl,
    }


def backward(net, c: _Cache, dlogits=None, du=None, kl_weight=0.0):
    """Gradients of every parameter given upstream gradients.

    ``dlogits`` is dL/dlogits, ``du`` dL/d(forecast pre-activation); the KL
    term, when weighted, is a batch mean.
    """
    p = net.params
    B = c.emb.shape[0]
    g = {k: np.zeros_like(v) for k, v in p.items()}
    demb = np.zeros_like(c.emb)
    if dlogits is not None or kl_weight:
        if dlogits is None:
            dlogits = np.zeros_like(c.logits)
        g["W"] = dlogits.T @ c.z
        g["b"] = dlogits.sum(axis=0)
        dz = dlogits @ p["W"]
        dmu = dz + kl_weight * c.mu / B
        sigma = np.exp(c.logsig)
        dls = kl_weight * (sigma ** 2 - 1.0) / B
        if c.noise is not None:
            dls = dls + dz * c.noise * sigma
        g["Wmu"] = dmu.T @ c.emb
        g["bmu"] = dmu.sum(axis=0)
        g["Wls"] = dls.T @ c.emb
        g["bls"] = dls.sum(axis=0)
        demb += dmu @ p["Wmu"] + dls @ p["Wls"]
    if du is not None:
        g["wf2"] = c.hf.T @ du
        g["bf2"] = np.array([du.sum()])
        dpre = np.outer(du, p["wf2"]) * (1.0 - c.hf ** 2)
        g["Wf1"] = dpre.T @ c.emb
        g["bf1"] = dpre.sum(axis=0)
        demb += dpre @ p["Wf1"]
    dgate = np.array([np.sum(demb * e) for e in c.e])
    g["gate"] = c.gates * (dgate - np.dot(c.gates, dgate))
    for s, gate, x, h in zip(STREAMS, c.gates, c.x, c.h):
        de = gate * demb
        g["W2_" + s] = de.T @ h
        g["b2_" + s] = de.sum(axis=0)
        dpre = (de @ p["W2_" + s]) * (1.0 - h ** 2)
        g["W1_" + s] = dpre.T @ x
        g["b1_" + s] = dpre.sum(axis=0)
    return g


def loss_and_grads(net, batch: Batch, noise=None, kl_weight=0.1, forecast=True, decision=True):
    """Value and gradients of ``forecast_loss + decision_loss`` (either may be off)."""
    c = _forward(net, batch.features, noise)
    terms = losses(net, batch, kl_weight=kl_weight, cache=c)
    B = len(batch)
    dlogits = du = None
    value = 0.0
    if decision:
        idx = _label_index(net, batch.labels)
        dlogits = softmax(c.logits, axis=1)
        dlogits[np.arange(B), idx] -= 1.0
        dlogits /= B
        value += terms["decision_loss"]
    if forecast:
        target = np.asarray(batch.demand_targets, dtype=float) / net.demand_scale
        du = 2.0 * (np.logaddexp(0.0, c.u) - target) * expit(c.u) / B
        value += terms["forecast_loss"]
    grads = backward(net, c, dlogits, du, kl_weight if decision else 0.0)
    return value, terms, grads


def grad_check(net, batch: Batch, epsilon=1e-5, kl_weight=0.1, seed=0):
    """Largest per-group relative error between analytic and central-difference gradients.

    The latent noise is drawn once from ``seed`` and held fixed.
    """
    from replenlab.oracles import fd_gradient

    if not 1e-6 <= epsilon <= 1e-4:
        raise DomainError("epsilon must lie in [1e-6, 1e-4]")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    noise = rng.standard_normal((len(batch), net.config.latent))
    _, _, analytic = loss_and_grads(net, batch, noise, kl_weight)
    twin = net.copy()

    def total(_):
        value, _, _ = loss_and_grads(twin, batch, noise, kl_weight)
        return value

    worst = 0.0
    for group, names in GROUPS.items():
        a = np.concatenate([analytic[n].reshape(-1) for n in names])
        flat = np.concatenate([net.params[n].reshape(-1) for n in names])

        def f(vec, names=names):
            _unflatten(twin, names, vec)
            return total(None)

        numeric = fd_gradient(f, flat, epsilon)
        _unflatten(twin, names, flat)
        denom = max(np.linalg.norm(a) + np.linalg.norm(numeric), 1e-12)
        err = float(np.linalg.norm(a - numeric) / denom)
        log("grad_check", group, err)
        worst = max(worst, err)
    return worst


def _unflatten(net, names, vec):
    pos = 0
    for n in names:
        size = net.params[n].size
        net.params[n] = np.asarray(vec[pos : pos + size], dtype=float).reshape(
            net.params[n].shape
        )
        pos += size


# -------------------------------------------------------------------------
# training
# -------------------------------------------------------------------------


class RMSProp:
    """Momentum-free adaptive steps: ``p -= lr * g / (sqrt(avg(g^2)) + eps)``."""

    def __init__(self, learning_rate, decay=0.9, eps=1e-8):
        self.learning_rate = learning_rate
        self.decay = decay
        self.eps = eps
        self.cache = {}

    def step(self, params, grads, names):
        for n in names:
            c = self.cache.get(n)
            if c is None:
                c = np.zeros_like(params[n])
            c = self.decay * c + (1.0 - self.decay) * grads[n] ** 2
            self.cache[n] = c
            params[n] = params[n] - self.learning_rate * grads[n] / (np.sqrt(c) + self.eps)


@dataclass(frozen=True)
class TrainSchedule:
    epochs: Dict[str, int] = field(
        default_factory=lambda: {"S1_forecast": 40, "S2_decision_frozen": 40, "S3_joint": 20}
    )
    learning_rates: Dict[str, float] = field(
        default_factory=lambda: {
            "S1_forecast": 0.01,
            "S2_decision_frozen": 0.01,
            "S3_joint": 0.003,
        }
    )
    vae_kl_weight: float = 0.1
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        for stage in self.epochs:
            if stage not in STAGES:
                raise DomainError("unknown training stage {!r}".format(stage))
        for stage in STAGES:
            if self.learning_rates.get(stage, 0) <= 0:
                raise DomainError("learning rate of {} must be > 0".format(stage))
        if self.vae_kl_weight < 0:
            raise DomainError("vae_kl_weight must be >= 0")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")


def pretrain(net: PolicyNet, dataset: Batch, schedule: TrainSchedule, log_sink=None):
    """Run the three training stages in order on a copy of ``net``.

    Returns the trained net and one log record per stage and epoch.
    """
    if len(dataset) == 0:
        raise DataError("empty training set")
    _label_index(net, dataset.labels)
    net = net.copy()
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(schedule.seed)))
    records = []
    for stage in STAGES:
        epochs = schedule.epochs.get(stage, 0)
        names = [n for g in STAGE_GROUPS[stage] for n in GROUPS[g]]
        opt = RMSProp(schedule.learning_rates[stage])
        for epoch in range(epochs):
            order = rng.permutation(len(dataset))
            for start in range(0, len(dataset), schedule.batch_size):
                batch = dataset.take(order[start : start + schedule.batch_size])
                noise = rng.standard_normal((len(batch), net.config.latent))
                value, terms, grads = loss_and_grads(
                    net,
                    batch,
                    noise,
                    schedule.vae_kl_weight,
                    forecast=stage == "S1_forecast",
                    decision=stage != "S1_forecast",
                )
                if not math.isfinite(value):
                    raise TrainingDiverged(
                        "loss became {} in stage {} epoch {}".format(value, stage, epoch),
                        sample={"stage": stage, "epoch": epoch, "batch_start": start},
                    )
                opt.step(net.params, grads, names)
            terms = losses(
                net,
                dataset,
                noise=rng.standard_normal((len(dataset), net.config.latent)),
                kl_weight=schedule.vae_kl_weight,
            )
            record = {
                "stage": stage,
                "epoch": epoch,
                "forecast_loss": terms["forecast_loss"],
                "decision_loss": terms["decision_loss"],
                "kl_term": terms["kl_term"],
            }
            records.append(record)
            if log_sink is not None:
                log_sink(record)
        if epochs:
            log("finished", stage, "after", epochs, "epochs")
    return net, records


def make_batch(vectors: List[FeatureVector], labels, demand_targets):
    return Batch(
        FeatureBatch.stack(vectors),
        np.asarray(labels, dtype=np.int64),
        np.asarray(demand_targets, dtype=float),
    )
