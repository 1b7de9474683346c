"""
Experiment configuration, read from an ini file with ``iniconfig``.

Every key is optional.  Sections::

    [scenario]  n_skus horizon_days base_demand_min base_demand_max season_amplitude
                season_period_days cost_ratio vlt_days_min vlt_days_max
                nrt_days_choices promo_calendar panel_dir
    [grid]      min_days max_days
    [sim]       initial_inventory demand_avg_window order_offset sale_basis
                baseline_window holding_rate
    [labels]    target_turnover tol alpha epoch_days per_sku max_iter
    [train]     epochs_s1 epochs_s2 epochs_s3 lr_s1 lr_s2 lr_s3 kl_weight batch_size
                hidden embed latent lookback_days turnover_target_days sample_stride
    [reward]    omega focal_gamma sign_alpha kl_beta sim_horizon_days k_samples
                temperature reward_level base_kind
    [finetune]  n_steps batch_size learning_rate eval_every prompt_stride
    [split]     train validation test            (as ``start-end``, end exclusive)
    [run]       seed methods reference_method numprocesses

``promo_calendar`` is a comma separated list of ``start:duration:multiplier``.
"""
import hashlib
import json
import re
from dataclasses import asdict, dataclass, replace
from typing import Optional, Tuple

import iniconfig

from replenlab.datagen import ScenarioConfig
from replenlab.errors import DomainError, UsageError
from replenlab.plugin import parse_numprocesses
from replenlab.policy_net import STAGES, FeatureTargets, NetConfig, TrainSchedule
from replenlab.rloo import FinetuneConfig, RewardConfig
from replenlab.sim_core import CandidateGrid, SimConfig

BUILTIN_METHODS = (
    "OR",
    "PTO_normal",
    "PTO_gamma",
    "BM_50",
    "BM_85",
    "DL_pretrain",
    "ORPR_finetuned",
)
_BM_RE = re.compile(r"^BM_(\d+(?:\.\d+)?)$")


@dataclass(frozen=True)
class SplitConfig:
    train: Tuple[int, int] = (0, 150)
    validation: Tuple[int, int] = (150, 180)
    test: Tuple[int, int] = (180, 240)

    def validate(self, horizon_days):
        spans = (("train", self.train), ("validation", self.validation), ("test", self.test))
        for name, (a, b) in spans:
            if not 0 <= a < b:
                raise UsageError("split {} must be a non-empty range, got {}-{}".format(name, a, b))
        if not (self.train[1] <= self.validation[0] and self.validation[1] <= self.test[0]):
            raise UsageError("splits must be disjoint and ordered train < validation < test")
        if self.test[1] > horizon_days:
            raise UsageError(
                "test split ends at day {} beyond the {}-day panel".format(
                    self.test[1], horizon_days
                )
            )


@dataclass(frozen=True)
class LabelConfig:
    #: turnover days the calibrated labels should achieve on the train split
    target_turnover: float = 10.0
    tol: float = 0.25
    #: fixed alpha_loss; skips calibration when set
    alpha: Optional[float] = None
    epoch_days: int = 30
    per_sku: bool = False
    max_iter: int = 20


@dataclass(frozen=True)
class BaselineConfig:
    window: int = 28
    holding_rate: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = ScenarioConfig()
    panel_dir: Optional[str] = None
    grid: CandidateGrid = CandidateGrid()
    sim: SimConfig = SimConfig(horizon_days=240)
    labels: LabelConfig = LabelConfig()
    features: FeatureTargets = FeatureTargets()
    net: NetConfig = NetConfig()
    train: TrainSchedule = TrainSchedule()
    #: days between pretraining samples of one sku
    sample_stride: int = 3
    reward: RewardConfig = RewardConfig()
    finetune: FinetuneConfig = FinetuneConfig()
    #: days between fine-tuning decision days of one sku
    prompt_stride: int = 5
    baselines: BaselineConfig = BaselineConfig()
    split: SplitConfig = SplitConfig()
    methods: Tuple[str, ...] = BUILTIN_METHODS
    reference_method: str = "OR"
    numprocesses: object = 0
    seed: int = 0

    def validate(self):
        if not self.methods:
            raise UsageError("method list is empty")
        if len(set(self.methods)) != len(self.methods):
            raise UsageError("duplicate method in {}".format(", ".join(self.methods)))
        if self.panel_dir is None:
            self.scenario.validate()
            horizon = self.scenario.horizon_days
        else:
            horizon = self.split.test[1]
        self.split.validate(horizon)
        if (self.net.min_days, self.net.max_days) != (self.grid.min_days, self.grid.max_days):
            raise UsageError("network action grid differs from the candidate grid")
        if self.sample_stride < 1 or self.prompt_stride < 1:
            raise UsageError("sample_stride and prompt_stride must be >= 1")
        if self.labels.alpha is not None and not 0.0 <= self.labels.alpha <= 1.0:
            raise UsageError("labels alpha must lie in [0, 1]")
        return self

    def with_seed(self, seed):
        """Same configuration with every random stream derived from ``seed``."""
        return replace(
            self,
            seed=seed,
            scenario=replace(self.scenario, seed=seed),
            net=replace(self.net, seed=seed + 1),
            train=replace(self.train, seed=seed + 2),
            finetune=replace(self.finetune, seed=seed + 3),
        )

    def to_dict(self):
        data = asdict(self)
        data["scenario"].pop("extra", None)
        return data

    def config_hash(self):
        data = self.to_dict()
        # worker count never changes results
        data.pop("numprocesses")
        return _digest(data)

    def sim_hash(self):
        return _digest(asdict(self.sim))


def _digest(data):
    text = json.dumps(data, sort_keys=True, default=list)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def is_base_stock_percentile(name):
    """Percentile of a ``BM_<x>`` method name, else None."""
    m = _BM_RE.match(name)
    return float(m.group(1)) if m else None


# -------------------------------------------------------------------------
# ini parsing
# -------------------------------------------------------------------------


def _bool(text):
    value = text.strip().lower()
    if value in ("1", "yes", "true", "on"):
        return True
    if value in ("0", "no", "false", "off"):
        return False
    raise ValueError("not a boolean: {!r}".format(text))


def _optional_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _int_list(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _names(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _span(text):
    a, sep, b = text.partition("-")
    if not sep:
        raise ValueError("expected start-end, got {!r}".format(text))
    return int(a), int(b)


def _promos(text):
    out = []
    for item in _names(text):
        start, duration, mult = item.split(":")
        out.append((int(start), int(duration), float(mult)))
    return tuple(out)


_SECTIONS = {
    "scenario": {
        "n_skus": int,
        "horizon_days": int,
        "base_demand_min": float,
        "base_demand_max": float,
        "season_amplitude": float,
        "season_period_days": int,
        "cost_ratio": float,
        "vlt_days_min": int,
        "vlt_days_max": int,
        "nrt_days_choices": _int_list,
        "promo_calendar": _promos,
        "panel_dir": str,
    },
    "grid": {"min_days": int, "max_days": int},
    "sim": {
        "initial_inventory": int,
        "demand_avg_window": int,
        "order_offset": int,
        "sale_basis": str,
        "baseline_window": int,
        "holding_rate": float,
    },
    "labels": {
        "target_turnover": float,
        "tol": float,
        "alpha": _optional_float,
        "epoch_days": int,
        "per_sku": _bool,
        "max_iter": int,
    },
    "train": {
        "epochs_s1": int,
        "epochs_s2": int,
        "epochs_s3": int,
        "lr_s1": float,
        "lr_s2": float,
        "lr_s3": float,
        "kl_weight": float,
        "batch_size": int,
        "hidden": int,
        "embed": int,
        "latent": int,
        "lookback_days": int,
        "turnover_target_days": float,
        "sample_stride": int,
    },
    "reward": {
        "omega": float,
        "focal_gamma": float,
        "sign_alpha": float,
        "kl_beta": float,
        "sim_horizon_days": int,
        "k_samples": int,
        "temperature": float,
        "reward_level": str,
        "base_kind": str,
    },
    "finetune": {
        "n_steps": int,
        "batch_size": int,
        "learning_rate": float,
        "eval_every": int,
        "prompt_stride": int,
    },
    "split": {"train": _span, "validation": _span, "test": _span},
    "run": {
        "seed": int,
        "methods": _names,
        "reference_method": str,
        "numprocesses": parse_numprocesses,
    },
}


def _read_sections(path):
    try:
        ini = iniconfig.IniConfig(str(path))
    except iniconfig.ParseError as e:
        raise UsageError("cannot parse config {}: {}".format(path, e)) from e
    except OSError as e:
        raise UsageError("cannot read config {}: {}".format(path, e)) from e
    values = {}
    for section in ini:
        if section.name not in _SECTIONS:
            raise UsageError("{}: unknown section [{}]".format(path, section.name))
        converters = _SECTIONS[section.name]
        parsed = {}
        for key, text in section.items():
            if key not in converters:
                raise UsageError("{}: unknown key {!r} in [{}]".format(path, key, section.name))
            try:
                parsed[key] = converters[key](text)
            except ValueError as e:
                raise UsageError(
                    "{}: bad value for {}.{}: {}".format(path, section.name, key, e)
                ) from e
        values[section.name] = parsed
    return values


def config_from_sections(values) -> ExperimentConfig:
    """Build a validated ExperimentConfig from ``{section: {key: value}}``."""
    sc = dict(values.get("scenario", {}))
    grid_v = values.get("grid", {})
    sim_v = dict(values.get("sim", {}))
    lab_v = values.get("labels", {})
    tr_v = dict(values.get("train", {}))
    rw_v = values.get("reward", {})
    ft_v = dict(values.get("finetune", {}))
    run_v = values.get("run", {})
    d = ExperimentConfig()
    try:
        panel_dir = sc.pop("panel_dir", None)
        base = d.scenario
        scenario = replace(
            base,
            base_demand_range=(
                sc.pop("base_demand_min", base.base_demand_range[0]),
                sc.pop("base_demand_max", base.base_demand_range[1]),
            ),
            vlt_days_range=(
                sc.pop("vlt_days_min", base.vlt_days_range[0]),
                sc.pop("vlt_days_max", base.vlt_days_range[1]),
            ),
            **sc,
        )
        grid = CandidateGrid(**{**asdict(d.grid), **grid_v})
        baselines = BaselineConfig(
            window=sim_v.pop("baseline_window", d.baselines.window),
            holding_rate=sim_v.pop("holding_rate", d.baselines.holding_rate),
        )
        sim = replace(d.sim, horizon_days=scenario.horizon_days, grid=grid, **sim_v)
        labels = replace(d.labels, **lab_v)
        epochs = dict(d.train.epochs)
        rates = dict(d.train.learning_rates)
        for n, stage in enumerate(STAGES, 1):
            if "epochs_s%d" % n in tr_v:
                epochs[stage] = tr_v.pop("epochs_s%d" % n)
            if "lr_s%d" % n in tr_v:
                rates[stage] = tr_v.pop("lr_s%d" % n)
        net_keys = {k: tr_v.pop(k) for k in ("hidden", "embed", "latent") if k in tr_v}
        net = replace(d.net, min_days=grid.min_days, max_days=grid.max_days, **net_keys)
        features = replace(
            d.features,
            **{k: tr_v.pop(k) for k in ("lookback_days", "turnover_target_days") if k in tr_v}
        )
        sample_stride = tr_v.pop("sample_stride", d.sample_stride)
        train = replace(
            d.train,
            epochs=epochs,
            learning_rates=rates,
            vae_kl_weight=tr_v.pop("kl_weight", d.train.vae_kl_weight),
            **tr_v,
        )
        reward = replace(d.reward, **rw_v)
        prompt_stride = ft_v.pop("prompt_stride", d.prompt_stride)
        finetune = replace(d.finetune, **ft_v)
        split = replace(d.split, **values.get("split", {}))
    except DomainError as e:
        raise UsageError("invalid configuration: {}".format(e)) from e
    cfg = ExperimentConfig(
        scenario=scenario,
        panel_dir=panel_dir,
        grid=grid,
        sim=sim,
        labels=labels,
        features=features,
        net=net,
        train=train,
        sample_stride=sample_stride,
        reward=reward,
        finetune=finetune,
        prompt_stride=prompt_stride,
        baselines=baselines,
        split=split,
        methods=run_v.get("methods", d.methods),
        reference_method=run_v.get("reference_method", d.reference_method),
        numprocesses=run_v.get("numprocesses", d.numprocesses),
    )
    cfg = cfg.with_seed(run_v.get("seed", d.seed))
    return cfg.validate()


def load_config(path=None, seed=None) -> ExperimentConfig:
    """Read ``path`` (defaults only when None); ``seed`` overrides the file's seed."""
    values = _read_sections(path) if path is not None else {}
    if seed is not None:
        values.setdefault("run", {})["seed"] = seed
    return config_from_sections(values)
