import os
from dataclasses import replace

import pytest

from replenlab.config import (
    BUILTIN_METHODS,
    LabelConfig,
    SplitConfig,
    is_base_stock_percentile,
    load_config,
)
from replenlab.errors import UsageError
from replenlab.policy_net import TrainSchedule
from replenlab.rloo import RewardConfig

DEFAULT_INI = os.path.join(os.path.dirname(__file__), os.pardir, "example", "default.ini")


@pytest.fixture
def ini(tmpdir):
    def write(text):
        path = tmpdir.join("experiment.ini")
        path.write(text)
        return path

    return write


class TestDefaults:
    def test_no_file(self):
        cfg = load_config()
        assert cfg.seed == 0
        assert cfg.scenario.seed == 0
        assert cfg.net.seed == 1
        assert cfg.train.seed == 2
        assert cfg.finetune.seed == 3
        assert cfg.methods == BUILTIN_METHODS
        assert cfg.sim.horizon_days == cfg.scenario.horizon_days

    def test_example_file(self):
        cfg = load_config(DEFAULT_INI)
        assert cfg.scenario.promo_calendar == ((200, 5, 1.8),)
        assert cfg.scenario.nrt_days_choices == (1, 2, 3)
        assert cfg.scenario.base_demand_range == (2.0, 40.0)
        assert cfg.reward == RewardConfig()
        assert cfg.labels == LabelConfig()
        assert cfg.split == SplitConfig()
        assert cfg.train == replace(TrainSchedule(), seed=2)
        assert cfg.methods == BUILTIN_METHODS
        assert cfg.numprocesses == 0

    def test_seed_override(self):
        cfg = load_config(DEFAULT_INI, seed=5)
        assert cfg.seed == 5
        assert cfg.scenario.seed == 5
        assert cfg.net.seed == 6

    def test_hashes(self, ini):
        base = load_config()
        assert load_config(ini("[run]\nnumprocesses = 4\n")).config_hash() == base.config_hash()
        assert load_config(seed=1).config_hash() != base.config_hash()
        assert load_config(ini("[sim]\ninitial_inventory = 3\n")).sim_hash() != base.sim_hash()


class TestSections:
    def test_values(self, ini):
        cfg = load_config(
            ini(
                "[scenario]\nn_skus = 4\nhorizon_days = 90\nvlt_days_max = 2\n"
                "[grid]\nmin_days = 2\nmax_days = 10\n"
                "[sim]\nholding_rate = 0.5\nsale_basis = fulfilled\n"
                "[labels]\nalpha = 0.3\nper_sku = yes\n"
                "[train]\nepochs_s2 = 7\nlr_s3 = 0.001\nhidden = 12\nlookback_days = 14\n"
                "[reward]\nomega = 1\n"
                "[finetune]\nn_steps = 0\nprompt_stride = 2\n"
                "[split]\ntrain = 0-50\nvalidation = 50-60\ntest = 60-90\n"
                "[run]\nmethods = OR, BM_70\nnumprocesses = auto\n"
            )
        )
        assert cfg.scenario.n_skus == 4
        assert cfg.scenario.vlt_days_range == (1, 2)
        assert cfg.sim.horizon_days == 90
        assert cfg.sim.sale_basis == "fulfilled"
        assert cfg.baselines.holding_rate == 0.5
        assert (cfg.grid.min_days, cfg.grid.max_days) == (2, 10)
        assert cfg.sim.grid == cfg.grid
        assert (cfg.net.min_days, cfg.net.max_days, cfg.net.hidden) == (2, 10, 12)
        assert cfg.labels.alpha == 0.3
        assert cfg.labels.per_sku is True
        assert cfg.train.epochs["S2_decision_frozen"] == 7
        assert cfg.train.learning_rates["S3_joint"] == 0.001
        assert cfg.features.lookback_days == 14
        assert cfg.reward.omega == 1.0
        assert cfg.finetune.n_steps == 0
        assert cfg.prompt_stride == 2
        assert cfg.split.test == (60, 90)
        assert cfg.methods == ("OR", "BM_70")
        assert cfg.numprocesses == "auto"

    def test_alpha_none(self, ini):
        assert load_config(ini("[labels]\nalpha = none\n")).labels.alpha is None

    def test_panel_dir_skips_scenario_checks(self, ini):
        cfg = load_config(ini("[scenario]\npanel_dir = data\nn_skus = 0\n"))
        assert cfg.panel_dir == "data"


class TestErrors:
    @pytest.mark.parametrize(
        "text, message",
        [
            ("[nonsense]\nx = 1\n", "unknown section [nonsense]"),
            ("[grid]\nmin = 1\n", "unknown key 'min' in [grid]"),
            ("[grid]\nmin_days = three\n", "bad value for grid.min_days"),
            ("[labels]\nper_sku = maybe\n", "bad value for labels.per_sku"),
            ("[split]\ntrain = 0:150\n", "bad value for split.train"),
            ("[grid]\nmin_days = 0\n", "invalid configuration"),
            ("[reward]\nk_samples = 1\n", "invalid configuration"),
            ("[split]\ntrain = 0-160\n", "disjoint"),
            ("[scenario]\nhorizon_days = 100\n", "beyond the 100-day panel"),
            ("[run]\nmethods = OR, OR\n", "duplicate method"),
            ("[run]\nmethods = ,\n", "method list is empty"),
            ("[labels]\nalpha = 1.5\n", "alpha must lie in [0, 1]"),
            ("[scenario]\nn_skus = 0\n", "at least one sku"),
        ],
    )
    def test_rejected(self, ini, text, message):
        with pytest.raises(UsageError) as excinfo:
            load_config(ini(text))
        assert message in str(excinfo.value)

    def test_unparsable(self, ini):
        with pytest.raises(UsageError, match="cannot parse"):
            load_config(ini("[grid]\njust some words\n"))

    def test_missing_file(self, tmpdir):
        with pytest.raises(UsageError, match="cannot read"):
            load_config(tmpdir.join("missing.ini"))


def test_base_stock_method_names():
    assert is_base_stock_percentile("BM_85") == 85.0
    assert is_base_stock_percentile("BM_97.5") == 97.5
    assert is_base_stock_percentile("BM_") is None
    assert is_base_stock_percentile("OR") is None
