import math

import numpy as np
import pytest

from replenlab import oracles
from replenlab.errors import DomainError, NumericError, RewardWarning
from replenlab.or_select import LabelSet
from replenlab.policy_net import (
    ATTRS_WIDTH,
    OBJECTIVE_WIDTH,
    SALES_WIDTH,
    GROUPS,
    FeatureBatch,
    FeatureTargets,
    FeatureVector,
    NetConfig,
    PolicyNet,
    build_features,
    policy_logits,
)
from replenlab.rloo import (
    FinetuneConfig,
    Prompt,
    ReferenceSource,
    RewardChain,
    RewardConfig,
    exact_kl,
    finetune,
    greedy_agreement,
    hybrid_reward,
    kl_adjusted_return,
    leave_one_out,
    make_prompts,
    rloo_step,
    rule_reward,
    sim_reward,
    surrogate,
    surrogate_grads,
)
from replenlab.sim_core import Simulator

from conftest import make_sku


def small_policy(seed=1):
    return PolicyNet(
        NetConfig(min_days=3, max_days=8, hidden=8, embed=6, latent=5, forecast_hidden=4, seed=seed)
    )


def toy_prompts(n, a_star, seed=0, trace_days=30):
    rng = np.random.default_rng(seed)
    sku = make_sku()
    prompts = []
    for _ in range(n):
        vec = FeatureVector(
            rng.normal(5.0, 2.0, SALES_WIDTH),
            rng.normal(0.0, 1.0, ATTRS_WIDTH),
            rng.uniform(0.0, 1.0, OBJECTIVE_WIDTH),
        )
        trace = np.full(trace_days, 5)
        prompts.append(Prompt(vec, a_star, 5, sku, trace, np.zeros(0, dtype=int), 0))
    return prompts


class TestRewards:
    def test_rule_wrong_direction(self):
        assert rule_reward(7, 5, 6, RewardConfig(focal_gamma=0.0)) == -8.0
        assert rule_reward(7, 5, 6, RewardConfig()) == pytest.approx(-7.9973, abs=1e-4)

    def test_rule_right_direction(self):
        assert rule_reward(4, 5, 6, RewardConfig()) == pytest.approx(-(1 - math.exp(-1.0)))

    def test_rule_exact_and_unchanged(self):
        cfg = RewardConfig()
        assert rule_reward(5, 5, 6, cfg) == 0.0
        # no adjustment from the incumbent never counts as the wrong direction
        assert rule_reward(6, 5, 6, cfg) == pytest.approx(-(1 - math.exp(-1.0)))

    def test_hybrid(self):
        cfg = RewardConfig(omega=0.5)
        assert hybrid_reward(-8.0, 1, cfg) == -3.5
        assert hybrid_reward(-8.0, None, cfg) == -4.0

    def test_kl_adjusted(self):
        assert kl_adjusted_return(1.0, -1.0, -3.0, 0.05) == pytest.approx(0.9)
        with pytest.raises(NumericError):
            kl_adjusted_return(1.0, float("-inf"), -3.0, 0.05)

    def test_sim_reward_dominance(self):
        cfg = RewardConfig(sim_horizon_days=14)
        sku = make_sku(vlt=1, nrt=1)
        trace = np.full(20, 5)
        assert sim_reward(trace, sku, 3, 10, cfg) == 1
        assert sim_reward(trace, sku, 10, 3, cfg) == -1
        assert sim_reward(trace, sku, 4, 4, cfg) == 0
        # no orders: lower inventory but more lost sales
        assert sim_reward(trace, sku, 0, 3, cfg) == 0

    def test_sim_reward_short_trace(self):
        sim = Simulator()
        cfg = RewardConfig(sim_horizon_days=14)
        assert sim_reward(np.full(10, 5), make_sku(), 3, 4, cfg, sim=sim) is None
        assert sim.calls == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(omega=1.5),
            dict(focal_gamma=-1.0),
            dict(sign_alpha=1.0),
            dict(kl_beta=-0.1),
            dict(k_samples=1),
            dict(temperature=0.0),
            dict(reward_level="epoch"),
            dict(base_kind="oracle"),
        ],
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(DomainError):
            RewardConfig(**kwargs)


class TestLeaveOneOut:
    def test_two_samples(self):
        baselines, advantages = leave_one_out([[2.0, 0.0]])
        assert baselines.tolist() == [[0.0, 2.0]]
        assert advantages.tolist() == [[2.0, -2.0]]

    def test_matches_reference(self, oracle_check):
        returns = np.random.default_rng(0).normal(size=(5, 4))
        baselines, advantages = leave_one_out(returns)
        oracle_check(baselines.ravel(), np.ravel(oracles.leave_one_out_reference(returns.tolist())),
                     abs_tol=1e-12)
        np.testing.assert_allclose(advantages.sum(axis=1), 0.0, atol=1e-12)

    def test_shift_invariant(self):
        returns = np.random.default_rng(1).normal(size=(3, 6))
        _, a = leave_one_out(returns)
        _, b = leave_one_out(returns + 17.0)
        np.testing.assert_allclose(a, b, atol=1e-12)


PARAMETER_GROUPS = {
    "encoder": tuple(n for n in GROUPS["encoder"] if n != "gate"),
    "gates": ("gate",),
    "forecast": GROUPS["forecast"],
    "decision": GROUPS["decision"],
}


class TestSurrogate:
    def test_gradient(self, oracle_check):
        rng = np.random.default_rng(2)
        logits = rng.normal(size=(3, 5))
        indices = np.array([[0, 0, 4], [1, 2, 3], [4, 4, 4]])
        advantages = rng.normal(size=(3, 3))

        def f(x):
            return surrogate(x, indices, advantages)[0]

        _, grad = surrogate(logits, indices, advantages)
        oracle_check(grad.ravel(), oracles.fd_gradient(f, logits).ravel(), abs_tol=1e-8)

    @pytest.mark.parametrize("group", ["encoder", "gates", "forecast", "decision"])
    def test_parameter_gradients(self, group):
        names = PARAMETER_GROUPS[group]
        rng = np.random.default_rng(11)
        policy = small_policy(seed=4)
        features = FeatureBatch.stack([p.features for p in toy_prompts(4, 5, seed=3)])
        policy.fit_standardization(features)
        indices = rng.integers(0, policy.config.n_actions, size=(4, 3))
        advantages = rng.normal(size=(4, 3))
        _, grads = surrogate_grads(policy, features, indices, advantages)
        shifted = policy.copy()

        def f(vec):
            pos = 0
            for n in names:
                size = shifted.params[n].size
                shifted.params[n] = vec[pos : pos + size].reshape(shifted.params[n].shape)
                pos += size
            return surrogate_grads(shifted, features, indices, advantages)[0]

        flat = np.concatenate([policy.params[n].ravel() for n in names])
        numeric = oracles.fd_gradient(f, flat)
        analytic = np.concatenate([grads[n].ravel() for n in names])
        denom = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        assert np.linalg.norm(analytic - numeric) / denom < 1e-4
        if group == "forecast":
            assert not analytic.any()
        else:
            assert np.linalg.norm(analytic) > 0

    def test_zero_advantage(self):
        logits = np.zeros((2, 4))
        value, grad = surrogate(logits, np.zeros((2, 2), dtype=int), np.zeros((2, 2)))
        assert value == 0.0
        assert not grad.any()

    def test_exact_kl(self):
        logits = np.array([[0.0, 1.0, 2.0]])
        assert exact_kl(logits, logits) == pytest.approx(0.0, abs=1e-15)
        assert exact_kl(logits, np.zeros((1, 3))) > 0


class TestReferences:
    @pytest.fixture
    def reference(self, constant_panel):
        labels = LabelSet([("AX", 0, 5, 0.1), ("BY", 0, 40, 0.1), ("AX", 30, 7, 0.1)])
        return ReferenceSource.from_labels(labels, constant_panel)

    def test_resolve(self, reference):
        assert reference.kind == "OR_labels"
        assert reference.resolve("SKU00001", 10) == 5
        assert reference.resolve("SKU00001", 45) == 7
        assert reference.previous("SKU00001", 45) == 5
        assert reference.previous("SKU00001", 10) is None
        assert reference.resolve("SKU00002", 59) == 40
        with pytest.raises(KeyError):
            reference.resolve("SKU00009", 3)

    def test_expert_kind(self, constant_panel):
        ref = ReferenceSource.from_expert([("BY", 0, 4, 0.0)], constant_panel)
        assert ref.kind == "expert_labels"
        assert ref.resolve("SKU00003", 0) == 4

    def test_bad_kind(self):
        with pytest.raises(DomainError):
            ReferenceSource("guesses", {})

    def test_make_prompts(self, constant_panel, grid, reference):
        ref_policy = small_policy()

        def features(i, day):
            return build_features(constant_panel, i, day, grid, FeatureTargets())

        cfg = RewardConfig()
        prompts = make_prompts(constant_panel, [28, 35], reference, ref_policy, grid, features, cfg)
        assert len(prompts) == 8
        first = prompts[0]
        assert first.sku.sku_id == "SKU00000"
        assert first.day == 28
        assert len(first.trace) == 32
        assert len(first.history) == 28
        assert first.initial_inventory == 0
        assert prompts[0].a_star == 5
        assert prompts[1].a_star == 7
        # out-of-grid reference is clipped
        assert prompts[4].a_star == 8
        assert all(p.a_base in grid for p in prompts)

    def test_prior_epoch_base(self, constant_panel, grid, reference):
        def features(i, day):
            return build_features(constant_panel, i, day, grid, FeatureTargets())

        cfg = RewardConfig(base_kind="prior_epoch")
        reference.prior_decision[("SKU00001", 35)] = 3
        prompts = make_prompts(
            constant_panel,
            [35],
            reference,
            small_policy(),
            grid,
            features,
            cfg,
            inventory_fn=lambda i, day: 10 * i,
        )
        assert prompts[0].a_star == 7
        assert prompts[0].a_base == 5
        assert prompts[1].a_base == 3
        assert [p.initial_inventory for p in prompts] == [0, 10, 20, 30]

    def test_no_prompts(self, constant_panel, grid, reference):
        with pytest.raises(DomainError):
            make_prompts(constant_panel, [], reference, small_policy(), grid, None, RewardConfig())


class TestStep:
    def test_rule_only_skips_simulation(self):
        policy, ref = small_policy(), small_policy()
        sim = Simulator()
        cfg = RewardConfig(omega=1.0, k_samples=3)
        chain = RewardChain(cfg, sim)
        _, stats = rloo_step(policy, ref, toy_prompts(4, 5), cfg, rng=np.random.default_rng(0),
                             chain=chain)
        assert sim.calls == 0
        assert chain.rule_calls == 12
        assert len(stats.samples) == 12
        assert all(s.sim is None for s in stats.samples)

    def test_sim_only_skips_rule(self):
        cfg = RewardConfig(omega=0.0, k_samples=2, sim_horizon_days=7)
        chain = RewardChain(cfg)
        rloo_step(small_policy(), small_policy(), toy_prompts(2, 5), cfg,
                  rng=np.random.default_rng(0), chain=chain)
        assert chain.rule_calls == 0
        assert chain.sim.calls == 2 * 2 * 2

    def test_short_trace_warns(self):
        cfg = RewardConfig(k_samples=2, sim_horizon_days=14)
        chain = RewardChain(cfg)
        with pytest.warns(RewardWarning):
            _, stats = rloo_step(small_policy(), small_policy(), toy_prompts(1, 5, trace_days=5),
                                 cfg, rng=np.random.default_rng(0), chain=chain)
        assert chain.skipped == 2
        assert all(s.rule is not None for s in stats.samples)

    def test_updates_in_place(self):
        policy = small_policy()
        before = policy.param_hash()
        cfg = RewardConfig(omega=1.0)
        out, stats = rloo_step(policy, small_policy(), toy_prompts(4, 8), cfg,
                               rng=np.random.default_rng(3))
        assert out is policy
        assert policy.param_hash() != before
        assert stats.mean_kl == pytest.approx(0.0, abs=1e-12)
        assert stats.grad_norm > 0

    def test_batch_level_rewards(self):
        cfg = RewardConfig(omega=1.0, reward_level="batch", kl_beta=0.0)
        _, stats = rloo_step(small_policy(), small_policy(), toy_prompts(3, 5), cfg,
                             rng=np.random.default_rng(0))
        by_slot = {}
        for n, s in enumerate(stats.samples):
            by_slot.setdefault(n % cfg.k_samples, set()).add(s.total_return)
        assert all(len(v) == 1 for v in by_slot.values())

    def test_empty_batch(self):
        with pytest.raises(DomainError):
            rloo_step(small_policy(), small_policy(), [], RewardConfig())


class TestFinetune:
    def test_zero_steps(self):
        policy = small_policy()
        out, records = finetune(policy, policy, toy_prompts(3, 5), RewardConfig(), n_steps=0)
        assert out is policy
        assert records == []

    def test_empty_dataset(self):
        with pytest.raises(DomainError):
            finetune(small_policy(), small_policy(), [], RewardConfig())

    def test_moves_toward_reference(self):
        ref = small_policy()
        prompts = toy_prompts(32, 8)
        before = greedy_agreement(ref, prompts)
        cfg = RewardConfig(omega=1.0, kl_beta=0.0)
        settings = FinetuneConfig(batch_size=8, learning_rate=0.03, seed=1)
        tuned, records = finetune(ref, ref, prompts, cfg, n_steps=150, settings=settings)
        after = greedy_agreement(tuned, prompts)
        assert after >= max(before, 0.8)
        assert len(records) == 150
        assert records[-1]["mean_rule_reward"] > records[0]["mean_rule_reward"]
        assert ref.param_hash() == small_policy().param_hash()

    @pytest.mark.slow
    def test_aligns_with_single_label(self):
        ref = small_policy(3)
        prompts = toy_prompts(32, 6, seed=3)
        cfg = RewardConfig(omega=1.0, k_samples=4, kl_beta=0.0)
        settings = FinetuneConfig(batch_size=8, learning_rate=0.03, seed=3)
        tuned, _ = finetune(ref, ref, prompts, cfg, n_steps=500, settings=settings)
        assert greedy_agreement(tuned, prompts) >= 0.95

    def test_kl_penalty_limits_drift(self):
        ref = small_policy()
        prompts = toy_prompts(16, 8)
        settings = FinetuneConfig(batch_size=8, learning_rate=0.03, seed=2)
        features = [p.features for p in prompts]
        drift = {}
        for beta in (0.0, 100.0):
            cfg = RewardConfig(omega=1.0, kl_beta=beta)
            tuned, _ = finetune(ref, ref, prompts, cfg, n_steps=40, settings=settings)
            drift[beta] = exact_kl(policy_logits(tuned, features), policy_logits(ref, features))
        assert drift[100.0] < drift[0.0]

    def test_validation_keeps_best(self):
        ref = small_policy()
        settings = FinetuneConfig(batch_size=4, eval_every=2, seed=0)
        seen = []
        tuned, records = finetune(
            ref,
            ref,
            toy_prompts(8, 8),
            RewardConfig(omega=1.0),
            n_steps=5,
            settings=settings,
            validate=lambda policy: 0.0,
            log_sink=seen.append,
        )
        assert tuned.param_hash() == ref.param_hash()
        assert [r["step"] for r in records if "validation_cost" in r] == [2, 4, 5]
        assert seen == records
