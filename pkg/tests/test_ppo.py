import numpy as np
import pytest

from aeroduel.nets import ActorCritic, Adam, gaussian_log_prob
from aeroduel.ppo import (
    PpoConfig,
    RolloutBuffer,
    clipped_surrogate,
    compute_gae,
    explained_variance,
    ppo_minibatch,
    ppo_update,
)


def gae_oracle(rewards, values, dones, bootstrap, gamma, lam):
    """O(T^2) discounted-sum expansion of the GAE recursion, one env column."""
    T = len(rewards)
    v_next = list(values[1:]) + [bootstrap]
    deltas = [rewards[t] + gamma * v_next[t] * (1 - dones[t]) - values[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        weight = 1.0
        for l in range(T - t):
            if l > 0:
                weight *= gamma * lam * (1 - dones[t + l - 1])
                if weight == 0.0:
                    break
            adv[t] += weight * deltas[t + l]
    return adv


class TestPpoConfig:
    def test_defaults_match_training_hyperparameters(self):
        cfg = PpoConfig()
        assert cfg.learning_rate == 3e-4
        assert cfg.n_steps == 2048
        assert cfg.batch_size == 64
        assert cfg.n_epochs == 10
        assert cfg.gamma == 0.99
        assert cfg.gae_lambda == 0.95
        assert cfg.clip_range == 0.2
        assert cfg.entropy_coef == 0.0
        assert cfg.value_coef == 0.5
        assert cfg.max_grad_norm == 0.5
        assert cfg.n_envs == 8

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            PpoConfig.from_dict({"learning_rate": 1e-3, "lr": 1e-3})


class TestGae:
    def test_undiscounted_two_steps(self):
        adv, ret = compute_gae(
            rewards=np.array([[1.0], [1.0]]),
            values=np.zeros((2, 1)),
            dones=np.zeros((2, 1)),
            bootstrap_values=np.zeros(1),
            gamma=1.0,
            lam=1.0,
        )
        np.testing.assert_allclose(adv[:, 0], [2.0, 1.0])
        np.testing.assert_allclose(ret, adv)

    def test_lambda_zero_is_td_error(self, rng):
        rewards = rng.uniform(-1, 1, (20, 3))
        values = rng.uniform(-1, 1, (20, 3))
        dones = (rng.uniform(0, 1, (20, 3)) < 0.15).astype(float)
        bootstrap = rng.uniform(-1, 1, 3)
        adv, _ = compute_gae(rewards, values, dones, bootstrap, 0.99, 0.0)
        v_next = np.vstack([values[1:], bootstrap[None]])
        delta = rewards + 0.99 * v_next * (1 - dones) - values
        np.testing.assert_allclose(adv, delta, atol=1e-12)

    def test_done_cuts_credit(self, rng):
        rewards = rng.uniform(-1, 1, (10, 1))
        values = rng.uniform(-1, 1, (10, 1))
        dones = np.zeros((10, 1))
        dones[4, 0] = 1.0
        adv_a, _ = compute_gae(rewards, values, dones, np.zeros(1), 0.99, 0.95)
        rewards_b = rewards.copy()
        rewards_b[5:] += 100.0  # future beyond the cut must not matter
        adv_b, _ = compute_gae(rewards_b, values, dones, np.zeros(1), 0.99, 0.95)
        np.testing.assert_allclose(adv_a[:5], adv_b[:5], atol=1e-12)

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(20):
            T = 50
            rewards = rng.uniform(-2, 2, (T, 2))
            values = rng.uniform(-2, 2, (T, 2))
            dones = (rng.uniform(0, 1, (T, 2)) < 0.1).astype(float)
            bootstrap = rng.uniform(-1, 1, 2)
            adv, ret = compute_gae(rewards, values, dones, bootstrap, 0.99, 0.95)
            for env in range(2):
                expected = gae_oracle(
                    rewards[:, env], values[:, env], dones[:, env],
                    bootstrap[env], 0.99, 0.95,
                )
                np.testing.assert_allclose(adv[:, env], expected, atol=1e-10)
            np.testing.assert_allclose(ret, adv + values, atol=1e-12)


class TestClippedSurrogate:
    def test_hand_cases(self):
        objective, _ = clipped_surrogate(np.array([1.5]), np.array([1.0]), 0.2)
        assert objective[0] == pytest.approx(1.2, abs=1e-12)
        objective, _ = clipped_surrogate(np.array([0.5]), np.array([-1.0]), 0.2)
        assert objective[0] == pytest.approx(-0.8, abs=1e-12)

    def test_unit_ratio_passthrough(self, rng):
        adv = rng.uniform(-3, 3, 64)
        objective, active = clipped_surrogate(np.ones(64), adv, 0.2)
        np.testing.assert_array_equal(objective, adv)
        assert np.all(active)

    def test_gradient_mask(self):
        # Positive advantage: ratio above 1+eps is flat; negative advantage:
        # ratio below 1-eps is flat.
        _, active = clipped_surrogate(np.array([1.5, 0.5, 1.5, 0.5]),
                                      np.array([1.0, 1.0, -1.0, -1.0]), 0.2)
        np.testing.assert_array_equal(active, [False, True, True, False])


class TestRolloutBuffer:
    def test_capacity_and_shapes(self, rng):
        buf = RolloutBuffer(3, 2, 5, 4)
        for _ in range(3):
            buf.add(rng.uniform(size=(2, 5)), rng.uniform(size=(2, 4)),
                    rng.uniform(size=2), rng.uniform(size=2),
                    rng.uniform(size=2), np.zeros(2))
        with pytest.raises(RuntimeError):
            buf.add(np.zeros((2, 5)), np.zeros((2, 4)), np.zeros(2),
                    np.zeros(2), np.zeros(2), np.zeros(2))
        buf.finalize(np.zeros(2), 0.99, 0.95)
        obs, actions, logp, adv, ret = buf.flattened()
        assert obs.shape == (6, 5) and actions.shape == (6, 4)
        assert logp.shape == adv.shape == ret.shape == (6,)

    def test_finalize_requires_full_buffer(self):
        buf = RolloutBuffer(4, 1, 2, 1)
        with pytest.raises(RuntimeError):
            buf.finalize(np.zeros(1), 0.99, 0.95)


def _synthetic_batch(policy, rng, batch=32):
    obs = rng.uniform(-1, 1, (batch, policy.obs_dim))
    actions, logp, _ = policy.sample(obs, rng)
    adv = rng.uniform(-2, 2, batch)
    ret = rng.uniform(-1, 1, batch)
    return obs, actions, logp, adv, ret


def _fd_check(policy, cfg, obs, actions, logp_old, adv, ret, names, rng, n_checks=60):
    """Central finite differences on the minibatch loss, h = 1e-5."""
    _, grads, _ = ppo_minibatch(policy, obs, actions, logp_old, adv, ret, cfg)
    params = policy.parameters()
    h = 1e-5
    checked = 0
    while checked < n_checks:
        name = names[int(rng.integers(len(names)))]
        p = params[name]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        keep = p[idx]
        p[idx] = keep + h
        up, _, _ = ppo_minibatch(policy, obs, actions, logp_old, adv, ret, cfg)
        p[idx] = keep - h
        down, _, _ = ppo_minibatch(policy, obs, actions, logp_old, adv, ret, cfg)
        p[idx] = keep
        fd = (up - down) / (2 * h)
        if abs(fd) < 1e-7:
            continue
        rel = abs(grads[name][idx] - fd) / max(abs(fd), 1e-8)
        assert rel < 1e-4, (name, idx, grads[name][idx], fd)
        checked += 1


class TestGradients:
    def test_actor_loss_gradients(self, rng):
        policy = ActorCritic(8, 3, rng)
        cfg = PpoConfig(value_coef=0.0, entropy_coef=0.0)
        obs, actions, logp, adv, ret = _synthetic_batch(policy, rng)
        names = [n for n in policy.parameters() if n.startswith("actor")] + ["log_std"]
        _fd_check(policy, cfg, obs, actions, logp, adv, ret, names, rng)

    def test_critic_loss_gradients(self, rng):
        policy = ActorCritic(8, 3, rng)
        cfg = PpoConfig()
        obs, actions, logp, adv, ret = _synthetic_batch(policy, rng)
        names = [n for n in policy.parameters() if n.startswith("critic")]
        _fd_check(policy, cfg, obs, actions, logp, adv, ret, names, rng)

    def test_entropy_term_gradient(self, rng):
        policy = ActorCritic(8, 3, rng)
        cfg = PpoConfig(value_coef=0.0, entropy_coef=0.7)
        obs, actions, logp, adv, ret = _synthetic_batch(policy, rng)
        _fd_check(policy, cfg, obs, actions, logp, adv, ret, ["log_std"], rng, n_checks=3)

    def test_critic_gradients_vanish_without_value_term(self, rng):
        policy = ActorCritic(8, 3, rng)
        cfg = PpoConfig(value_coef=0.0)
        obs, actions, logp, adv, ret = _synthetic_batch(policy, rng)
        _, grads, _ = ppo_minibatch(policy, obs, actions, logp, adv, ret, cfg)
        for name, g in grads.items():
            if name.startswith("critic"):
                np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_matches_vanilla_policy_gradient(self, rng):
        # With the clip disabled and parameters still at the rollout values
        # (ratio = 1), the surrogate gradient must equal the score-function
        # estimate computed sample by sample.
        policy = ActorCritic(6, 2, rng)
        cfg = PpoConfig(clip_range=np.inf, value_coef=0.0, entropy_coef=0.0)
        obs, actions, logp, adv, ret = _synthetic_batch(policy, rng, batch=16)
        _, grads, _ = ppo_minibatch(policy, obs, actions, logp, adv, ret, cfg)

        adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)
        B = len(adv_n)
        std = np.exp(policy.log_std)
        oracle = {name: np.zeros_like(p) for name, p in policy.parameters().items()
                  if name.startswith("actor") or name == "log_std"}
        for i in range(B):
            mean_i, cache_i = policy.actor.forward(obs[i:i + 1])
            dlogp = -adv_n[i] / B
            dmean = dlogp * (actions[i:i + 1] - mean_i) / std**2
            for key, g in policy.actor.backward(cache_i, dmean).items():
                oracle[f"actor.{key}"] += g
            oracle["log_std"] += dlogp * (((actions[i] - mean_i[0]) / std) ** 2 - 1.0)
        for name, expected in oracle.items():
            np.testing.assert_allclose(grads[name], expected, atol=1e-10)


class TestPpoUpdate:
    def _filled_buffer(self, policy, rng, n_steps=8, n_envs=2):
        buf = RolloutBuffer(n_steps, n_envs, policy.obs_dim, policy.act_dim)
        for _ in range(n_steps):
            obs = rng.uniform(-1, 1, (n_envs, policy.obs_dim))
            actions, logp, values = policy.sample(obs, rng)
            rewards = rng.uniform(-1, 1, n_envs)
            dones = (rng.uniform(0, 1, n_envs) < 0.1).astype(float)
            buf.add(obs, actions, logp, rewards, values, dones)
        buf.finalize(policy.value(rng.uniform(-1, 1, (n_envs, policy.obs_dim))), 0.99, 0.95)
        return buf

    def test_update_changes_parameters_and_reports(self, rng):
        policy = ActorCritic(5, 2, rng)
        buf = self._filled_buffer(policy, rng)
        before = {k: v.copy() for k, v in policy.parameters().items()}
        cfg = PpoConfig(batch_size=4, n_epochs=2)
        opt = Adam(policy.parameters(), lr=cfg.learning_rate)
        stats = ppo_update(policy, opt, buf, cfg, np.random.default_rng(0))
        assert any(not np.array_equal(before[k], v) for k, v in policy.parameters().items())
        for key in ("policy_loss", "value_loss", "entropy", "clip_fraction",
                    "approx_kl", "explained_variance"):
            assert key in stats
        assert stats["n_minibatches"] == 2 * 4  # 16 samples / batch 4, 2 epochs

    def test_update_deterministic(self):
        results = []
        for _ in range(2):
            rng = np.random.default_rng(21)
            policy = ActorCritic(5, 2, rng)
            buf = self._filled_buffer(policy, rng)
            cfg = PpoConfig(batch_size=4, n_epochs=3)
            opt = Adam(policy.parameters(), lr=cfg.learning_rate)
            ppo_update(policy, opt, buf, cfg, np.random.default_rng(1))
            results.append(policy.state_arrays())
        for name in results[0]:
            np.testing.assert_array_equal(results[0][name], results[1][name])

    def test_non_finite_loss_raises(self, rng):
        policy = ActorCritic(5, 2, rng)
        obs, actions, logp, adv, ret = _synthetic_batch(policy, rng, batch=8)
        ret = np.full_like(ret, np.nan)
        with pytest.raises(RuntimeError, match="non-finite"):
            ppo_minibatch(policy, obs, actions, logp, adv, ret, PpoConfig())


def test_explained_variance():
    returns = np.array([1.0, 2.0, 3.0, 4.0])
    assert explained_variance(returns, returns) == pytest.approx(1.0)
    assert explained_variance(returns, np.zeros(4)) < 0.0 or explained_variance(
        returns, np.zeros(4)
    ) == pytest.approx(1 - np.var(returns - 0) / np.var(returns))
