"""Clipped-surrogate policy optimization on rollout buffers.

The update maximizes E[min(ratio * adv, clip(ratio) * adv)] minus a
value-error term, with optional entropy bonus, over shuffled minibatches.
Gradients are assembled analytically from the Gaussian density and the MLP
backward passes; no autograd framework is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .nets import ActorCritic, Adam, clip_grad_norm, gaussian_entropy, gaussian_log_prob


@dataclass
class PpoConfig:
    learning_rate: float = 3e-4
    n_steps: int = 2048
    batch_size: int = 64
    n_epochs: int = 10
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_range: float = 0.2
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    n_envs: int = 8

    @classmethod
    def from_dict(cls, data: dict) -> "PpoConfig":
        valid = {f.name for f in fields(cls)}
        unknown = set(data) - valid
        if unknown:
            raise ValueError(f"unknown ppo config keys: {sorted(unknown)}")
        return cls(**data)


class RolloutBuffer:
    """Fixed-size on-policy storage over (n_steps, n_envs)."""

    def __init__(self, n_steps: int, n_envs: int, obs_dim: int, act_dim: int):
        self.n_steps = n_steps
        self.n_envs = n_envs
        self.obs = np.zeros((n_steps, n_envs, obs_dim))
        self.actions = np.zeros((n_steps, n_envs, act_dim))
        self.log_probs = np.zeros((n_steps, n_envs))
        self.rewards = np.zeros((n_steps, n_envs))
        self.values = np.zeros((n_steps, n_envs))
        self.dones = np.zeros((n_steps, n_envs))
        self.advantages = np.zeros((n_steps, n_envs))
        self.returns = np.zeros((n_steps, n_envs))
        self.pos = 0

    def add(self, obs, actions, log_probs, rewards, values, dones) -> None:
        if self.pos >= self.n_steps:
            raise RuntimeError("rollout buffer full")
        t = self.pos
        self.obs[t] = obs
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.rewards[t] = rewards
        self.values[t] = values
        self.dones[t] = dones
        self.pos += 1

    def finalize(self, bootstrap_values, gamma: float, lam: float) -> None:
        if self.pos != self.n_steps:
            raise RuntimeError(f"buffer has {self.pos} of {self.n_steps} steps")
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones, bootstrap_values, gamma, lam
        )

    def flattened(self):
        """(obs, actions, log_probs, advantages, returns) as flat batches."""
        n = self.n_steps * self.n_envs
        return (
            self.obs.reshape(n, -1),
            self.actions.reshape(n, -1),
            self.log_probs.reshape(n),
            self.advantages.reshape(n),
            self.returns.reshape(n),
        )


def compute_gae(rewards, values, dones, bootstrap_values, gamma: float, lam: float):
    """Generalized advantage estimation over (T, n_envs) arrays.

    dones[t] marks transitions that ended an episode; the value after a done
    never leaks across the boundary. bootstrap_values are V(s_T) per env for
    the step after the buffer.
    """
    rewards = np.asarray(rewards, float)
    values = np.asarray(values, float)
    dones = np.asarray(dones, float)
    T = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    last_adv = np.zeros(rewards.shape[1] if rewards.ndim > 1 else ())
    next_values = np.asarray(bootstrap_values, float)
    for t in reversed(range(T)):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * not_done - values[t]
        last_adv = delta + gamma * lam * not_done * last_adv
        advantages[t] = last_adv
        next_values = values[t]
    return advantages, advantages + values


def clipped_surrogate(ratio, advantages, clip_range: float):
    """Per-sample clipped objective and the mask of samples whose gradient
    still flows through the ratio."""
    ratio = np.asarray(ratio, float)
    advantages = np.asarray(advantages, float)
    clipped = np.clip(ratio, 1.0 - clip_range, 1.0 + clip_range)
    objective = np.minimum(ratio * advantages, clipped * advantages)
    active = np.where(
        advantages >= 0.0, ratio <= 1.0 + clip_range, ratio >= 1.0 - clip_range
    )
    return objective, active


def explained_variance(returns, values) -> float:
    var = float(np.var(returns))
    if var == 0.0:
        return float("nan")
    return 1.0 - float(np.var(returns - values)) / var


def ppo_minibatch(policy: ActorCritic, obs, actions, logp_old, advantages, returns,
                  cfg: PpoConfig):
    """Loss and analytic gradients for one minibatch.

    Advantages are normalized here, per minibatch. Returns (loss, grads,
    stats) without touching the parameters.
    """
    B = obs.shape[0]
    adv = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    mean, actor_cache = policy.actor.forward(obs)
    std = np.exp(policy.log_std)
    logp = gaussian_log_prob(mean, policy.log_std, actions)
    ratio = np.exp(logp - logp_old)
    objective, active = clipped_surrogate(ratio, adv, cfg.clip_range)
    policy_loss = -float(np.mean(objective))

    values, critic_cache = policy.critic.forward(obs)
    v = values[:, 0]
    value_loss = float(np.mean((v - returns) ** 2))
    entropy = gaussian_entropy(policy.log_std)

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not np.isfinite(loss):
        raise RuntimeError(
            f"non-finite PPO loss (policy={policy_loss}, value={value_loss}, "
            f"ratio range [{ratio.min()}, {ratio.max()}])"
        )

    # d(policy_loss)/d(logp): the min passes gradient only where the
    # unclipped branch governs; d(ratio)/d(logp) = ratio.
    dlogp = -(adv * ratio * active) / B
    z = (actions - mean) / (std * std)
    dmean = dlogp[:, None] * z
    actor_grads = policy.actor.backward(actor_cache, dmean)
    dlog_std = np.sum(dlogp[:, None] * (((actions - mean) / std) ** 2 - 1.0), axis=0)
    dlog_std -= cfg.entropy_coef * np.ones_like(policy.log_std)

    dv = (2.0 * cfg.value_coef / B) * (v - returns)
    critic_grads = policy.critic.backward(critic_cache, dv[:, None])

    grads = {f"actor.{k}": g for k, g in actor_grads.items()}
    grads.update({f"critic.{k}": g for k, g in critic_grads.items()})
    grads["log_std"] = dlog_std

    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_range)),
        "approx_kl": float(np.mean(logp_old - logp)),
    }
    return loss, grads, stats


def ppo_update(policy: ActorCritic, optimizer: Adam, buffer: RolloutBuffer,
               cfg: PpoConfig, rng) -> dict:
    """Run n_epochs of shuffled minibatch updates; returns averaged stats."""
    obs, actions, logp_old, advantages, returns = buffer.flattened()
    n = obs.shape[0]
    ev = explained_variance(returns, buffer.values.reshape(n))
    params = policy.parameters()
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
              "clip_fraction": 0.0, "approx_kl": 0.0}
    n_batches = 0
    for _ in range(cfg.n_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads, stats = ppo_minibatch(
                policy, obs[idx], actions[idx], logp_old[idx],
                advantages[idx], returns[idx], cfg,
            )
            clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(params, grads)
            for key in totals:
                totals[key] += stats[key]
            n_batches += 1
    out = {key: value / n_batches for key, value in totals.items()}
    out["explained_variance"] = ev
    out["n_minibatches"] = n_batches
    return out
