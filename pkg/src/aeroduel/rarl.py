"""Alternating two-player training loop.

Each iteration updates the protagonist with the adversary frozen, then the
adversary with the protagonist frozen. Both policies act stochastically
during every rollout; only the trainee's tuples are stored, with the
adversary's rewards negated. With a non-trainable adversary mode the loop
degenerates to plain PPO on the protagonist.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .env import ADV_OBS_DIM, PROT_OBS_DIM, PathFollowingEnv
from .nets import ActorCritic, Adam, load_checkpoint, save_checkpoint
from .ppo import PpoConfig, RolloutBuffer, ppo_update

METRIC_FIELDS = [
    "iteration", "role", "mean_ep_reward", "std_ep_reward", "n_episodes",
    "mean_ep_length", "policy_loss", "value_loss", "entropy",
    "clip_fraction", "approx_kl", "explained_variance", "env_steps",
]

PROT_ACT_DIM = 4
ADV_ACT_DIM = 6


@dataclass
class RarlConfig:
    n_iter: int = 100
    protagonist_first: bool = True
    checkpoint_every: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RarlConfig":
        valid = {f.name for f in fields(cls)}
        unknown = set(data) - valid
        if unknown:
            raise ValueError(f"unknown rarl config keys: {sorted(unknown)}")
        return cls(**data)


class RarlTrainer:
    """Owns both policies, their optimizers, and a fixed set of environments."""

    def __init__(self, envs, ppo_cfg: PpoConfig | None = None,
                 rarl_cfg: RarlConfig | None = None, seed: int = 0):
        if not envs:
            raise ValueError("need at least one environment")
        modes = {env.cfg.adversary for env in envs}
        if len(modes) != 1:
            raise ValueError(f"environments disagree on adversary mode: {modes}")
        self.adversary_mode = modes.pop()
        self.envs = list(envs)
        self.ppo_cfg = ppo_cfg if ppo_cfg is not None else PpoConfig(n_envs=len(envs))
        if self.ppo_cfg.n_envs != len(envs):
            raise ValueError(
                f"ppo config expects {self.ppo_cfg.n_envs} envs, got {len(envs)}"
            )
        self.rarl_cfg = rarl_cfg if rarl_cfg is not None else RarlConfig()
        init_rng = np.random.default_rng(seed)
        self.mu = ActorCritic(PROT_OBS_DIM, PROT_ACT_DIM, init_rng)
        self.eta = ActorCritic(ADV_OBS_DIM, ADV_ACT_DIM, init_rng)
        self.mu_opt = Adam(self.mu.parameters(), lr=self.ppo_cfg.learning_rate)
        self.eta_opt = Adam(self.eta.parameters(), lr=self.ppo_cfg.learning_rate)
        self.rng = np.random.default_rng(seed + 1)
        self.iteration = 0
        self.env_steps = 0
        self.history: list[dict] = []
        self._obs = [env.reset() for env in self.envs]
        self._ep_return = np.zeros(len(envs))
        self._ep_length = np.zeros(len(envs), dtype=int)
        self._phase_episodes: list[tuple[float, int]] = []

    @property
    def trains_adversary(self) -> bool:
        return self.adversary_mode == "policy"

    # -- rollout collection --------------------------------------------------

    def collect_rollouts(self, role: str) -> RolloutBuffer:
        """Fill one buffer acting with both policies, storing the role's tuples."""
        cfg = self.ppo_cfg
        trainee = self.mu if role == "mu" else self.eta
        buffer = RolloutBuffer(cfg.n_steps, len(self.envs), trainee.obs_dim, trainee.act_dim)
        sign = 1.0 if role == "mu" else -1.0

        for _ in range(cfg.n_steps):
            obs_mu = np.stack([pair[0] for pair in self._obs])
            obs_eta = np.stack([pair[1] for pair in self._obs])
            a_mu, logp_mu, _ = self.mu.sample(obs_mu, self.rng)
            if self.adversary_mode == "policy":
                a_eta, logp_eta, _ = self.eta.sample(obs_eta, self.rng)
            else:
                a_eta, logp_eta = None, None

            if role == "mu":
                store_obs, store_act, store_logp = obs_mu, a_mu, logp_mu
            else:
                store_obs, store_act, store_logp = obs_eta, a_eta, logp_eta
            values = trainee.value(store_obs)

            rewards = np.empty(len(self.envs))
            dones = np.zeros(len(self.envs))
            for i, env in enumerate(self.envs):
                eta_i = None if a_eta is None else np.clip(a_eta[i], -1.0, 1.0)
                pair, breakdown, done, info = env.step(np.clip(a_mu[i], -1.0, 1.0), eta_i)
                r = sign * breakdown.total
                self._ep_return[i] += breakdown.total
                self._ep_length[i] += 1
                self.env_steps += 1
                if done:
                    if info["fault"] is None:
                        # Horizon truncation: bootstrap the cut-off return
                        # with the trainee's value of the terminal obs.
                        final = pair[0] if role == "mu" else pair[1]
                        r += cfg.gamma * float(trainee.value(final[None])[0])
                    self._phase_episodes.append((float(self._ep_return[i]), int(self._ep_length[i])))
                    self._ep_return[i] = 0.0
                    self._ep_length[i] = 0
                    pair = env.reset()
                self._obs[i] = pair
                rewards[i] = r
                dones[i] = float(done)
            buffer.add(store_obs, store_act, store_logp, rewards, values, dones)

        final_obs = np.stack([pair[0 if role == "mu" else 1] for pair in self._obs])
        buffer.finalize(trainee.value(final_obs), cfg.gamma, cfg.gae_lambda)
        return buffer

    # -- training loop --------------------------------------------------------

    def _train_phase(self, role: str) -> dict:
        self._phase_episodes = []
        buffer = self.collect_rollouts(role)
        policy = self.mu if role == "mu" else self.eta
        optimizer = self.mu_opt if role == "mu" else self.eta_opt
        stats = ppo_update(policy, optimizer, buffer, self.ppo_cfg, self.rng)

        episodes = self._phase_episodes
        sign = 1.0 if role == "mu" else -1.0
        returns = [sign * ep[0] for ep in episodes]
        row = {
            "iteration": self.iteration,
            "role": "protagonist" if role == "mu" else "adversary",
            "mean_ep_reward": float(np.mean(returns)) if returns else math.nan,
            "std_ep_reward": float(np.std(returns)) if returns else math.nan,
            "n_episodes": len(returns),
            "mean_ep_length": float(np.mean([ep[1] for ep in episodes])) if episodes else math.nan,
            "env_steps": self.env_steps,
        }
        row.update({k: stats[k] for k in ("policy_loss", "value_loss", "entropy",
                                          "clip_fraction", "approx_kl", "explained_variance")})
        self.history.append(row)
        return row

    def train(self, n_iter: int | None = None, run_dir=None) -> list[dict]:
        """Run the alternating loop; checkpoints land under run_dir when given."""
        n_iter = self.rarl_cfg.n_iter if n_iter is None else n_iter
        run_dir = Path(run_dir) if run_dir is not None else None
        for _ in range(n_iter):
            self.iteration += 1
            self._train_phase("mu")
            if self.trains_adversary:
                self._train_phase("eta")
            if run_dir is not None and self.iteration % self.rarl_cfg.checkpoint_every == 0:
                self.save_state(run_dir)
        return self.history

    # -- persistence -----------------------------------------------------------

    def write_metrics_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
            writer.writeheader()
            for row in self.history:
                writer.writerow({k: repr(float(v)) if isinstance(v, float) else v
                                 for k, v in row.items()})

    def save_state(self, run_dir) -> None:
        run_dir = Path(run_dir)
        ckpt_dir = run_dir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        tag = f"iter_{self.iteration:04d}"
        save_checkpoint(self.mu, ckpt_dir / f"{tag}_protagonist.json",
                        extra={"iteration": self.iteration, "role": "protagonist"})
        save_checkpoint(self.eta, ckpt_dir / f"{tag}_adversary.json",
                        extra={"iteration": self.iteration, "role": "adversary"})
        state = {
            "iteration": self.iteration,
            "env_steps": self.env_steps,
            "rng_state": self.rng.bit_generator.state,
            "mu_opt": self.mu_opt.get_state(),
            "eta_opt": self.eta_opt.get_state(),
            "envs": [env.get_state() for env in self.envs],
            "obs_mu": [pair[0].tolist() for pair in self._obs],
            "obs_eta": [pair[1].tolist() for pair in self._obs],
            "ep_return": self._ep_return.tolist(),
            "ep_length": self._ep_length.tolist(),
            "history": self.history,
        }
        with open(run_dir / "state.json", "w") as fh:
            json.dump(state, fh)
        (run_dir / "logs").mkdir(exist_ok=True)
        self.write_metrics_csv(run_dir / "logs" / "metrics.csv")

    def load_state(self, run_dir) -> None:
        """Restore a saved run into this trainer (same envs/config shape)."""
        run_dir = Path(run_dir)
        with open(run_dir / "state.json") as fh:
            state = json.load(fh)
        self.iteration = state["iteration"]
        self.env_steps = state["env_steps"]
        self.rng.bit_generator.state = state["rng_state"]
        tag = f"iter_{self.iteration:04d}"
        self.mu = load_checkpoint(run_dir / "checkpoints" / f"{tag}_protagonist.json")
        self.eta = load_checkpoint(run_dir / "checkpoints" / f"{tag}_adversary.json")
        self.mu_opt = Adam(self.mu.parameters(), lr=self.ppo_cfg.learning_rate)
        self.eta_opt = Adam(self.eta.parameters(), lr=self.ppo_cfg.learning_rate)
        self.mu_opt.set_state(state["mu_opt"])
        self.eta_opt.set_state(state["eta_opt"])
        for env, env_state in zip(self.envs, state["envs"]):
            env.set_state(env_state)
        self._obs = [
            (np.asarray(mu, float), np.asarray(eta, float))
            for mu, eta in zip(state["obs_mu"], state["obs_eta"])
        ]
        self._ep_return = np.asarray(state["ep_return"], float)
        self._ep_length = np.asarray(state["ep_length"], int)
        self.history = state["history"]


def make_envs(catalog, env_cfg, n_envs: int, seed: int, model=None) -> list:
    """Independent env instances with per-instance seeds."""
    return [
        PathFollowingEnv(catalog, env_cfg, seed=seed + 1000 * i, model=model)
        for i in range(n_envs)
    ]
