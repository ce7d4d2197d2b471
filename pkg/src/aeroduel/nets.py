"""Minimal dense networks with explicit reverse-mode gradients.

Both agents use the same architecture: separate actor and critic MLPs with
two 64-unit tanh hidden layers, plus a state-independent action log-std
vector on the actor. Everything is float64 numpy; gradients are hand-rolled
and verified against finite differences in the test suite.
"""

from __future__ import annotations

import json
import math

import numpy as np

HIDDEN = 64
LOG_2PI = math.log(2.0 * math.pi)


def orthogonal_init(rng, rows: int, cols: int, gain: float) -> np.ndarray:
    """Orthogonal weight matrix scaled by gain."""
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """Input -> 64 -> 64 -> output with tanh hidden activations."""

    def __init__(self, in_dim: int, out_dim: int, rng, out_gain: float):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W1 = orthogonal_init(rng, in_dim, HIDDEN, math.sqrt(2.0))
        self.b1 = np.zeros(HIDDEN)
        self.W2 = orthogonal_init(rng, HIDDEN, HIDDEN, math.sqrt(2.0))
        self.b2 = np.zeros(HIDDEN)
        self.W3 = orthogonal_init(rng, HIDDEN, out_dim, out_gain)
        self.b3 = np.zeros(out_dim)

    def parameters(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2,
                "W3": self.W3, "b3": self.b3}

    def forward(self, x):
        """Batched forward pass; returns (output, cache for backward)."""
        x = np.atleast_2d(np.asarray(x, float))
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {x.shape[1]}")
        h1 = np.tanh(x @ self.W1 + self.b1)
        h2 = np.tanh(h1 @ self.W2 + self.b2)
        out = h2 @ self.W3 + self.b3
        return out, (x, h1, h2)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, dout) -> dict:
        """Gradients of a scalar loss with upstream dL/dout; exact chain rule."""
        x, h1, h2 = cache
        dout = np.atleast_2d(np.asarray(dout, float))
        grads = {}
        grads["W3"] = h2.T @ dout
        grads["b3"] = dout.sum(axis=0)
        dh2 = dout @ self.W3.T
        dz2 = dh2 * (1.0 - h2 * h2)
        grads["W2"] = h1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ self.W2.T
        dz1 = dh1 * (1.0 - h1 * h1)
        grads["W1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return grads


def gaussian_log_prob(mean, log_std, action) -> np.ndarray:
    """Diagonal Gaussian log density per batch row."""
    mean = np.atleast_2d(mean)
    action = np.atleast_2d(action)
    z = (action - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - 0.5 * mean.shape[1] * LOG_2PI


def gaussian_entropy(log_std) -> float:
    """Entropy of the diagonal Gaussian; depends only on the log-stds."""
    d = len(log_std)
    return float(np.sum(log_std) + 0.5 * d * (LOG_2PI + 1.0))


class ActorCritic:
    """One agent's policy: Gaussian actor plus value critic, separate trunks."""

    def __init__(self, obs_dim: int, act_dim: int, rng):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.actor = Mlp(obs_dim, act_dim, rng, out_gain=0.01)
        self.critic = Mlp(obs_dim, 1, rng, out_gain=1.0)
        self.log_std = np.zeros(act_dim)

    def parameters(self) -> dict:
        params = {f"actor.{k}": v for k, v in self.actor.parameters().items()}
        params.update({f"critic.{k}": v for k, v in self.critic.parameters().items()})
        params["log_std"] = self.log_std
        return params

    def sample(self, obs, rng):
        """Stochastic actions for a batch of observations.

        Returns (action, log_prob, value); the raw sample keeps its density,
        callers clip to [-1, 1] before execution.
        """
        mean, _ = self.actor.forward(obs)
        std = np.exp(self.log_std)
        action = mean + std * rng.standard_normal(mean.shape)
        logp = gaussian_log_prob(mean, self.log_std, action)
        value = self.value(obs)
        return action, logp, value

    def mean_action(self, obs) -> np.ndarray:
        out, _ = self.actor.forward(obs)
        return out

    def value(self, obs) -> np.ndarray:
        out, _ = self.critic.forward(obs)
        return out[:, 0]

    # -- serialization ------------------------------------------------------

    def state_arrays(self) -> dict:
        return {name: arr.copy() for name, arr in self.parameters().items()}

    def load_state_arrays(self, arrays: dict) -> None:
        params = self.parameters()
        if set(arrays) != set(params):
            missing = set(params) ^ set(arrays)
            raise ValueError(f"checkpoint parameter mismatch: {sorted(missing)}")
        for name, value in arrays.items():
            value = np.asarray(value, float)
            if value.shape != params[name].shape:
                raise ValueError(
                    f"shape mismatch for {name}: file {value.shape}, model {params[name].shape}"
                )
            params[name][...] = value


CHECKPOINT_FORMAT = "aeroduel-policy-v1"


def save_checkpoint(policy: ActorCritic, path_or_fh, extra: dict | None = None) -> None:
    """JSON checkpoint: named arrays with shapes; floats round-trip bit-exactly."""
    doc = {
        "format_version": CHECKPOINT_FORMAT,
        "obs_dim": policy.obs_dim,
        "act_dim": policy.act_dim,
        "arrays": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in policy.parameters().items()
        },
    }
    if extra:
        doc["extra"] = extra
    if hasattr(path_or_fh, "write"):
        json.dump(doc, path_or_fh)
    else:
        with open(path_or_fh, "w") as fh:
            json.dump(doc, fh)


def load_checkpoint(path_or_fh, rng=None) -> ActorCritic:
    if hasattr(path_or_fh, "read"):
        doc = json.load(path_or_fh)
    else:
        with open(path_or_fh) as fh:
            doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_FORMAT:
        raise ValueError(f"unrecognized checkpoint format: {doc.get('format_version')!r}")
    policy = ActorCritic(doc["obs_dim"], doc["act_dim"],
                         rng if rng is not None else np.random.default_rng(0))
    arrays = {
        name: np.asarray(spec["data"], float).reshape(spec["shape"])
        for name, spec in doc["arrays"].items()
    }
    policy.load_state_arrays(arrays)
    return policy


class Adam:
    """Standard Adam with bias correction; state per parameter name."""

    def __init__(self, params: dict, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def get_state(self) -> dict:
        return {
            "t": self.t,
            "m": {k: v.tolist() for k, v in self.m.items()},
            "v": {k: v.tolist() for k, v in self.v.items()},
        }

    def set_state(self, state: dict) -> None:
        self.t = state["t"]
        for name in self.m:
            self.m[name][...] = np.asarray(state["m"][name], float).reshape(self.m[name].shape)
            self.v[name][...] = np.asarray(state["v"][name], float).reshape(self.v[name].shape)


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale all gradients in place so their joint norm is at most max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
