"""Two-agent path-following environment.

A protagonist commands actuator offsets around the reference input while an
adversary drives rate- and amplitude-bounded offsets of the six aerodynamic
coefficients. Rewards are zero-sum. Episodes run for the nominal loop
duration of the chosen reference path unless a fault (loss of model
validity or leaving the abort radius) ends them early.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .disturbances import (
    DelayLine,
    DrydenGustModel,
    NoiseModel,
    clamp_perturbation,
    heading_to_inertial,
    sample_steady_wind,
)
from .dynamics import (
    ACT,
    ATT,
    POS,
    RATE,
    VEL,
    DynamicsModel,
    NonFiniteStateError,
    SimulationFault,
    air_data,
)
from .reference import MEAS_DIM, measurement_vector
from .vehicle import (
    PERTURBATION_AMPLITUDE_MAX,
    PERTURBATION_AMPLITUDE_MIN,
    PERTURBATION_RATE_MAX,
    PERTURBATION_RATE_MIN,
)

# Tracking reward shaping: sum of k1 * exp(-k2 |err|) over body rates,
# attitude, and position errors.
TRACKING_K1 = np.array([0.1] * 3 + [0.2] * 3 + [0.5] * 3)
TRACKING_K2 = np.array([1.0] * 3 + [5.0] * 3 + [0.37] * 3)
BARRIER_GAIN = 0.05        # control-margin log barrier
RATE_PENALTY_GAIN = 0.2    # squared normalized input change
BARRIER_EPS = 1e-6

# Measurement indices used by the tracking reward: rates, attitude, position.
TRACKED_MEAS = np.r_[0:3, 4:7, 7:10]
MEAS_PSI_INDEX = 6

PROT_OBS_DIM = 27
ADV_OBS_DIM = 19

REWARD_UPPER_BOUND = float(np.sum(TRACKING_K1)) + 4.0 * BARRIER_GAIN * math.log1p(BARRIER_EPS)

ADVERSARY_MODES = ("policy", "stochastic", "none")


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    wrapped = (x + math.pi) % (2.0 * math.pi) - math.pi
    return np.where(wrapped == -math.pi, math.pi, wrapped) if np.ndim(x) else (
        math.pi if wrapped == -math.pi else wrapped
    )


def normalize(value, lo, hi):
    """Affine map of [lo, hi] onto [-1, 1]."""
    return 2.0 * (np.asarray(value, float) - lo) / (np.asarray(hi, float) - lo) - 1.0


def denormalize(scaled, lo, hi):
    """Inverse of normalize."""
    return lo + (np.asarray(scaled, float) + 1.0) * (np.asarray(hi, float) - lo) / 2.0


def control_margin(delta_cmd, delta_ref_cmd, delta_min, delta_max) -> np.ndarray:
    """Per-channel distance to saturation: 1 at the reference input, 0 at a limit."""
    delta_cmd = np.asarray(delta_cmd, float)
    delta_ref_cmd = np.asarray(delta_ref_cmd, float)
    lo = np.asarray(delta_min, float)
    hi = np.asarray(delta_max, float)
    head = hi - delta_ref_cmd
    foot = delta_ref_cmd - lo
    if np.any(head <= 0.0) or np.any(foot <= 0.0):
        raise ValueError("reference input must lie strictly inside the actuator limits")
    upper = np.maximum(0.0, (hi - delta_cmd) / head)
    lower = np.maximum(0.0, (delta_cmd - lo) / foot)
    return np.minimum(upper, lower)


def tracking_reward(y_err) -> float:
    """Exponential shaping of the nine tracked error components."""
    return float(np.sum(TRACKING_K1 * np.exp(-TRACKING_K2 * np.abs(y_err))))


def input_reward(margin, delta_cmd_change_norm) -> tuple:
    """Log-barrier on the control margin and a squared input-rate penalty.

    Returns (barrier, rate) so callers can log the terms separately. The
    input change is expressed in normalized (limit-scaled) units.
    """
    barrier = BARRIER_GAIN * float(np.sum(np.log(np.asarray(margin, float) + BARRIER_EPS)))
    rate = -RATE_PENALTY_GAIN * float(np.sum(np.square(delta_cmd_change_norm)))
    return barrier, rate


@dataclass(frozen=True)
class RewardBreakdown:
    tracking: float
    input_barrier: float
    input_rate: float

    @property
    def total(self) -> float:
        return self.tracking + self.input_barrier + self.input_rate

    @property
    def adversary(self) -> float:
        return -self.total


def default_error_bounds() -> np.ndarray:
    """Symmetric normalization half-ranges for the 13 tracking-error channels."""
    return np.array(
        [2.0, 2.0, 2.0,                         # rates, rad/s
         10.0,                                  # airspeed, m/s
         math.pi / 2, math.pi / 2, math.pi,     # attitude, rad
         50.0, 50.0, 50.0,                      # position, m
         20.0, 20.0, 20.0]                      # specific force, m/s^2
    )


@dataclass
class EnvConfig:
    """Episode-level settings: action scaling, disturbances, termination."""

    action_scale: tuple = (0.25, 0.25, 0.25, 30.0)
    error_bounds: np.ndarray = field(default_factory=default_error_bounds)
    abort_radius: float = 100.0
    adversary: str = "policy"
    noise: bool = True
    wind: bool = True
    gust: bool = True
    delay: bool = True
    wind_speed_range: tuple = (3.0, 7.0)
    noise_sigma: tuple | None = None  # per-channel override of the noise model

    def __post_init__(self):
        self.error_bounds = np.asarray(self.error_bounds, float)
        if self.adversary not in ADVERSARY_MODES:
            raise ValueError(f"adversary must be one of {ADVERSARY_MODES}")

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        valid = {f.name for f in fields(cls)}
        unknown = set(data) - valid
        if unknown:
            raise ValueError(f"unknown env config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("action_scale", "wind_speed_range", "noise_sigma"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)


class PathFollowingEnv:
    """Single episodic environment instance; owns its RNG and disturbance state."""

    def __init__(self, catalog, cfg: EnvConfig | None = None, seed: int = 0,
                 model: DynamicsModel | None = None, noise_model: NoiseModel | None = None):
        if not catalog:
            raise ValueError("empty path catalog")
        self.catalog = list(catalog)
        self.cfg = cfg if cfg is not None else EnvConfig()
        self.model = model if model is not None else DynamicsModel()
        if noise_model is not None:
            self.noise_model = noise_model
        elif self.cfg.noise_sigma is not None:
            self.noise_model = NoiseModel(sigma=np.asarray(self.cfg.noise_sigma, float))
        else:
            self.noise_model = NoiseModel()
        self.rng = np.random.default_rng(seed)
        self.gust_model = DrydenGustModel()
        act = self.model.vehicle.act
        self._delta_lo = np.asarray(act.delta_min, float)
        self._delta_hi = np.asarray(act.delta_max, float)
        self._action_scale = np.asarray(self.cfg.action_scale, float)
        self._kappa_max = max((abs(p.kappa) for p in self.catalog if p.kappa != 0.0), default=1.0)
        self._gamma_max = max((abs(p.gamma) for p in self.catalog if p.gamma != 0.0), default=1.0)
        self._started = False
        self.done = True

    # -- episode lifecycle -------------------------------------------------

    def reset(self, path_id: int | None = None):
        """Start a new episode; returns (protagonist_obs, adversary_obs).

        Reset draws, in fixed order: path (when not given), steady wind,
        input delay. The state starts exactly on the reference.
        """
        if path_id is None:
            path_id = int(self.rng.integers(len(self.catalog)))
        if not 0 <= path_id < len(self.catalog):
            raise ValueError(f"unknown path id {path_id}")
        self.path_id = path_id
        self.path = self.catalog[path_id]
        self.k = 0
        self.x = self.path.x_ref[0].copy()
        self.delta_C = np.zeros(6)
        self.steady_wind = (
            sample_steady_wind(self.rng, self.cfg.wind_speed_range)
            if self.cfg.wind else np.zeros(3)
        )
        self.gust_model.reset()
        delay_steps = int(self.rng.integers(2)) if self.cfg.delay else 0
        self.delay_line = DelayLine(delay_steps, self.path.delta_cmd_ref[0])
        self.delta_cmd_prev = self.path.delta_cmd_ref[0].copy()
        self.margin_prev = np.ones(4)
        self._wind_total = self.steady_wind.copy()
        self.done = False
        self.fault = None
        self.clip_count = 0
        self._started = True

        air = air_data(self.x[VEL], self.x[ATT], self._wind_total, self.x[RATE],
                       self.x[ACT][3], self.model.vehicle)
        self._last_V_r = air.V_r
        y_true = self._measure(air)
        self.last_y_true = y_true
        return self._observations(y_true)

    @property
    def n_steps(self) -> int:
        return self.path.n_steps

    def step(self, a_mu, a_eta=None):
        """Advance one step under both agents' normalized actions.

        Returns ((obs_mu, obs_eta), RewardBreakdown, done, info).
        """
        if not self._started or self.done:
            raise RuntimeError("step() on a finished episode; call reset()")
        a_mu = np.clip(np.asarray(a_mu, float), -1.0, 1.0)

        ref_cmd = self.path.delta_cmd_ref[self.k]
        delta_cmd = np.clip(ref_cmd + a_mu * self._action_scale, self._delta_lo, self._delta_hi)
        margin = control_margin(delta_cmd, ref_cmd, self._delta_lo, self._delta_hi)
        applied_cmd = self.delay_line.push_pop(delta_cmd)

        raw_step = self._adversary_step(a_eta)
        self.delta_C = clamp_perturbation(self.delta_C, raw_step)

        if self.cfg.gust:
            gust = self.gust_model.step(self._last_V_r, self.path.dt, self.rng)
            gust_inertial = heading_to_inertial(gust, float(self.x[ATT][2]))
        else:
            gust_inertial = np.zeros(3)
        self._wind_total = self.steady_wind + gust_inertial

        cmd_change = 2.0 * (delta_cmd - self.delta_cmd_prev) / (self._delta_hi - self._delta_lo)
        self.delta_cmd_prev = delta_cmd
        self.margin_prev = margin

        try:
            self.x = self.model.rk4_step(
                self.x, applied_cmd, self._wind_total, self.delta_C, self.path.dt
            )
            if not math.isfinite(float(np.sum(self.x))):
                raise NonFiniteStateError("integration diverged")
            self.k += 1
            air = air_data(self.x[VEL], self.x[ATT], self._wind_total, self.x[RATE],
                           self.x[ACT][3], self.model.vehicle)
        except SimulationFault as fault:
            self.done = True
            self.fault = type(fault).__name__
            reward = RewardBreakdown(0.0, 0.0, 0.0)
            info = self._info(margin, delta_cmd, applied_cmd, None, math.nan)
            return self._last_obs, reward, True, info

        self._last_V_r = air.V_r
        y_true = self._measure(air)
        self.last_y_true = y_true
        y_err_true = self._tracking_error(y_true)

        barrier, rate = input_reward(margin, cmd_change)
        reward = RewardBreakdown(
            tracking=tracking_reward(y_err_true[TRACKED_MEAS]),
            input_barrier=barrier,
            input_rate=rate,
        )

        pos_error = float(np.linalg.norm(self.x[POS] - self.path.x_ref[self.k, POS]))
        if pos_error > self.cfg.abort_radius:
            self.done = True
            self.fault = "AbortRadius"
        if self.k == self.path.n_steps:
            self.done = True

        obs = self._observations(y_true)
        info = self._info(margin, delta_cmd, applied_cmd, y_true, pos_error)
        return obs, reward, self.done, info

    # -- internals ---------------------------------------------------------

    def _adversary_step(self, a_eta) -> np.ndarray:
        mode = self.cfg.adversary
        if mode == "none":
            return np.zeros(6)
        if mode == "stochastic":
            return self.rng.uniform(PERTURBATION_RATE_MIN, PERTURBATION_RATE_MAX)
        if a_eta is None:
            raise ValueError("adversary mode 'policy' requires an adversary action")
        a_eta = np.clip(np.asarray(a_eta, float), -1.0, 1.0)
        return denormalize(a_eta, PERTURBATION_RATE_MIN, PERTURBATION_RATE_MAX)

    def _measure(self, air) -> np.ndarray:
        f_b = self.model.specific_force(self.x, self._wind_total, self.delta_C)
        return measurement_vector(self.x, air.V_r, f_b)

    def _tracking_error(self, y) -> np.ndarray:
        err = y - self.path.y_ref[self.k]
        err[MEAS_PSI_INDEX] = wrap_angle(err[MEAS_PSI_INDEX])
        return err

    def _observations(self, y_true):
        if self.cfg.noise:
            y_meas = self.noise_model.apply(y_true, self.rng)
        else:
            y_meas = y_true
        y_err = self._tracking_error(y_meas)
        err_scaled = y_err / self.cfg.error_bounds

        k = self.k
        obs_mu = np.concatenate([
            err_scaled,
            normalize(self.path.delta_cmd_ref[k], self._delta_lo, self._delta_hi),
            normalize(self.delta_cmd_prev, self._delta_lo, self._delta_hi),
            2.0 * self.margin_prev - 1.0,
            [self.path.kappa_k[k] / self._kappa_max, self.path.gamma_k[k] / self._gamma_max],
        ])
        obs_eta = np.concatenate([
            err_scaled,
            normalize(self.delta_C, PERTURBATION_AMPLITUDE_MIN, PERTURBATION_AMPLITUDE_MAX),
        ])
        self.clip_count += int(np.sum(np.abs(obs_mu) > 1.0)) + int(np.sum(np.abs(obs_eta) > 1.0))
        obs_mu = np.clip(obs_mu, -1.0, 1.0)
        obs_eta = np.clip(obs_eta, -1.0, 1.0)
        self._last_obs = (obs_mu, obs_eta)
        return self._last_obs

    def _info(self, margin, delta_cmd, applied_cmd, y_true, pos_error) -> dict:
        return {
            "k": self.k,
            "path_id": self.path_id,
            "fault": self.fault,
            "margin": margin.copy(),
            "delta_cmd": delta_cmd.copy(),
            "applied_cmd": np.asarray(applied_cmd, float).copy(),
            "delta_C": self.delta_C.copy(),
            "y_true": None if y_true is None else y_true.copy(),
            "pos_error": pos_error,
            "clip_count": self.clip_count,
        }

    # -- checkpoint/resume support ------------------------------------------

    def get_state(self) -> dict:
        return {
            "path_id": self.path_id,
            "k": self.k,
            "x": self.x.tolist(),
            "delta_C": self.delta_C.tolist(),
            "steady_wind": self.steady_wind.tolist(),
            "delay_steps": self.delay_line.delay_steps,
            "delay_buffer": self.delay_line.get_state(),
            "gust": self.gust_model.get_state(),
            "delta_cmd_prev": self.delta_cmd_prev.tolist(),
            "margin_prev": self.margin_prev.tolist(),
            "wind_total": self._wind_total.tolist(),
            "last_V_r": self._last_V_r,
            "done": self.done,
            "fault": self.fault,
            "clip_count": self.clip_count,
            "last_obs_mu": self._last_obs[0].tolist(),
            "last_obs_eta": self._last_obs[1].tolist(),
            "rng_state": self.rng.bit_generator.state,
        }

    def set_state(self, state: dict) -> None:
        self.path_id = state["path_id"]
        self.path = self.catalog[self.path_id]
        self.k = state["k"]
        self.x = np.asarray(state["x"], float)
        self.delta_C = np.asarray(state["delta_C"], float)
        self.steady_wind = np.asarray(state["steady_wind"], float)
        self.delay_line = DelayLine(state["delay_steps"], np.zeros(4))
        self.delay_line.set_state(state["delay_buffer"])
        self.gust_model.set_state(state["gust"])
        self.delta_cmd_prev = np.asarray(state["delta_cmd_prev"], float)
        self.margin_prev = np.asarray(state["margin_prev"], float)
        self._wind_total = np.asarray(state["wind_total"], float)
        self._last_V_r = state["last_V_r"]
        self.done = state["done"]
        self.fault = state["fault"]
        self.clip_count = state["clip_count"]
        # Restore the emitted observations rather than recomputing them:
        # recomputation would redraw measurement noise and desync the stream.
        self._last_obs = (
            np.asarray(state["last_obs_mu"], float),
            np.asarray(state["last_obs_eta"], float),
        )
        self.rng.bit_generator.state = state["rng_state"]
        self._started = True
