"""Stochastic disturbances: sensor noise, steady wind, Dryden gusts, input
delay, and the amplitude/rate clamp for aerodynamic coefficient offsets.

Every generator owns no RNG; callers pass a numpy Generator so each
environment instance keeps an independent, reproducible stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .vehicle import (
    PERTURBATION_AMPLITUDE_MAX,
    PERTURBATION_AMPLITUDE_MIN,
    PERTURBATION_RATE_MAX,
    PERTURBATION_RATE_MIN,
)

KNOT = 0.514444  # m/s


def default_noise_sigma() -> np.ndarray:
    """Per-channel measurement noise std devs for the 13-vector y."""
    return np.array(
        [0.01, 0.01, 0.01,    # body rates, rad/s
         2.0,                 # airspeed, m/s
         0.01, 0.01, 0.1,     # roll, pitch, yaw, rad
         0.03, 0.03, 0.01,    # x, y, z position, m
         0.03, 0.03, 0.03]    # body specific force, m/s^2
    )


@dataclass
class NoiseModel:
    sigma: np.ndarray = field(default_factory=default_noise_sigma)

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, float)
        if np.any(self.sigma < 0.0):
            raise ValueError("noise std devs must be nonnegative")

    def apply(self, y_true, rng) -> np.ndarray:
        return np.asarray(y_true, float) + rng.standard_normal(self.sigma.shape) * self.sigma


def sample_steady_wind(rng, speed_range=(3.0, 7.0)) -> np.ndarray:
    """Horizontal steady wind: uniform magnitude and uniform heading."""
    magnitude = rng.uniform(speed_range[0], speed_range[1])
    heading = rng.uniform(0.0, 2.0 * math.pi)
    return np.array([magnitude * math.cos(heading), magnitude * math.sin(heading), 0.0])


class DrydenGustModel:
    """Low-altitude Dryden shaping filters, zero-order-hold discretized.

    Longitudinal gust is first order, lateral and vertical are second
    order. Filters are driven by discrete white noise of variance 1/dt (the
    band-limited equivalent of unit-intensity continuous noise), so the
    stationary output standard deviations are sigma_u, sigma_v, sigma_w.
    The length/intensity schedule is evaluated at a fixed reference
    altitude and mean wind speed at 20 ft.
    """

    def __init__(self, W20_kt: float = 30.0, altitude: float = 50.0):
        self.W20 = W20_kt * KNOT
        self.altitude = altitude
        scale = 0.177 + 0.000823 * altitude
        self.sigma_w = 0.1 * self.W20
        self.sigma_u = self.sigma_w / scale**0.4
        self.sigma_v = self.sigma_u
        self.L_w = altitude
        self.L_u = altitude / scale**1.2
        self.L_v = self.L_u
        self.reset()

    def reset(self) -> None:
        self._x_u = 0.0
        self._x_v = np.zeros(2)
        self._x_w = np.zeros(2)

    # State access for checkpoint/resume.
    def get_state(self) -> list:
        return [self._x_u, *self._x_v.tolist(), *self._x_w.tolist()]

    def set_state(self, state) -> None:
        self._x_u = float(state[0])
        self._x_v = np.array(state[1:3], float)
        self._x_w = np.array(state[3:5], float)

    @staticmethod
    def _first_order(T: float, K: float, dt: float):
        a_d = math.exp(-dt / T)
        return a_d, (1.0 - a_d) * K

    @staticmethod
    def _second_order(T: float, K: float, dt: float):
        # A has a repeated eigenvalue lam = -1/T, so exp(A dt) and the ZOH
        # input integral have closed forms via the nilpotent part N = A - lam I.
        lam = -1.0 / T
        e = math.exp(lam * dt)
        A_d = e * np.array([[1.0 + dt / T, dt], [-dt / T**2, 1.0 - dt / T]])
        i1 = (e - 1.0) / lam
        i2 = (dt * e) / lam - (e - 1.0) / lam**2
        B_d = np.array([i1 * 0.0 + i2 * 1.0, i1 * 1.0 + i2 * (-1.0 / T)])
        C = np.array([K / T**2, K * math.sqrt(3.0) / T])
        return A_d, B_d, C

    def _coefficients(self, V_r: float, dt: float):
        T_u = self.L_u / V_r
        T_v = self.L_v / V_r
        T_w = self.L_w / V_r
        return (
            self._first_order(T_u, self.sigma_u * math.sqrt(2.0 * T_u), dt),
            self._second_order(T_v, self.sigma_v * math.sqrt(T_v), dt),
            self._second_order(T_w, self.sigma_w * math.sqrt(T_w), dt),
        )

    def step(self, V_r: float, dt: float, rng) -> np.ndarray:
        """Advance the three filters one step; returns the gust triple (m/s)."""
        if V_r <= 0.0:
            raise ValueError("airspeed must be positive")
        (a_u, b_u), (A_v, B_v, C_v), (A_w, B_w, C_w) = self._coefficients(V_r, dt)
        noise = rng.standard_normal(3) / math.sqrt(dt)
        self._x_u = a_u * self._x_u + b_u * noise[0]
        self._x_v = A_v @ self._x_v + B_v * noise[1]
        self._x_w = A_w @ self._x_w + B_w * noise[2]
        return np.array([self._x_u, float(C_v @ self._x_v), float(C_w @ self._x_w)])

    def transfer_functions(self, V_r: float, dt: float):
        """Discrete (b, a) polynomial pairs per axis, for batch filtering.

        step() emits y_k = C x_{k+1}, i.e. the output already includes the
        step's noise sample, so the numerators carry a direct term.
        """
        (a_u, b_u), second_v, second_w = self._coefficients(V_r, dt)
        tfs = [(np.array([b_u]), np.array([1.0, -a_u]))]
        for A_d, B_d, C in (second_v, second_w):
            n1 = C[0] * B_d[0] + C[1] * B_d[1]
            n0 = C[0] * (A_d[0, 1] * B_d[1] - A_d[1, 1] * B_d[0]) + C[1] * (
                A_d[1, 0] * B_d[0] - A_d[0, 0] * B_d[1]
            )
            tfs.append(
                (np.array([n1, n0]),
                 np.array([1.0, -np.trace(A_d), float(np.linalg.det(A_d))]))
            )
        return tfs

    def simulate(self, n_steps: int, V_r: float, dt: float, rng) -> np.ndarray:
        """Batch-run the same recursions from a zero state; (n_steps, 3) output.

        Used for long-horizon statistical checks; does not mutate the
        stepwise filter state.
        """
        noise = rng.standard_normal((n_steps, 3)) / math.sqrt(dt)
        out = np.empty((n_steps, 3))
        for axis, (b, a) in enumerate(self.transfer_functions(V_r, dt)):
            out[:, axis] = lfilter(b, a, noise[:, axis])
        return out


def heading_to_inertial(gust, psi: float) -> np.ndarray:
    """Rotate a heading-aligned gust triple into the inertial frame."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array(
        [c * gust[0] - s * gust[1], s * gust[0] + c * gust[1], gust[2]]
    )


def clamp_perturbation(prev, raw_step,
                       rate_min=PERTURBATION_RATE_MIN, rate_max=PERTURBATION_RATE_MAX,
                       amp_min=PERTURBATION_AMPLITUDE_MIN, amp_max=PERTURBATION_AMPLITUDE_MAX):
    """Apply a perturbation increment under rate bounds, then amplitude bounds.

    Broadcasts over leading axes, so whole batches of 6-vectors clamp at once.
    """
    step = np.clip(raw_step, rate_min, rate_max)
    return np.clip(np.asarray(prev, float) + step, amp_min, amp_max)


class DelayLine:
    """FIFO of depth 0 or 1 on the commanded inputs."""

    def __init__(self, delay_steps: int, initial):
        if delay_steps not in (0, 1):
            raise ValueError("delay_steps must be 0 or 1")
        self.delay_steps = delay_steps
        self._buffer = np.asarray(initial, float).copy()

    def push_pop(self, cmd) -> np.ndarray:
        cmd = np.asarray(cmd, float)
        if self.delay_steps == 0:
            return cmd
        out = self._buffer
        self._buffer = cmd.copy()
        return out

    def get_state(self) -> list:
        return self._buffer.tolist()

    def set_state(self, state) -> None:
        self._buffer = np.asarray(state, float)
