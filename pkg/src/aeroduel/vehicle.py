"""CZ-150 airframe parameters: inertia, geometry, aero coefficients, actuators.

All defaults were identified experimentally for the Carbon-Z Cessna 150T
based CZ-150 platform. Every value can be overridden from a JSON config
file; the compiled-in defaults are the nominal model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, asdict

import numpy as np

# Actuator channel order used everywhere: elevator, aileron, rudder, throttle.
CHANNELS = ("E", "A", "R", "T")


@dataclass(frozen=True)
class PhysicalConstants:
    """Mass, geometry and environment constants (SI units)."""

    m: float = 4.90            # mass, kg
    c_bar: float = 0.320       # mean aerodynamic chord, m
    b: float = 2.12            # wingspan, m
    S: float = 0.680           # wing reference area, m^2
    D_prop: float = 0.406      # propeller diameter, m
    J_xx: float = 0.546        # kg m^2
    J_yy: float = 0.430        # kg m^2
    J_zz: float = 0.801        # kg m^2
    J_xz: float = 0.066        # kg m^2
    g: float = 9.81            # m/s^2
    rho_air: float = 1.225     # kg/m^3, sea-level ISA

    def __post_init__(self):
        for name in ("m", "c_bar", "b", "S", "D_prop", "g", "rho_air"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if np.any(np.linalg.eigvalsh(self.inertia_tensor()) <= 0.0):
            raise ValueError("inertia tensor must be positive definite")

    def inertia_tensor(self) -> np.ndarray:
        """Body inertia tensor; x-z plane symmetry zeroes J_xy and J_yz."""
        return np.array(
            [
                [self.J_xx, 0.0, -self.J_xz],
                [0.0, self.J_yy, 0.0],
                [-self.J_xz, 0.0, self.J_zz],
            ]
        )


@dataclass(frozen=True)
class AeroCoefficientSet:
    """Coefficients of the six polynomial force/moment expansions.

    Regressors: angle of attack alpha, sideslip beta, nondimensional rates
    (p_hat, q_hat, r_hat), surface deflections, and inverse advance ratio J.
    """

    # X (axial force)
    C_X_alpha2: float = 3.82
    C_X_J: float = 0.111
    C_X_J2: float = 0.0575
    C_X_dE_alpha: float = 1.08
    C_X_0: float = -0.00680
    # Y (side force)
    C_Y_beta: float = -0.613
    C_Y_p: float = -0.136
    C_Y_r: float = -0.284
    C_Y_dA: float = -0.131
    C_Y_dR: float = 0.0481
    C_Y_0: float = 0.0214
    # Z (normal force)
    C_Z_alpha: float = -4.925
    C_Z_q: float = 16.9
    C_Z_dE: float = -0.161
    C_Z_0: float = 0.0296
    # L (roll moment)
    C_L_beta: float = -0.0530
    C_L_p: float = -0.215
    C_L_r: float = 0.0326
    C_L_dA: float = -0.0758
    C_L_0: float = -0.0002
    # M (pitch moment)
    C_M_alpha: float = -0.356
    C_M_alpha3: float = 1.85
    C_M_q: float = -1.59
    C_M_dE: float = -0.197
    C_M_q_dE: float = 9.71
    C_M_0: float = 0.0340
    # N (yaw moment)
    C_N_beta: float = 0.0390
    C_N_p: float = 0.00470
    C_N_r: float = -0.0991
    C_N_dA: float = 0.0150
    C_N_dR: float = -0.0259
    C_N_0: float = 0.00004


@dataclass(frozen=True)
class ActuatorModel:
    """Static PWM-to-command maps, first-order lags, and saturation limits.

    Control surfaces (E, A, R) use cubic PWM polynomials evaluated in
    degrees, throttle a linear map evaluated in rev/min; `pwm_to_command`
    converts to rad and rev/s. Commands are clipped to [delta_min,
    delta_max] before the lag.
    """

    # PWM polynomial coefficients (c3, c2, c1, c0) per surface channel.
    pwm_E: tuple = (-8.24e-8, -9.54e-6, 7.21e-2, -8.87e-1)
    pwm_A: tuple = (-3.98e-8, 1.08e-8, -6.24e-2, -2.56e-1)
    pwm_R: tuple = (-2.72e-7, 7.58e-6, 1.16e-1, -7.40e-1)
    # Throttle linear map (c1, c0).
    pwm_T: tuple = (6.56e3, 2.91e3)
    # First-order lag time constants, s, in channel order E, A, R, T.
    tau: tuple = (0.071, 0.083, 0.071, 0.082)
    # Saturation limits (rad for surfaces, rev/s for throttle). The throttle
    # floor admits reverse thrust: steady descents at the nominal airspeed
    # need braking (about -32 rev/s at the steepest catalog flight path
    # angle), and the thrust polynomial still brakes monotonically there.
    delta_min: tuple = (-0.35, -0.30, -0.35, -45.0)
    delta_max: tuple = (0.35, 0.30, 0.35, 110.0)

    def __post_init__(self):
        if any(t <= 0.0 for t in self.tau):
            raise ValueError("actuator time constants must be positive")
        if any(lo >= hi for lo, hi in zip(self.delta_min, self.delta_max)):
            raise ValueError("delta_min must be below delta_max per channel")

    def pwm_to_command(self, pwm) -> np.ndarray:
        """Map centered PWM signals (E, A, R, T) to commanded inputs."""
        pwm = np.asarray(pwm, dtype=float)
        out = np.empty(4)
        deg2rad = math.pi / 180.0
        for i, coeffs in enumerate((self.pwm_E, self.pwm_A, self.pwm_R)):
            out[i] = deg2rad * np.polyval(coeffs, pwm[i])
        c1, c0 = self.pwm_T
        out[3] = (c1 * pwm[3] + c0) / 60.0
        return out

    def saturate(self, delta_cmd) -> np.ndarray:
        return np.clip(delta_cmd, self.delta_min, self.delta_max)

    def derivative(self, delta, delta_cmd) -> np.ndarray:
        """First-order lag response d(delta)/dt = (delta_cmd - delta) / tau."""
        return (np.asarray(delta_cmd, float) - np.asarray(delta, float)) / np.asarray(self.tau)


# The adversary perturbs the six coefficient constants C_X..C_N; amplitude
# and per-step rate bounds below were identified from flight data.
PERTURBATION_AMPLITUDE_MIN = np.array(
    [-0.0258, -0.0510, -0.0872, -0.0204, -0.0330, -0.0084]
)
PERTURBATION_AMPLITUDE_MAX = -PERTURBATION_AMPLITUDE_MIN
PERTURBATION_RATE_MIN = np.array(
    [-0.0180, -0.0289, -0.0598, -0.0128, -0.0299, -0.0044]
)
PERTURBATION_RATE_MAX = np.array(
    [0.0175, 0.0287, 0.0606, 0.0128, 0.0299, 0.0044]
)


@dataclass(frozen=True)
class Vehicle:
    """Complete parameter set for one airframe instance."""

    const: PhysicalConstants = field(default_factory=PhysicalConstants)
    aero: AeroCoefficientSet = field(default_factory=AeroCoefficientSet)
    act: ActuatorModel = field(default_factory=ActuatorModel)

    def to_dict(self) -> dict:
        return {
            "const": asdict(self.const),
            "aero": asdict(self.aero),
            "act": asdict(self.act),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vehicle":
        """Build a vehicle from a (possibly partial) nested dict of overrides."""
        sections = {"const": PhysicalConstants, "aero": AeroCoefficientSet, "act": ActuatorModel}
        unknown = set(data) - set(sections)
        if unknown:
            raise ValueError(f"unknown vehicle config sections: {sorted(unknown)}")
        kwargs = {}
        for name, klass in sections.items():
            overrides = dict(data.get(name, {}))
            valid = {f.name for f in fields(klass)}
            bad = set(overrides) - valid
            if bad:
                raise ValueError(f"unknown keys in vehicle.{name}: {sorted(bad)}")
            for key in overrides:
                if isinstance(overrides[key], list):
                    overrides[key] = tuple(overrides[key])
            kwargs[name] = klass(**overrides)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "Vehicle":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
