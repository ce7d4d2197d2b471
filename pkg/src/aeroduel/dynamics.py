"""6DOF rigid-body dynamics of the CZ-150 with RK4 integration.

State vector layout (16 components):

    x = [p(3) NED position m | v(3) body velocity m/s | theta(3) Euler rad |
         omega(3) body rates rad/s | delta(4) actuator states]

Actuator states are rad for elevator/aileron/rudder and rev/s for
throttle. All functions here are pure; mutable state lives in callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .vehicle import Vehicle

# State slices.
POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 9)
RATE = slice(9, 12)
ACT = slice(12, 16)
STATE_DIM = 16

V_MIN_AIRSPEED = 1.0   # m/s; below this the aero regressors degenerate
V_MAX_AIRSPEED = 60.0  # m/s; far outside the envelope the model was fit in
COS_THETA_TOL = 1e-6   # Euler-rate matrix singularity guard

ZERO3 = np.zeros(3)
ZERO6 = np.zeros(6)


class SimulationFault(RuntimeError):
    """Model validity lost; the episode must terminate."""


class LowAirspeedError(SimulationFault):
    pass


class HighAirspeedError(SimulationFault):
    pass


class GimbalLockError(SimulationFault):
    pass


class NonFiniteStateError(SimulationFault):
    pass


def rotation_matrix(theta) -> np.ndarray:
    """Body-to-inertial rotation matrix R_Ib for Euler attitude (phi, theta, psi)."""
    phi, th, psi = float(theta[0]), float(theta[1]), float(theta[2])
    sphi, cphi = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(th), math.cos(th)
    spsi, cpsi = math.sin(psi), math.cos(psi)
    return np.array(
        [
            [cth * cpsi, sphi * sth * cpsi - cphi * spsi, cphi * sth * cpsi + sphi * spsi],
            [cth * spsi, sphi * sth * spsi + cphi * cpsi, cphi * sth * spsi - sphi * cpsi],
            [-sth, sphi * cth, cphi * cth],
        ]
    )


def euler_rate_matrix(phi: float, theta: float) -> np.ndarray:
    """Matrix mapping body rates to Euler angle rates; singular at theta = +-pi/2."""
    cth = math.cos(theta)
    if abs(cth) < COS_THETA_TOL:
        raise GimbalLockError(f"euler rate matrix singular at theta={theta:.6f}")
    sphi, cphi = math.sin(phi), math.cos(phi)
    tth = math.tan(theta)
    return np.array(
        [
            [1.0, sphi * tth, cphi * tth],
            [0.0, cphi, -sphi],
            [0.0, sphi / cth, cphi / cth],
        ]
    )


@dataclass(frozen=True)
class AirData:
    """Airspeed, flow angles, dynamic pressure, and nondimensional regressors."""

    V_r: float
    alpha: float
    beta: float
    q_bar: float
    p_hat: float
    q_hat: float
    r_hat: float
    J_inv: float
    v_r: np.ndarray  # relative velocity in body axes


def air_data(v, theta, wind, omega, delta_T: float, vehicle: Vehicle) -> AirData:
    """Relative-wind quantities for body velocity v and inertial wind.

    Raises LowAirspeedError when the airspeed falls to or below
    V_MIN_AIRSPEED; the polynomial aero model is meaningless there.
    """
    v = np.asarray(v, float)
    if wind is None:
        v_r = v
    else:
        wind = np.asarray(wind, float)
        if wind[0] == 0.0 and wind[1] == 0.0 and wind[2] == 0.0:
            v_r = v
        else:
            v_r = v - rotation_matrix(theta).T @ wind
    ur, vr, wr = float(v_r[0]), float(v_r[1]), float(v_r[2])
    V_r = math.sqrt(ur * ur + vr * vr + wr * wr)
    if not math.isfinite(V_r):
        raise HighAirspeedError("non-finite airspeed")
    if V_r <= V_MIN_AIRSPEED:
        raise LowAirspeedError(f"airspeed {V_r:.3f} m/s at or below {V_MIN_AIRSPEED} m/s")
    if V_r >= V_MAX_AIRSPEED:
        raise HighAirspeedError(f"airspeed {V_r:.3f} m/s at or above {V_MAX_AIRSPEED} m/s")
    const = vehicle.const
    alpha = math.atan2(wr, ur)
    beta = math.asin(vr / V_r)
    q_bar = 0.5 * const.rho_air * V_r * V_r
    two_V = 2.0 * V_r
    return AirData(
        V_r=V_r,
        alpha=alpha,
        beta=beta,
        q_bar=q_bar,
        p_hat=float(omega[0]) * const.b / two_V,
        q_hat=float(omega[1]) * const.c_bar / two_V,
        r_hat=float(omega[2]) * const.b / two_V,
        J_inv=float(delta_T) * const.D_prop / V_r,
        v_r=v_r,
    )


def aero_coefficients(air: AirData, delta, perturbation, vehicle: Vehicle) -> np.ndarray:
    """Six aerodynamic coefficients (C_X, C_Y, C_Z, C_L, C_M, C_N).

    `perturbation` is a 6-vector of additive coefficient offsets (the
    adversary's action channel); pass None or zeros for the nominal model.
    """
    c = vehicle.aero
    alpha, beta = air.alpha, air.beta
    p_hat, q_hat, r_hat = air.p_hat, air.q_hat, air.r_hat
    J = air.J_inv
    dE, dA, dR = float(delta[0]), float(delta[1]), float(delta[2])

    C_X = (c.C_X_alpha2 * alpha * alpha + c.C_X_J * J + c.C_X_J2 * J * J
           + c.C_X_dE_alpha * dE * alpha + c.C_X_0)
    C_Y = (c.C_Y_beta * beta + c.C_Y_p * p_hat + c.C_Y_r * r_hat
           + c.C_Y_dA * dA + c.C_Y_dR * dR + c.C_Y_0)
    C_Z = c.C_Z_alpha * alpha + c.C_Z_q * q_hat + c.C_Z_dE * dE + c.C_Z_0
    C_L = (c.C_L_beta * beta + c.C_L_p * p_hat + c.C_L_r * r_hat
           + c.C_L_dA * dA + c.C_L_0)
    C_M = (c.C_M_alpha * alpha + c.C_M_alpha3 * alpha ** 3 + c.C_M_q * q_hat
           + c.C_M_dE * dE + c.C_M_q_dE * q_hat * dE + c.C_M_0)
    C_N = (c.C_N_beta * beta + c.C_N_p * p_hat + c.C_N_r * r_hat
           + c.C_N_dA * dA + c.C_N_dR * dR + c.C_N_0)

    out = np.array([C_X, C_Y, C_Z, C_L, C_M, C_N])
    if perturbation is not None:
        out = out + perturbation
    return out


def forces_moments(C, air: AirData, vehicle: Vehicle):
    """Dimensional body force (N) and moment (N m) from the six coefficients."""
    const = vehicle.const
    qS = air.q_bar * const.S
    F = np.array([C[0] * qS, C[1] * qS, C[2] * qS])
    M = np.array([C[3] * qS * const.b, C[4] * qS * const.c_bar, C[5] * qS * const.b])
    return F, M


def rk4(f, x, dt: float):
    """One classical RK4 step of x' = f(x) with inputs held over the step."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class DynamicsModel:
    """Equations of motion for one vehicle, with optional wind and coefficient offsets."""

    def __init__(self, vehicle: Vehicle | None = None):
        self.vehicle = vehicle if vehicle is not None else Vehicle()
        const = self.vehicle.const
        self._J = const.inertia_tensor()
        self._J_inv = np.linalg.inv(self._J)
        self._gravity = np.array([0.0, 0.0, const.g])

    def rigid_body_derivative(self, x, F, M) -> np.ndarray:
        """Kinematics plus Newton-Euler dynamics for given body force/moment.

        Returns the 12 rigid-body derivative components; actuator states are
        handled separately by the caller.
        """
        v = x[VEL]
        theta = x[ATT]
        omega = x[RATE]
        R = rotation_matrix(theta)
        eps = euler_rate_matrix(float(theta[0]), float(theta[1]))
        p_dot = R @ v
        theta_dot = eps @ omega
        v_dot = np.cross(v, omega) + R.T @ self._gravity + F / self.vehicle.const.m
        omega_dot = self._J_inv @ (np.cross(self._J @ omega, omega) + M)
        return np.concatenate([p_dot, v_dot, theta_dot, omega_dot])

    def state_derivative(self, x, delta_cmd, wind=None, perturbation=None) -> np.ndarray:
        """Full 16-state derivative under commanded inputs, wind, and offsets.

        `delta_cmd` is applied through the first-order actuator lag; the
        aerodynamic model sees the actuator *states* in x. Propagates
        LowAirspeedError / GimbalLockError from the underlying computations.
        """
        x = np.asarray(x, float)
        delta = x[ACT]
        air = air_data(x[VEL], x[ATT], wind, x[RATE], delta[3], self.vehicle)
        C = aero_coefficients(air, delta, perturbation, self.vehicle)
        F, M = forces_moments(C, air, self.vehicle)
        out = np.empty(STATE_DIM)
        out[:12] = self.rigid_body_derivative(x, F, M)
        out[ACT] = self.vehicle.act.derivative(delta, delta_cmd)
        return out

    def rk4_step(self, x, delta_cmd, wind=None, perturbation=None, dt: float = 0.04) -> np.ndarray:
        """Advance the state by dt; wind and offsets are held across sub-stages."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        return rk4(lambda s: self.state_derivative(s, delta_cmd, wind, perturbation), np.asarray(x, float), dt)

    def specific_force(self, x, wind=None, perturbation=None) -> np.ndarray:
        """Aerodynamic-plus-thrust specific force F/m in body axes (accelerometer output)."""
        x = np.asarray(x, float)
        delta = x[ACT]
        air = air_data(x[VEL], x[ATT], wind, x[RATE], delta[3], self.vehicle)
        C = aero_coefficients(air, delta, perturbation, self.vehicle)
        F, _ = forces_moments(C, air, self.vehicle)
        return F / self.vehicle.const.m
