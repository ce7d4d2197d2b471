"""Steady-flight trim solving for coordinated turns and straight legs.

A trim is parameterized by inverse turn radius kappa (1/m) and flight path
angle gamma (rad) at the nominal airspeed. The solver finds the state and
input for which body accelerations, roll/pitch rates, airspeed, sideslip,
climb rate, and turn rate all match the commanded steady condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ACT, ATT, RATE, STATE_DIM, VEL, DynamicsModel, SimulationFault, rotation_matrix
from .vehicle import Vehicle

V_NOM = 21.0  # m/s nominal airspeed for all reference trims


class TrimError(RuntimeError):
    pass


class TrimConvergenceError(TrimError):
    pass


class TrimSaturationError(TrimError):
    pass


@dataclass(frozen=True)
class TrimSpec:
    kappa: float
    gamma: float
    V_nom: float = V_NOM


@dataclass(frozen=True)
class TrimPoint:
    """Equilibrium state/input pair for one (kappa, gamma) condition."""

    kappa: float
    gamma: float
    V_nom: float
    phi: float
    theta: float
    v: np.ndarray          # body velocity (3,)
    omega: np.ndarray      # body rates (3,)
    delta: np.ndarray      # actuator states (4,)
    delta_cmd: np.ndarray  # commanded inputs (4,); equals delta at trim
    psi_dot: float         # turn rate, kappa * V_nom * cos(gamma)
    residual: float        # infinity norm of the trim residual at the solution

    def state(self, position=(0.0, 0.0, 0.0), psi: float = 0.0) -> np.ndarray:
        """Assemble a 16-state at the given position and heading.

        The trim is heading-invariant in still air, so psi is free.
        """
        x = np.empty(STATE_DIM)
        x[0:3] = position
        x[VEL] = self.v
        x[ATT] = [self.phi, self.theta, psi]
        x[RATE] = self.omega
        x[ACT] = self.delta
        return x

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "gamma": self.gamma,
            "V_nom": self.V_nom,
            "phi": self.phi,
            "theta": self.theta,
            "v": self.v.tolist(),
            "omega": self.omega.tolist(),
            "delta": self.delta.tolist(),
            "delta_cmd": self.delta_cmd.tolist(),
            "psi_dot": self.psi_dot,
            "residual": self.residual,
        }


def _pack_state(z) -> np.ndarray:
    """Unknown vector z = (phi, theta, u, v, w, p, q, r, dE, dA, dR, dT) -> 16-state."""
    x = np.zeros(STATE_DIM)
    x[VEL] = z[2:5]
    x[ATT] = [z[0], z[1], 0.0]
    x[RATE] = z[5:8]
    x[ACT] = z[8:12]
    return x


def trim_residual(model: DynamicsModel, z, spec: TrimSpec) -> np.ndarray:
    """12-equation steady-flight residual at unknown vector z."""
    x = _pack_state(z)
    deriv = model.state_derivative(x, x[ACT])
    v = x[VEL]
    V = math.sqrt(float(v @ v))
    psi_dot_target = spec.kappa * spec.V_nom * math.cos(spec.gamma)
    z_dot = float((rotation_matrix(x[ATT]) @ v)[2])
    return np.concatenate(
        [
            deriv[VEL],                                   # body accelerations
            deriv[RATE],                                  # angular accelerations
            deriv[ATT.start:ATT.start + 2],               # phi_dot, theta_dot
            [
                deriv[ATT.start + 2] - psi_dot_target,    # turn-rate match
                V - spec.V_nom,                           # airspeed
                math.asin(float(v[1]) / V),               # sideslip (coordination)
                z_dot + spec.V_nom * math.sin(spec.gamma),  # climb rate
            ],
        ]
    )


def _initial_guess(spec: TrimSpec) -> np.ndarray:
    psi_dot = spec.kappa * spec.V_nom * math.cos(spec.gamma)
    phi = math.atan2(psi_dot * spec.V_nom, 9.81)
    alpha = 0.06 / max(math.cos(phi), 0.3)
    theta = spec.gamma + alpha
    sth, cth = math.sin(theta), math.cos(theta)
    z = np.zeros(12)
    z[0], z[1] = phi, theta
    z[2] = spec.V_nom * math.cos(alpha)
    z[4] = spec.V_nom * math.sin(alpha)
    z[5] = -psi_dot * sth
    z[6] = psi_dot * math.sin(phi) * cth
    z[7] = psi_dot * math.cos(phi) * cth
    z[8] = 0.07   # elevator
    z[11] = 5.0   # throttle rev/s
    return z


def solve_trim(spec: TrimSpec, model: DynamicsModel | None = None,
               tol: float = 1e-10, max_iter: int = 60) -> TrimPoint:
    """Damped Newton solve of the trim residual with a finite-difference Jacobian.

    Raises TrimConvergenceError after max_iter or a stalled line search and
    TrimSaturationError when the converged inputs touch the actuator limits.
    """
    if model is None:
        model = DynamicsModel(Vehicle())

    def safe_residual(z):
        try:
            return trim_residual(model, z, spec)
        except (SimulationFault, ValueError):
            return None

    z = _initial_guess(spec)
    r = safe_residual(z)
    if r is None:
        raise TrimConvergenceError("initial guess outside the model's validity region")

    for _ in range(max_iter):
        norm = float(np.max(np.abs(r)))
        if norm < tol:
            break
        # Central-difference Jacobian.
        J = np.empty((12, 12))
        for j in range(12):
            h = 1e-7 * max(1.0, abs(z[j]))
            zp, zm = z.copy(), z.copy()
            zp[j] += h
            zm[j] -= h
            rp, rm = safe_residual(zp), safe_residual(zm)
            if rp is None or rm is None:
                raise TrimConvergenceError("residual undefined near iterate")
            J[:, j] = (rp - rm) / (2.0 * h)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise TrimConvergenceError(f"singular trim Jacobian: {exc}") from exc
        # Backtracking line search on the residual norm.
        lam = 1.0
        while True:
            r_new = safe_residual(z + lam * step)
            if r_new is not None and np.max(np.abs(r_new)) < norm:
                z = z + lam * step
                r = r_new
                break
            lam *= 0.5
            if lam < 1e-6:
                raise TrimConvergenceError(
                    f"line search stalled at residual {norm:.3e} for "
                    f"kappa={spec.kappa}, gamma={spec.gamma}"
                )
    else:
        raise TrimConvergenceError(
            f"no convergence in {max_iter} iterations for kappa={spec.kappa}, gamma={spec.gamma}"
        )

    delta = z[8:12]
    act = model.vehicle.act
    margin = 1e-9
    if np.any(delta <= np.asarray(act.delta_min) + margin) or np.any(
        delta >= np.asarray(act.delta_max) - margin
    ):
        raise TrimSaturationError(
            f"trim inputs {np.round(delta, 4)} outside actuator limits for "
            f"kappa={spec.kappa}, gamma={spec.gamma}"
        )

    return TrimPoint(
        kappa=spec.kappa,
        gamma=spec.gamma,
        V_nom=spec.V_nom,
        phi=float(z[0]),
        theta=float(z[1]),
        v=z[2:5].copy(),
        omega=z[5:8].copy(),
        delta=delta.copy(),
        delta_cmd=delta.copy(),
        psi_dot=spec.kappa * spec.V_nom * math.cos(spec.gamma),
        residual=float(np.max(np.abs(r))),
    )


@dataclass
class TrimCache:
    """Memoized trim solutions keyed by (kappa, gamma)."""

    model: DynamicsModel
    V_nom: float = V_NOM
    _cache: dict = field(default_factory=dict)

    def get(self, kappa: float, gamma: float) -> TrimPoint:
        key = (round(kappa, 12), round(gamma, 12))
        if key not in self._cache:
            self._cache[key] = solve_trim(TrimSpec(kappa, gamma, self.V_nom), self.model)
        return self._cache[key]
