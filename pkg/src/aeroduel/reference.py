"""Reference path construction from concatenated trim primitives.

A path is a closed figure-eight: straight leg, coordinated turn at
(kappa, gamma), straight leg, opposite turn at (-kappa, -gamma). The turn
sweep is 2*pi minus the heading change between the crossing legs, which
closes the loop horizontally for legs of length L when
tan(chi) = kappa * L / 2. References are generated by integrating the
vehicle dynamics at each segment's trim, so an undisturbed vehicle
replays them to machine precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ACT, ATT, POS, RATE, STATE_DIM, VEL, DynamicsModel
from .trim import TrimCache, TrimPoint, V_NOM

DT_DEFAULT = 0.04
LEG_LENGTH_DEFAULT = 200.0

# Reference grids for the path catalog: 4 curvatures x 5 flight path angles.
KAPPA_REF = (-0.02, -0.012, 0.012, 0.02)
GAMMA_REF = (-0.21, -0.11, 0.0, 0.11, 0.21)

# Measurement vector layout: y = [omega, V_r, attitude, position, f_b].
MEAS_RATE = slice(0, 3)
MEAS_VR = 3
MEAS_ATT = slice(4, 7)
MEAS_POS = slice(7, 10)
MEAS_FB = slice(10, 13)
MEAS_DIM = 13


def measurement_vector(x, V_r: float, f_b) -> np.ndarray:
    """Assemble the 13-component measurement from state, airspeed, specific force."""
    y = np.empty(MEAS_DIM)
    y[MEAS_RATE] = x[RATE]
    y[MEAS_VR] = V_r
    y[MEAS_ATT] = x[ATT]
    y[MEAS_POS] = x[POS]
    y[MEAS_FB] = f_b
    return y


@dataclass(frozen=True)
class SegmentInfo:
    start: int       # first step index covered by this segment
    length: int      # number of steps
    kappa: float
    gamma: float


@dataclass
class ReferenceTrajectory:
    """Time-indexed reference over one closed path.

    Arrays span k = 0..N (N = total steps): full reference state, reference
    measurement, reference input, and piecewise-constant scheduling
    parameters. Joins are position/heading continuous; the remaining state
    components jump to the next segment's trim.
    """

    kappa: float
    gamma: float
    dt: float
    x_ref: np.ndarray          # (N+1, 16)
    y_ref: np.ndarray          # (N+1, 13)
    delta_cmd_ref: np.ndarray  # (N+1, 4)
    kappa_k: np.ndarray        # (N+1,)
    gamma_k: np.ndarray        # (N+1,)
    segments: list

    @property
    def n_steps(self) -> int:
        return self.x_ref.shape[0] - 1

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def positions(self) -> np.ndarray:
        return self.x_ref[:, POS]

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "gamma": self.gamma,
            "dt": self.dt,
            "x_ref": self.x_ref.tolist(),
            "y_ref": self.y_ref.tolist(),
            "delta_cmd_ref": self.delta_cmd_ref.tolist(),
            "kappa_k": self.kappa_k.tolist(),
            "gamma_k": self.gamma_k.tolist(),
            "segments": [
                {"start": s.start, "length": s.length, "kappa": s.kappa, "gamma": s.gamma}
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReferenceTrajectory":
        return cls(
            kappa=data["kappa"],
            gamma=data["gamma"],
            dt=data["dt"],
            x_ref=np.asarray(data["x_ref"], float),
            y_ref=np.asarray(data["y_ref"], float),
            delta_cmd_ref=np.asarray(data["delta_cmd_ref"], float),
            kappa_k=np.asarray(data["kappa_k"], float),
            gamma_k=np.asarray(data["gamma_k"], float),
            segments=[SegmentInfo(**s) for s in data["segments"]],
        )


def integrate_segment(model: DynamicsModel, trim: TrimPoint, x0, duration: float,
                      dt: float = DT_DEFAULT) -> np.ndarray:
    """Propagate the dynamics from x0 under the trim command, no disturbances.

    Returns the states after steps 1..n as an (n, 16) array; a zero
    duration yields an empty slice. duration must be a step multiple.
    """
    n = int(round(duration / dt))
    if abs(n * dt - duration) > 1e-9:
        raise ValueError(f"duration {duration} is not a multiple of dt {dt}")
    out = np.empty((n, STATE_DIM))
    x = np.asarray(x0, float)
    for i in range(n):
        x = model.rk4_step(x, trim.delta_cmd, dt=dt)
        out[i] = x
    return out


def reference_measurement(model: DynamicsModel, x_ref) -> np.ndarray:
    """Reference measurement at one reference state (still air, nominal model)."""
    f_b = model.specific_force(x_ref)
    V_r = float(np.linalg.norm(x_ref[VEL]))
    return measurement_vector(x_ref, V_r, f_b)


def build_lemniscate(model: DynamicsModel, kappa: float, gamma: float,
                     leg_length: float = LEG_LENGTH_DEFAULT, dt: float = DT_DEFAULT,
                     trims: TrimCache | None = None) -> ReferenceTrajectory:
    """Closed four-segment figure-eight for one (kappa, gamma) pair."""
    if kappa == 0.0:
        raise ValueError("kappa must be nonzero; straight legs come built in")
    if trims is None:
        trims = TrimCache(model)

    v_nom = trims.V_nom
    sign = 1.0 if kappa > 0 else -1.0
    chi = math.atan(abs(kappa) * leg_length / 2.0)
    sweep = 2.0 * math.pi - 2.0 * chi

    leg_trim = trims.get(0.0, 0.0)
    turn_trim = trims.get(kappa, gamma)
    back_trim = trims.get(-kappa, -gamma)

    leg_steps = int(round(leg_length / v_nom / dt))
    turn_steps = int(round(sweep / abs(turn_trim.psi_dot) / dt))
    plan = [
        (leg_trim, leg_steps),
        (turn_trim, turn_steps),
        (leg_trim, leg_steps),
        (back_trim, turn_steps),
    ]

    n_total = sum(n for _, n in plan)
    x_ref = np.empty((n_total + 1, STATE_DIM))
    delta_cmd_ref = np.empty((n_total + 1, 4))
    kappa_k = np.empty(n_total + 1)
    gamma_k = np.empty(n_total + 1)
    segments = []

    position = np.zeros(3)
    psi = sign * chi
    k = 0
    for trim, n in plan:
        x0 = trim.state(position=position, psi=psi)
        states = integrate_segment(model, trim, x0, n * dt, dt)
        x_ref[k] = x0
        x_ref[k + 1:k + 1 + n] = states
        delta_cmd_ref[k:k + n] = trim.delta_cmd
        kappa_k[k:k + n] = trim.kappa
        gamma_k[k:k + n] = trim.gamma
        segments.append(SegmentInfo(start=k, length=n, kappa=trim.kappa, gamma=trim.gamma))
        end = states[-1] if n > 0 else x0
        position = end[POS].copy()
        psi = float(end[ATT][2])
        k += n
    # Final sample: state from the last integration step, inputs/scheduling
    # held at the closing segment's values.
    delta_cmd_ref[n_total] = plan[-1][0].delta_cmd
    kappa_k[n_total] = plan[-1][0].kappa
    gamma_k[n_total] = plan[-1][0].gamma

    y_ref = np.empty((n_total + 1, MEAS_DIM))
    for i in range(n_total + 1):
        y_ref[i] = reference_measurement(model, x_ref[i])

    return ReferenceTrajectory(
        kappa=kappa,
        gamma=gamma,
        dt=dt,
        x_ref=x_ref,
        y_ref=y_ref,
        delta_cmd_ref=delta_cmd_ref,
        kappa_k=kappa_k,
        gamma_k=gamma_k,
        segments=segments,
    )


def build_catalog(model: DynamicsModel, kappas=KAPPA_REF, gammas=GAMMA_REF,
                  leg_length: float = LEG_LENGTH_DEFAULT, dt: float = DT_DEFAULT,
                  v_nom: float = V_NOM) -> list:
    """All (kappa, gamma) lemniscates; path id is the list index."""
    trims = TrimCache(model, V_nom=v_nom)
    return [
        build_lemniscate(model, kappa, gamma, leg_length, dt, trims)
        for kappa in kappas
        for gamma in gammas
    ]


def save_catalog(paths, fh_or_path) -> None:
    doc = {"format": "aeroduel-paths-v1", "paths": [p.to_dict() for p in paths]}
    if hasattr(fh_or_path, "write"):
        json.dump(doc, fh_or_path)
    else:
        with open(fh_or_path, "w") as fh:
            json.dump(doc, fh)


def load_catalog(fh_or_path) -> list:
    if hasattr(fh_or_path, "read"):
        doc = json.load(fh_or_path)
    else:
        with open(fh_or_path) as fh:
            doc = json.load(fh)
    if doc.get("format") != "aeroduel-paths-v1":
        raise ValueError(f"unrecognized path catalog format: {doc.get('format')!r}")
    return [ReferenceTrajectory.from_dict(d) for d in doc["paths"]]
