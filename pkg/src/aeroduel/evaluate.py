"""Batched evaluation: episode traces, path-error metrics, trial campaigns.

Metrics are pure post-processing of an episode trace, so recomputing them
from an exported trace CSV reproduces the stored values exactly.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import ACT, ATT, POS, RATE, STATE_DIM, VEL
from .env import EnvConfig, PathFollowingEnv
from .nets import ActorCritic, load_checkpoint
from .reference import MEAS_DIM

STATE_COLS = ["x", "y", "z", "u", "v", "w", "phi", "theta", "psi",
              "p", "q", "r", "dE", "dA", "dR", "dT"]
MEAS_COLS = ["meas_p", "meas_q", "meas_r", "meas_Vr", "meas_phi", "meas_theta",
             "meas_psi", "meas_x", "meas_y", "meas_z", "meas_fx", "meas_fy", "meas_fz"]
TRACE_COLUMNS = (
    ["k"]
    + STATE_COLS
    + [f"ref_{c}" for c in STATE_COLS]
    + MEAS_COLS
    + ["a_E", "a_A", "a_R", "a_T"]
    + ["cmd_E", "cmd_A", "cmd_R", "cmd_T"]
    + ["dC_X", "dC_Y", "dC_Z", "dC_L", "dC_M", "dC_N"]
    + ["r_tracking", "r_barrier", "r_rate", "r_total"]
    + ["margin_E", "margin_A", "margin_R", "margin_T"]
    + ["pos_error"]
)


# -- policies ---------------------------------------------------------------


class ZeroPolicy:
    """Pure feedforward: always the reference input."""

    act_dim = 4

    def act(self, obs, rng) -> np.ndarray:
        return np.zeros(self.act_dim)


class RandomPolicy:
    """Uniform actions over the normalized box."""

    def __init__(self, act_dim: int = 4):
        self.act_dim = act_dim

    def act(self, obs, rng) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, self.act_dim)


class NetworkPolicy:
    """Deterministic (mean-action) wrapper around a trained actor-critic."""

    def __init__(self, policy: ActorCritic):
        self.policy = policy
        self.act_dim = policy.act_dim

    @classmethod
    def from_checkpoint(cls, path) -> "NetworkPolicy":
        return cls(load_checkpoint(path))

    def act(self, obs, rng) -> np.ndarray:
        return np.clip(self.policy.mean_action(obs[None])[0], -1.0, 1.0)


def resolve_policy(spec) -> object:
    """'zero', 'random', an ActorCritic, or a checkpoint path."""
    if spec == "zero":
        return ZeroPolicy()
    if spec == "random":
        return RandomPolicy()
    if isinstance(spec, ActorCritic):
        return NetworkPolicy(spec)
    if hasattr(spec, "act"):
        return spec
    return NetworkPolicy.from_checkpoint(spec)


def resolve_adversary(spec):
    """Returns (env adversary mode, adversary policy or None).

    spec is 'none', 'stochastic', an ActorCritic/policy, or a checkpoint
    path of a trained adversary.
    """
    if spec in ("none", "stochastic"):
        return spec, None
    if isinstance(spec, ActorCritic):
        return "policy", NetworkPolicy(spec)
    if hasattr(spec, "act"):
        return "policy", spec
    return "policy", NetworkPolicy.from_checkpoint(spec)


# -- geometry ----------------------------------------------------------------


class Polyline:
    """Piecewise-linear curve in 3D with vectorized point distance."""

    def __init__(self, points):
        points = np.asarray(points, float)
        if points.ndim != 2 or points.shape[0] < 2 or points.shape[1] != 3:
            raise ValueError("polyline needs at least two 3D points")
        self.points = points
        self._a = points[:-1]
        self._d = points[1:] - points[:-1]
        self._dd = np.einsum("ij,ij->i", self._d, self._d)
        self._dd[self._dd == 0.0] = 1.0  # degenerate segments collapse to a point

    def distance(self, p) -> float:
        rel = np.asarray(p, float) - self._a
        t = np.clip(np.einsum("ij,ij->i", rel, self._d) / self._dd, 0.0, 1.0)
        closest = rel - t[:, None] * self._d
        return float(np.sqrt(np.min(np.einsum("ij,ij->i", closest, closest))))


def path_error(position, ref_points) -> float:
    """Minimum 3D distance from a position to the reference polyline."""
    return Polyline(ref_points).distance(position)


def control_effort(actions) -> float:
    """Sum over steps of the Euclidean norm of the normalized action.

    Accumulates sequentially, so an independent step-by-step re-summation
    reproduces the value bit for bit.
    """
    actions = np.asarray(actions, float)
    total = 0.0
    for row in actions:
        total += float(np.linalg.norm(row))
    return total


# -- episode rollout ----------------------------------------------------------


@dataclass
class EpisodeTrace:
    """Column store of one episode; row r describes state k=r and the step
    that produced it (step fields of row 0 are zero)."""

    path_id: int
    states: np.ndarray        # (R, 16)
    ref_states: np.ndarray    # (R, 16)
    measurements: np.ndarray  # (R, 13) noise-free
    actions: np.ndarray       # (R, 4) protagonist normalized actions
    commands: np.ndarray      # (R, 4) clipped physical commands
    delta_C: np.ndarray       # (R, 6)
    rewards: np.ndarray       # (R, 3) tracking, barrier, rate
    margins: np.ndarray       # (R, 4)
    pos_errors: np.ndarray    # (R,)
    fault: str | None

    @property
    def n_rows(self) -> int:
        return self.states.shape[0]

    def to_rows(self):
        for r in range(self.n_rows):
            yield np.concatenate([
                [r], self.states[r], self.ref_states[r], self.measurements[r],
                self.actions[r], self.commands[r], self.delta_C[r],
                self.rewards[r], [self.rewards[r].sum()],
                self.margins[r], [self.pos_errors[r]],
            ])


def run_episode(env: PathFollowingEnv, policy, adversary_policy, action_rng,
                path_id: int | None = None) -> EpisodeTrace:
    """One full episode under deterministic/stochastic policy objects."""
    obs_mu, obs_eta = env.reset(path_id)
    rows = {
        "states": [env.x.copy()],
        "ref": [env.path.x_ref[0].copy()],
        "meas": [env.last_y_true.copy()],
        "actions": [np.zeros(4)],
        "commands": [env.delta_cmd_prev.copy()],
        "delta_C": [env.delta_C.copy()],
        "rewards": [np.zeros(3)],
        "margins": [np.ones(4)],
        "pos_err": [0.0],
    }
    done = False
    while not done:
        a_mu = policy.act(obs_mu, action_rng)
        a_eta = adversary_policy.act(obs_eta, action_rng) if adversary_policy else None
        (obs_mu, obs_eta), reward, done, info = env.step(a_mu, a_eta)
        if info["y_true"] is None:
            break  # model validity lost; the transition produced no state
        rows["states"].append(env.x.copy())
        rows["ref"].append(env.path.x_ref[env.k].copy())
        rows["meas"].append(info["y_true"])
        rows["actions"].append(np.clip(np.asarray(a_mu, float), -1.0, 1.0))
        rows["commands"].append(info["delta_cmd"])
        rows["delta_C"].append(info["delta_C"])
        rows["rewards"].append(np.array([reward.tracking, reward.input_barrier, reward.input_rate]))
        rows["margins"].append(info["margin"])
        rows["pos_err"].append(info["pos_error"])
    return EpisodeTrace(
        path_id=env.path_id,
        states=np.asarray(rows["states"]),
        ref_states=np.asarray(rows["ref"]),
        measurements=np.asarray(rows["meas"]),
        actions=np.asarray(rows["actions"]),
        commands=np.asarray(rows["commands"]),
        delta_C=np.asarray(rows["delta_C"]),
        rewards=np.asarray(rows["rewards"]),
        margins=np.asarray(rows["margins"]),
        pos_errors=np.asarray(rows["pos_err"]),
        fault=env.fault,
    )


def write_trace_csv(trace: EpisodeTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in trace.to_rows():
            writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


def read_trace_csv(path) -> dict:
    """Trace columns as named float arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    if header != TRACE_COLUMNS:
        raise ValueError("unrecognized trace CSV header")
    return {name: data[:, i] for i, name in enumerate(header)}


# -- trials --------------------------------------------------------------------


@dataclass
class TrialResult:
    trial: int
    seed: int
    path_id: int
    adversary_mode: str
    mpe: float
    maxpe: float
    effort: float
    fault: str | None
    saturation: np.ndarray  # (4,) fraction of steps at zero margin per channel
    n_steps: int

    def csv_row(self) -> list:
        return [
            self.trial, self.seed, self.path_id, self.adversary_mode,
            repr(float(self.mpe)), repr(float(self.maxpe)), repr(float(self.effort)),
            self.fault or "", *[repr(float(s)) for s in self.saturation],
        ]


RESULT_COLUMNS = ["trial", "seed", "path_id", "adversary_mode", "mpe_m",
                  "maxpe_m", "effort", "fault", "sat_E", "sat_A", "sat_R", "sat_T"]


def metrics_from_trace(trace: EpisodeTrace, polyline: Polyline):
    """(mpe, maxpe, effort, saturation fractions) from one episode trace."""
    distances = np.array([polyline.distance(p) for p in trace.states[:, POS]])
    steps = trace.n_rows - 1
    if steps > 0:
        saturation = np.mean(trace.margins[1:] <= 0.0, axis=0)
    else:
        saturation = np.zeros(4)
    return (
        float(np.mean(distances)),
        float(np.max(distances)),
        control_effort(trace.actions[1:]),
        saturation,
    )


def _run_single_trial(trial: int, policy, adversary_policy, adversary_mode,
                      catalog, env_cfg, seed: int, model=None,
                      polylines=None) -> TrialResult:
    trial_seed = seed + trial
    env = PathFollowingEnv(catalog, env_cfg, seed=trial_seed, model=model)
    action_rng = np.random.default_rng([trial_seed, 7919])
    trace = run_episode(env, policy, adversary_policy, action_rng)
    polyline = (polylines or {}).get(trace.path_id) or Polyline(
        catalog[trace.path_id].positions
    )
    mpe, maxpe, effort, saturation = metrics_from_trace(trace, polyline)
    return TrialResult(
        trial=trial,
        seed=trial_seed,
        path_id=trace.path_id,
        adversary_mode=adversary_mode,
        mpe=mpe,
        maxpe=maxpe,
        effort=effort,
        fault=trace.fault,
        saturation=saturation,
        n_steps=trace.n_rows - 1,
    )


_WORKER_CTX: dict = {}


def _worker_init(ctx):
    _WORKER_CTX.update(ctx)


def _worker_trial(trial: int) -> TrialResult:
    return _run_single_trial(trial, **_WORKER_CTX)


def run_trials(policy_spec, adversary_spec, n_trials: int, seed: int,
               catalog, env_cfg: EnvConfig | None = None, model=None,
               jobs: int = 1) -> list:
    """Deterministic trial campaign: trial i uses seed + i.

    The path is drawn per trial by the environment; wind, noise, delay, and
    adversary streams all derive from the trial seed. Results come back
    sorted by trial index regardless of worker scheduling.
    """
    policy = resolve_policy(policy_spec)
    adversary_mode, adversary_policy = resolve_adversary(adversary_spec)
    if env_cfg is None:
        env_cfg = EnvConfig()
    if env_cfg.adversary != adversary_mode:
        raise ValueError(
            f"env config adversary mode {env_cfg.adversary!r} does not match "
            f"requested {adversary_mode!r}"
        )
    if n_trials == 0:
        return []
    polylines = {i: Polyline(path.positions) for i, path in enumerate(catalog)}
    ctx = dict(policy=policy, adversary_policy=adversary_policy,
               adversary_mode=adversary_mode, catalog=catalog, env_cfg=env_cfg,
               seed=seed, model=model, polylines=polylines)
    if jobs <= 1:
        return [_run_single_trial(i, **ctx) for i in range(n_trials)]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init,
                             initargs=(ctx,)) as pool:
        return list(pool.map(_worker_trial, range(n_trials)))


@dataclass
class AggregateReport:
    n_trials: int
    mean_mpe: float
    mean_maxpe: float
    mean_effort: float
    fault_rate: float
    mpe: np.ndarray
    maxpe: np.ndarray
    effort: np.ndarray


def aggregate(results) -> AggregateReport:
    """Arithmetic means plus the raw metric distributions."""
    if not results:
        return AggregateReport(0, math.nan, math.nan, math.nan, math.nan,
                               np.array([]), np.array([]), np.array([]))
    mpe = np.array([r.mpe for r in results])
    maxpe = np.array([r.maxpe for r in results])
    effort = np.array([r.effort for r in results])
    faults = np.array([r.fault is not None for r in results])
    return AggregateReport(
        n_trials=len(results),
        mean_mpe=float(mpe.mean()),
        mean_maxpe=float(maxpe.mean()),
        mean_effort=float(effort.mean()),
        fault_rate=float(faults.mean()),
        mpe=mpe,
        maxpe=maxpe,
        effort=effort,
    )


def write_results_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for result in results:
            writer.writerow(result.csv_row())
