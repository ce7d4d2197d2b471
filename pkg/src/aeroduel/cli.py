"""Command-line entry point: trim, gen-paths, simulate, train, evaluate.

Every command takes --config (JSON experiment file) and --seed; all outputs
are reproducible from config plus seed. Training runs live in a run
directory holding the resolved config, a manifest, per-iteration
checkpoints, and the metrics log.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dynamics import DynamicsModel
from .env import PathFollowingEnv
from .evaluate import (
    Polyline,
    aggregate,
    metrics_from_trace,
    resolve_adversary,
    resolve_policy,
    run_episode,
    run_trials,
    write_results_csv,
    write_trace_csv,
)
from .rarl import RarlTrainer, make_envs
from .reference import build_catalog, save_catalog
from .trim import TrimError, TrimSpec, solve_trim

RUN_ROOT_ENV_VAR = "AERODUEL_RUN_ROOT"


def load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def build_world(cfg: ExperimentConfig):
    """Model and path catalog for one experiment configuration."""
    model = DynamicsModel(cfg.vehicle)
    catalog = build_catalog(
        model, cfg.paths.kappas, cfg.paths.gammas,
        cfg.paths.leg_length, cfg.paths.dt, cfg.paths.v_nom,
    )
    return model, catalog


def apply_disturbance_flags(cfg: ExperimentConfig, args) -> None:
    if getattr(args, "no_noise", False):
        cfg.env.noise = False
    if getattr(args, "no_wind", False):
        cfg.env.wind = False
    if getattr(args, "no_gust", False):
        cfg.env.gust = False
    if getattr(args, "no_delay", False):
        cfg.env.delay = False
    if getattr(args, "wind", None) is not None:
        cfg.env.wind_speed_range = (args.wind[0], args.wind[1])


def _git_describe() -> str | None:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def write_manifest(run_dir: Path, cfg: ExperimentConfig, argv) -> None:
    manifest = {
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "argv": list(argv),
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "package_version": __version__,
        "git_describe": _git_describe(),
    }
    with open(run_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


# -- commands -----------------------------------------------------------------


def cmd_trim(args) -> int:
    cfg = load_config(args)
    model = DynamicsModel(cfg.vehicle)
    try:
        trim = solve_trim(TrimSpec(args.kappa, args.gamma, cfg.paths.v_nom), model)
    except TrimError as exc:
        print(f"trim failed: {exc}", file=sys.stderr)
        return 1
    print(f"trim kappa={args.kappa} gamma={args.gamma} V={cfg.paths.v_nom} m/s")
    print(f"  phi   = {trim.phi:+.6f} rad")
    print(f"  theta = {trim.theta:+.6f} rad")
    print(f"  v     = [{trim.v[0]:+.4f} {trim.v[1]:+.4f} {trim.v[2]:+.4f}] m/s")
    print(f"  omega = [{trim.omega[0]:+.5f} {trim.omega[1]:+.5f} {trim.omega[2]:+.5f}] rad/s")
    print(f"  delta = [{trim.delta[0]:+.5f} {trim.delta[1]:+.5f} {trim.delta[2]:+.5f} {trim.delta[3]:+.3f}]")
    print(f"  psi_dot = {trim.psi_dot:+.6f} rad/s")
    print(f"  residual = {trim.residual:.3e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(trim.to_dict(), fh, indent=2)
        print(f"wrote {args.json}")
    return 0


def cmd_gen_paths(args) -> int:
    cfg = load_config(args)
    _, catalog = build_world(cfg)
    save_catalog(catalog, args.out)
    total = sum(p.n_steps for p in catalog)
    print(f"wrote {len(catalog)} paths ({total} reference steps) to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    apply_disturbance_flags(cfg, args)
    # Example episodes run for the full nominal loop duration; the abort
    # radius is a training aid, not an evaluation rule.
    cfg.env.abort_radius = args.abort_radius
    policy = resolve_policy(args.checkpoint or args.policy)
    adversary_mode, adversary_policy = resolve_adversary(args.adversary)
    cfg.env.adversary = adversary_mode
    model, catalog = build_world(cfg)
    env = PathFollowingEnv(catalog, cfg.env, seed=cfg.seed, model=model)
    action_rng = np.random.default_rng([cfg.seed, 7919])
    trace = run_episode(env, policy, adversary_policy, action_rng, path_id=args.path_id)
    write_trace_csv(trace, args.out)
    mpe, maxpe, effort, _ = metrics_from_trace(trace, Polyline(catalog[trace.path_id].positions))
    fault = trace.fault or "none"
    print(f"episode: path {trace.path_id}, {trace.n_rows - 1} steps, fault={fault}")
    print(f"  MPE = {mpe:.3f} m  MaxPE = {maxpe:.3f} m  effort = {effort:.3f}")
    print(f"wrote {args.out}")
    return 0


def cmd_train(args) -> int:
    if args.resume:
        run_dir = Path(args.resume)
        cfg = ExperimentConfig.from_json(run_dir / "config.json")
    else:
        cfg = load_config(args)
        apply_disturbance_flags(cfg, args)
        if args.envs is not None:
            cfg.ppo.n_envs = args.envs
        if args.steps is not None:
            cfg.ppo.n_steps = args.steps
        if args.adversary is not None:
            cfg.env.adversary = args.adversary
        if args.iters is not None:
            cfg.rarl.n_iter = args.iters
        if args.run_dir:
            run_dir = Path(args.run_dir)
        else:
            root = Path(args.out_root or os.environ.get(RUN_ROOT_ENV_VAR, "runs"))
            stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%d-%H%M%S")
            run_dir = root / (f"{stamp}-{args.tag}" if args.tag else stamp)
    run_dir.mkdir(parents=True, exist_ok=True)

    model, catalog = build_world(cfg)
    envs = make_envs(catalog, cfg.env, cfg.ppo.n_envs, seed=cfg.seed, model=model)
    trainer = RarlTrainer(envs, cfg.ppo, cfg.rarl, seed=cfg.seed)
    if args.resume:
        trainer.load_state(run_dir)
        n_iter = args.iters if args.iters is not None else cfg.rarl.n_iter - trainer.iteration
        print(f"resumed at iteration {trainer.iteration}; training {n_iter} more")
    else:
        cfg.to_json(run_dir / "config.json")
        write_manifest(run_dir, cfg, sys.argv[1:])
        n_iter = cfg.rarl.n_iter

    trainer.train(n_iter, run_dir=run_dir)
    trainer.save_state(run_dir)
    metrics = run_dir / "logs" / "metrics.csv"
    print(f"trained {trainer.iteration} iterations ({trainer.env_steps} env steps)")
    print(f"metrics: {metrics}")
    print(f"checkpoints: {run_dir / 'checkpoints'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args)
    apply_disturbance_flags(cfg, args)
    cfg.env.abort_radius = args.abort_radius
    adversary_mode, _ = resolve_adversary(args.adversary)
    cfg.env.adversary = adversary_mode
    model, catalog = build_world(cfg)
    results = run_trials(
        args.checkpoint or args.policy, args.adversary, args.trials, cfg.seed,
        catalog, cfg.env, model=model, jobs=args.jobs,
    )
    write_results_csv(results, args.out)
    report = aggregate(results)
    print(f"{report.n_trials} trials (adversary={args.adversary}):")
    if report.n_trials:
        print(f"  mean MPE    = {report.mean_mpe:.3f} m (median {float(np.median(report.mpe)):.3f})")
        print(f"  mean MaxPE  = {report.mean_maxpe:.3f} m")
        print(f"  mean effort = {report.mean_effort:.3f}")
        print(f"  fault rate  = {report.fault_rate:.2%}")
    print(f"wrote {args.out}")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aeroduel",
        description="Adversarially trained path following for a fixed-wing sUAS",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")

    p_trim = sub.add_parser("trim", help="solve one steady-flight trim")
    add_common(p_trim)
    p_trim.add_argument("--kappa", type=float, required=True, help="inverse turn radius, 1/m")
    p_trim.add_argument("--gamma", type=float, required=True, help="flight path angle, rad")
    p_trim.add_argument("--json", help="write the trim point to this JSON file")
    p_trim.set_defaults(func=cmd_trim)

    p_gen = sub.add_parser("gen-paths", help="write the reference path catalog")
    add_common(p_gen)
    p_gen.add_argument("--out", default="paths.json", help="catalog output file")
    p_gen.set_defaults(func=cmd_gen_paths)

    def add_disturbance_flags(p):
        p.add_argument("--no-noise", action="store_true", help="disable sensor noise")
        p.add_argument("--no-wind", action="store_true", help="disable steady wind")
        p.add_argument("--no-gust", action="store_true", help="disable gusts")
        p.add_argument("--no-delay", action="store_true", help="disable input delay")
        p.add_argument("--wind", type=float, nargs=2, metavar=("LO", "HI"),
                       help="steady wind speed range, m/s")

    p_sim = sub.add_parser("simulate", help="run one episode and export the trace")
    add_common(p_sim)
    add_disturbance_flags(p_sim)
    p_sim.add_argument("--abort-radius", type=float, default=float("inf"),
                       help="early-termination position error, m (default: off)")
    p_sim.add_argument("--checkpoint", help="protagonist checkpoint JSON")
    p_sim.add_argument("--policy", default="zero", choices=["zero", "random"],
                       help="builtin policy when no checkpoint is given")
    p_sim.add_argument("--adversary", default="none",
                       help="none | stochastic | adversary checkpoint path")
    p_sim.add_argument("--path-id", type=int, default=None, help="catalog index; random if omitted")
    p_sim.add_argument("--out", default="trace.csv", help="trace CSV output")
    p_sim.set_defaults(func=cmd_simulate)

    p_train = sub.add_parser("train", help="alternating adversarial training")
    add_common(p_train)
    add_disturbance_flags(p_train)
    p_train.add_argument("--iters", type=int, default=None, help="training iterations")
    p_train.add_argument("--envs", type=int, default=None, help="parallel environments")
    p_train.add_argument("--steps", type=int, default=None, help="rollout steps per env")
    p_train.add_argument("--adversary", default=None, choices=["policy", "stochastic", "none"])
    p_train.add_argument("--run-dir", help="exact run directory (overrides --out-root/--tag)")
    p_train.add_argument("--out-root", help=f"runs root (default ${RUN_ROOT_ENV_VAR} or ./runs)")
    p_train.add_argument("--tag", help="suffix for the timestamped run directory")
    p_train.add_argument("--resume", help="existing run directory to continue")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="batched metric trials")
    add_common(p_eval)
    add_disturbance_flags(p_eval)
    p_eval.add_argument("--abort-radius", type=float, default=float("inf"),
                        help="early-termination position error, m (default: off)")
    p_eval.add_argument("--checkpoint", help="protagonist checkpoint JSON")
    p_eval.add_argument("--policy", default="zero", choices=["zero", "random"],
                        help="builtin policy when no checkpoint is given")
    p_eval.add_argument("--adversary", default="stochastic",
                        help="none | stochastic | adversary checkpoint path")
    p_eval.add_argument("--trials", type=int, default=100)
    p_eval.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    p_eval.add_argument("--out", default="results.csv", help="results CSV output")
    p_eval.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
