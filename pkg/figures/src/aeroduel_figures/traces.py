"""State, input, path, and perturbation histories from one episode trace.

Input: a trace CSV from the simulator's `simulate` command (one row per
step: truth state, reference state, measurements, actions, commands,
coefficient offsets, reward terms, margins). Produces one image per panel
group, each truth series plotted against its reference.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

# Aerodynamic coefficient offset envelope of the modeled airframe, in the
# trace's dC_* column order; drawn as bound lines on the perturbation panel.
DELTA_C_BOUNDS = {
    "dC_X": 0.0258,
    "dC_Y": 0.0510,
    "dC_Z": 0.0872,
    "dC_L": 0.0204,
    "dC_M": 0.0330,
    "dC_N": 0.0084,
}

PANELS = {
    "rates.png": (["p", "q", "r"], "body rates [rad/s]"),
    "velocities.png": (["u", "v", "w"], "body velocity [m/s]"),
    "attitude.png": (["phi", "theta", "psi"], "attitude [rad]"),
    "position.png": (["x", "y", "z"], "position [m]"),
    "inputs.png": (["cmd_E", "cmd_A", "cmd_R", "cmd_T"], "commanded inputs"),
}

REQUIRED = (
    {"k", "pos_error"}
    | {c for cols, _ in PANELS.values() for c in cols}
    | {f"ref_{c}" for cols, _ in list(PANELS.values())[:4] for c in cols}
    | set(DELTA_C_BOUNDS)
)


def load_trace(path) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if frame.empty:
        raise ValueError(f"{path}: empty trace")
    missing = REQUIRED - set(frame.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return frame


def plot_episode_trace(frame: pd.DataFrame, dt: float = 0.04):
    """Render all panels; returns {filename: Figure}."""
    t = frame["k"].to_numpy() * dt
    figures = {}

    for filename, (cols, ylabel) in PANELS.items():
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for col in cols:
            (line,) = ax.plot(t, frame[col], label=col)
            ref = f"ref_{col}"
            if ref in frame.columns:
                ax.plot(t, frame[ref], linestyle="--", linewidth=0.9,
                        color=line.get_color(), alpha=0.7)
        ax.set_xlabel("time [s]")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=8)
        fig.tight_layout()
        figures[filename] = fig

    # Overhead path: reference overlay is the defining feature.
    fig, ax = plt.subplots(figsize=(4.4, 4.4))
    ax.plot(frame["y"], frame["x"], label="flown")
    ax.plot(frame["ref_y"], frame["ref_x"], "--", label="reference")
    ax.set_xlabel("east [m]")
    ax.set_ylabel("north [m]")
    ax.set_aspect("equal")
    ax.legend(fontsize=8)
    fig.tight_layout()
    figures["path.png"] = fig

    # Coefficient offsets with their symmetric bounds.
    fig, axes = plt.subplots(3, 2, figsize=(7.0, 6.0), sharex=True)
    for ax, (col, bound) in zip(axes.ravel(), DELTA_C_BOUNDS.items()):
        ax.plot(t, frame[col], linewidth=0.9)
        ax.axhline(bound, color="k", linestyle=":", linewidth=0.8)
        ax.axhline(-bound, color="k", linestyle=":", linewidth=0.8)
        ax.set_ylabel(col)
    for ax in axes[-1]:
        ax.set_xlabel("time [s]")
    fig.tight_layout()
    figures["perturbations.png"] = fig
    return figures


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="aeroduel-plot-trace",
        description="State/input/path/perturbation panels from an episode trace CSV",
    )
    parser.add_argument("--in", dest="trace", required=True, help="trace CSV file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--dt", type=float, default=0.04, help="step size, s")
    args = parser.parse_args(argv)

    try:
        frame = load_trace(args.trace)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    figures = plot_episode_trace(frame, dt=args.dt)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for filename, fig in figures.items():
        fig.savefig(out_dir / filename, dpi=150)
        plt.close(fig)
        print(f"wrote {out_dir / filename}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
