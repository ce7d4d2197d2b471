"""Metric histograms across evaluation campaigns.

Input: one or more results CSVs (columns trial, seed, path_id,
adversary_mode, mpe_m, maxpe_m, effort, fault, sat_*). Each file is a
group; files containing several adversary modes split further. One image
per metric, groups overlaid, group means annotated in the legend and
recomputed directly from the raw columns.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

METRICS = [("mpe_m", "mean path error [m]", "mpe_hist.png"),
           ("maxpe_m", "max path error [m]", "maxpe_hist.png"),
           ("effort", "control effort [-]", "effort_hist.png")]
REQUIRED_COLUMNS = {"trial", "adversary_mode", "mpe_m", "maxpe_m", "effort"}


def load_groups(csv_paths, labels=None) -> dict:
    """Map group name -> dataframe, splitting files by adversary mode."""
    if labels is not None and len(labels) != len(csv_paths):
        raise ValueError("need exactly one label per input CSV")
    groups: dict[str, pd.DataFrame] = {}
    for i, path in enumerate(csv_paths):
        frame = pd.read_csv(path)
        if frame.empty:
            raise ValueError(f"{path}: no trials in file")
        missing = REQUIRED_COLUMNS - set(frame.columns)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        label = labels[i] if labels else Path(path).stem
        modes = frame["adversary_mode"].unique()
        for mode in modes:
            name = label if len(modes) == 1 else f"{label}/{mode}"
            groups[name] = frame[frame["adversary_mode"] == mode]
    return groups


def plot_metric_histograms(groups: dict, bins: int = 40):
    """One overlaid histogram figure per metric.

    Returns (figures, means): figures keyed by output filename, means as
    {metric: {group: mean}} recomputed from the raw columns.
    """
    figures = {}
    means: dict[str, dict[str, float]] = {}
    for column, xlabel, filename in METRICS:
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        means[column] = {}
        for name, frame in groups.items():
            values = frame[column].to_numpy()
            mean = float(values.mean())
            means[column][name] = mean
            ax.hist(values, bins=bins, alpha=0.55,
                    label=f"{name} (mean {mean:.2f})")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("trials")
        ax.legend(fontsize=8)
        fig.tight_layout()
        figures[filename] = fig
    return figures, means


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="aeroduel-plot-metrics",
        description="Histogram panels of MPE / MaxPE / control effort per group",
    )
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="evaluation results CSV files")
    parser.add_argument("--labels", nargs="+", help="one group label per input file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--bins", type=int, default=40)
    args = parser.parse_args(argv)

    try:
        groups = load_groups(args.inputs, args.labels)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    figures, means = plot_metric_histograms(groups, bins=args.bins)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for filename, fig in figures.items():
        fig.savefig(out_dir / filename, dpi=150)
        plt.close(fig)
        print(f"wrote {out_dir / filename}")
    for column, _, _ in METRICS:
        for name, value in means[column].items():
            print(f"{column} mean[{name}] = {value:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
