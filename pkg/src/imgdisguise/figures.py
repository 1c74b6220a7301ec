"""Render report CSVs into figures saved alongside the delimited output.

Whenever a report sweeps a parameter (known-pair counts, noise levels,
block counts), each metric that varies gets a line chart: one PNG per
(metric, sweep axis) next to the CSV. Purely presentational; the CSV stays
the contract.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["render_report_figures"]

_SWEEP_AXES = ["pairs", "noise", "p", "t", "k", "k_mix"]
_METRICS = ["hit_rate", "success_rate", "mse", "acc_disguised", "utility_gap", "dist_deviation"]


def _read_rows(csv_path) -> list[dict]:
    with open(csv_path, newline="") as fh:
        return list(csv.DictReader(fh))


def _numeric(rows, column):
    values = []
    for row in rows:
        raw = row.get(column, "")
        if raw in ("", None):
            values.append(None)
        else:
            try:
                values.append(float(raw))
            except ValueError:
                values.append(None)
    return values


def render_report_figures(csv_path, out_dir=None) -> list[Path]:
    """Write one PNG per varying (sweep axis, metric) pair; returns the paths."""
    csv_path = Path(csv_path)
    out_dir = Path(out_dir) if out_dir else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _read_rows(csv_path)
    if not rows:
        return []
    written = []
    for axis in _SWEEP_AXES:
        xs = _numeric(rows, axis)
        levels = sorted({x for x in xs if x is not None})
        if len(levels) < 2:
            continue
        for metric in _METRICS:
            ys = _numeric(rows, metric)
            points = [(x, y) for x, y in zip(xs, ys) if x is not None and y is not None]
            if len({x for x, _ in points}) < 2:
                continue
            means = []
            for level in levels:
                group = [y for x, y in points if x == level]
                if group:
                    means.append((level, sum(group) / len(group)))
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.plot([x for x, _ in means], [y for _, y in means], marker="o")
            ax.set_xlabel(axis)
            ax.set_ylabel(metric)
            ax.set_title(f"{metric} vs {axis}")
            ax.grid(True, alpha=0.4)
            fig.tight_layout()
            path = out_dir / f"{csv_path.stem}_{metric}_vs_{axis}.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)
    return written
