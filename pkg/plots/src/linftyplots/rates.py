"""Formatted rate tables and log-log convergence plots."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import io


@dataclass
class RateRender:
    table_path: str
    plot_path: Optional[str]
    slope: Optional[float]
    warning: Optional[str]


def fit_slope(rows) -> Optional[float]:
    if len(rows) < 2:
        return None
    hs = np.log([r.h for r in rows])
    es = np.log([r.error for r in rows])
    return float(np.polyfit(hs, es, 1)[0])


def render_rate_table(csv_path: str, out_dir: str,
                      image_format: str = "png") -> RateRender:
    """Write the table text file and, with two or more rows, a log-log plot.

    Fewer than two rows produce the table only, with a no-fit warning;
    an empty file is an error.
    """
    rows = io.load_rate_table(csv_path)
    if not rows:
        raise io.ArtifactError(f"rate table {csv_path} has no rows")
    os.makedirs(out_dir, exist_ok=True)
    slope = fit_slope(rows)

    lines = [f"{'n':>7} {'h':>12} {'p':>7} {'error':>14}"]
    for r in rows:
        lines.append(f"{r.n:7d} {r.h:12.6g} {r.p:7g} {r.error:14.6e}")
    warning = None
    if slope is not None:
        lines.append(f"fitted slope: {slope:.4f}")
    else:
        warning = "fewer than 2 rows: no slope fitted"
        lines.append(f"warning: {warning}")
    table_path = os.path.join(out_dir, "rate_table.txt")
    with open(table_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    plot_path = None
    if slope is not None:
        hs = np.array([r.h for r in rows])
        es = np.array([r.error for r in rows])
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        ax.loglog(hs, es, "o-", label="measured")
        ref = es[0] * (hs / hs[0]) ** slope
        ax.loglog(hs, ref, "--", color="gray",
                  label=f"slope {slope:.3f}")
        ax.set_xlabel("h")
        ax.set_ylabel("sup-norm error")
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        plot_path = os.path.join(out_dir, f"rate_plot.{image_format}")
        fig.tight_layout()
        fig.savefig(plot_path, dpi=150)
        plt.close(fig)

    return RateRender(table_path, plot_path, slope, warning)
