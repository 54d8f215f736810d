"""Matplotlib figure rendering for evaluation reports.

Figures are written to files next to the CSV output; nothing is shown
interactively.
"""

from __future__ import annotations

import os
from collections import defaultdict
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _cells(rows: Sequence[dict]) -> Dict[Tuple[str, float], List[float]]:
    cells = defaultdict(list)
    for r in rows:
        cells[(r["strategy"], float(r["availability_p"]))].append(
            float(r["micro_f1"])
        )
    return cells


def strategy_bar_figure(rows: Sequence[dict], path: str,
                        availability_p: float = 1.0) -> str:
    """Mean micro-F1 per strategy (error bars = std over seeds) at one
    availability level."""
    cells = _cells(rows)
    strategies = sorted({s for (s, p) in cells if p == availability_p})
    means = [np.mean(cells[(s, availability_p)]) for s in strategies]
    stds = [np.std(cells[(s, availability_p)]) for s in strategies]

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(strategies)), means, yerr=stds, capsize=3,
           color="#4878cf", edgecolor="black", linewidth=0.6)
    ax.set_xticks(range(len(strategies)))
    ax.set_xticklabels(strategies, rotation=20, ha="right")
    ax.set_ylabel("micro F1")
    ax.set_ylim(0, 1)
    ax.set_title("Strategy comparison (p = %.1f)" % availability_p)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def robustness_figure(rows: Sequence[dict], path: str) -> str:
    """Mean micro-F1 versus availability probability, one line per
    strategy."""
    cells = _cells(rows)
    strategies = sorted({s for (s, _) in cells})
    p_values = sorted({p for (_, p) in cells})

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for s in strategies:
        ys = [np.mean(cells[(s, p)]) for p in p_values if (s, p) in cells]
        xs = [p for p in p_values if (s, p) in cells]
        ax.plot(xs, ys, marker="o", label=s)
    ax.set_xlabel("availability probability")
    ax.set_ylabel("micro F1")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.set_title("Robustness under dynamic availability")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report_figures(rows: Sequence[dict], out_dir: str) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    made = []
    p_values = sorted({float(r["availability_p"]) for r in rows})
    if p_values:
        made.append(strategy_bar_figure(
            rows, os.path.join(out_dir, "strategy_f1.png"),
            availability_p=p_values[-1],
        ))
    if len(p_values) > 1:
        made.append(robustness_figure(
            rows, os.path.join(out_dir, "robustness.png")))
    return made
