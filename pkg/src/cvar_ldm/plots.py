"""Figure rendering for experiment results and optimizer traces.

Everything draws through the Agg backend and writes straight to files,
so the module works in headless runs.  Figures are a convenience layer
on top of the CSV outputs, which remain the tested contract.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_experiment", "render_trace"]

_AXIS_LABELS = {
    "m": "number of layers",
    "power_db": "transmit power [dB]",
    "beta": "tail fraction",
    "n": "dataset size",
    "d": "number of previous deployments",
}

_METRIC_LABELS = {
    "fig3": "expected rate [bpcu]",
    "fig4": "expected-rate gain over one layer",
    "fig5": "tail-average rate [bpcu]",
    "fig6": "tail-average rate [bpcu]",
    "fig7": "tail-average rate [bpcu]",
    "custom": "tail-average rate [bpcu]",
}


def render_experiment(rows, spec, path: str) -> str:
    """Draw one errorbar curve per arm and save the figure to ``path``."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    arms = []
    for r in rows:
        if r.arm not in arms:
            arms.append(r.arm)
    for arm in arms:
        sub = [r for r in rows if r.arm == arm]
        x = np.array([r.sweep for r in sub], dtype=float)
        y = np.array([r.mean for r in sub])
        e = np.array([r.stderr for r in sub])
        ax.errorbar(x, y, yerr=e, marker="o", capsize=3, label=arm)
    if spec.sweep in ("n", "beta") and len(spec.grid) > 1:
        lo, hi = min(spec.grid), max(spec.grid)
        if lo > 0 and hi / lo >= 50:
            ax.set_xscale("log")
    ax.set_xlabel(_AXIS_LABELS.get(spec.sweep, spec.sweep))
    ax.set_ylabel(_METRIC_LABELS.get(spec.scenario, "metric"))
    ax.set_title(f"{spec.scenario} (R={spec.replications}, seed={spec.seed})")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_trace(objectives, path: str, ylabel: str = "objective [bpcu]") -> str:
    """Plot an optimizer's objective path against the iteration count."""
    obj = np.asarray(objectives, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(np.arange(obj.size), obj)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
