"""SVG figures: learning curves and manipulability traces."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed ids and no timestamp so reruns give identical files
    matplotlib.rcParams["svg.hashsalt"] = "swrl"
    return plt


def smooth(values, window: int) -> np.ndarray:
    """Trailing moving average; the first entries average what is available."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or window <= 1:
        return v.copy()
    c = np.cumsum(np.insert(v, 0, 0.0))
    out = np.empty_like(v)
    for i in range(v.size):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def _meta(tag: str) -> dict:
    return {"Date": None, "Description": tag}


def plot_learning_curves(curves: dict[str, dict[str, np.ndarray]], path: str | Path, tag: str = "",
                         window: int = 10):
    """``curves`` maps a run label to series ``return_K``, ``return_R`` and ``occupancy`` per episode."""
    plt = _plt()
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    for label, series in curves.items():
        for ax, key in zip(axes, ("occupancy", "return_K", "return_R")):
            y = np.asarray(series[key], dtype=float)
            ax.plot(np.arange(y.size), smooth(y, window), label=label, lw=1.2)
    for ax, title in zip(axes, ("steps in velocity band", "return (force policy)", "return (redundant policy)")):
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("episode")
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.suptitle(tag, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_meta(tag))
    plt.close(fig)


def plot_trace(traces: dict[str, list], path: str | Path, tag: str = ""):
    """Manipulability against object joint position, one line per method."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for label, tr in traces.items():
        if tr:
            th, w = zip(*tr)
            ax.plot(th, w, label=label, lw=1.2)
    ax.set_xlabel("joint position (rad)")
    ax.set_ylabel("manipulability")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(tag, fontsize=6)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_meta(tag))
    plt.close(fig)
