"""SVG plots of recorded trajectories (routing rates, queue occupancy)."""

from __future__ import annotations

import numpy as np

from .io import FileFormatError

__all__ = ["plot_rates", "plot_queues"]


def _axes():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    # Keep label text as literal <text> elements so series names stay
    # greppable in the output file.
    matplotlib.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    return plt, fig, ax


def _save(fig, plt, out_path) -> None:
    # Drop the creation date so identical runs produce identical bytes.
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_rates(data: dict, out_path) -> None:
    """One labeled series per (type, pool) routing rate."""
    if data["x"] is None:
        raise FileFormatError("trajectory has no routing-rate columns to plot")
    plt, fig, ax = _axes()
    t = data["t"]
    m, n = data["m"], data["n"]
    for i in range(m):
        for j in range(n):
            ax.plot(t, data["x"][:, i, j], label=f"x_{i + 1}_{j + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("routing rate")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("routing rates by (type, pool)")
    fig.tight_layout()
    _save(fig, plt, out_path)


def plot_queues(data: dict, capacities, out_path) -> None:
    """One series per pool queue plus dashed lines at the capacities."""
    if data["q"] is None:
        raise FileFormatError("trajectory has no queue columns to plot")
    capacities = np.asarray(capacities, dtype=float)
    if capacities.size != data["n"]:
        raise FileFormatError(
            f"capacity vector has length {capacities.size}, trajectory has n = {data['n']}"
        )
    plt, fig, ax = _axes()
    t = data["t"]
    for j in range(data["n"]):
        (line,) = ax.plot(t, data["q"][:, j], label=f"q_{j + 1}")
        ax.axhline(capacities[j], linestyle="--", linewidth=0.9,
                   color=line.get_color(), alpha=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("queue occupancy")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("pool queues (dashed: capacity)")
    fig.tight_layout()
    _save(fig, plt, out_path)
