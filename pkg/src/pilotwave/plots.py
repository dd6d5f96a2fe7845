"""Static PNG plots of histograms and trajectory fans (optional emit)."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FAN_TRAJECTORIES = 200


def plot_histogram(path: str, name: str, h) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    centres = 0.5 * (h.edges[1:] + h.edges[:-1])
    widths = np.diff(h.edges)
    n = h.counts.sum()
    ax.bar(centres, h.counts / n, width=widths, alpha=0.5, label="trajectories")
    ax.step(centres, h.expected / h.expected.sum(), where="mid", color="k", lw=1, label="|psi|^2")
    ax.set_xlim(h.edges[1], h.edges[-2])
    ax.set_title(name)
    ax.set_ylabel("probability per bin")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_fan(path: str, ens, axis: int) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    step = max(1, len(ens) // FAN_TRAJECTORIES)
    order = np.argsort(ens.initial[:, axis], kind="stable")[::step]
    ax.plot(ens.times, ens.positions[order, :, axis].T, lw=0.4, color="tab:blue")
    ax.set_xlabel("t")
    name = ens.axis_names[axis] if ens.axis_names else f"x{axis}"
    ax.set_ylabel(name)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_plots(out: str, report) -> list[str]:
    paths = []
    for name, h in sorted(report.histograms.items()):
        p = os.path.join(out, f"hist_{name}.png")
        plot_histogram(p, name, h)
        paths.append(p)
    ens = report.ensemble
    if ens is not None and len(ens.times) > 1:
        for a in range(ens.positions.shape[2]):
            p = os.path.join(out, f"fan_{a}.png")
            plot_fan(p, ens, a)
            paths.append(p)
    return paths
