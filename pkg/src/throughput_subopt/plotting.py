"""PNG figures written next to the CSV outputs (Agg backend, no display needed)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _finite(xs, ys):
    pts = [(x, y) for x, y in zip(xs, ys) if not (isinstance(y, float) and math.isnan(y))]
    return [p[0] for p in pts], [p[1] for p in pts]


def plot_sweep(summary: list[dict], path) -> None:
    """Median busy fraction against n with the interquartile band."""
    ns = [r["n"] for r in summary]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x, med = _finite(ns, [r["busy_median"] for r in summary])
    _, q1 = _finite(ns, [r["busy_q1"] for r in summary])
    _, q3 = _finite(ns, [r["busy_q3"] for r in summary])
    if x:
        ax.fill_between(x, q1, q3, alpha=0.25, lw=0)
        ax.plot(x, med, "o-")
    else:
        ax.text(0.5, 0.5, "no completed runs", ha="center", va="center", transform=ax.transAxes)
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("busy fraction")
    ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectory(traj, x_star, path) -> None:
    """Deviation from x* and total queue over time, with drain intervals shaded."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(6, 4.5), sharex=True)
    dev = abs(traj.X - x_star).sum(axis=1)
    ax0.plot(traj.t, dev, lw=1)
    ax0.set_ylabel("||X - x*||")
    ax1.plot(traj.t, traj.Y.sum(axis=1), lw=1)
    ax1.set_ylabel("e.Y")
    ax1.set_xlabel("t")
    for start, end, _ in traj.drain_intervals():
        for ax in (ax0, ax1):
            ax.axvspan(start, end, color="0.85", lw=0)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
