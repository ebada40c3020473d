"""Figure rendering for episode logs and benchmark tables.

Headless by design: the Agg backend draws straight to files next to the
delimited outputs, no display required.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .sim.episode import EpisodeLog
from .sim.scenario import Scenario


def fig_traces(log: EpisodeLog, scenario: Scenario, path) -> None:
    """Force magnitudes, belief, and goal distance over time."""
    t = log.times()
    fh = log.wrench_trace()
    fr = log.command_trace()
    bel = log.belief_trace()
    st = log.state_trace()

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 7))
    axes[0].plot(t, np.linalg.norm(fh[:, :3], axis=1), label="human |f|")
    axes[0].plot(t, np.linalg.norm(fr[:, :3], axis=1), label="robot |f|")
    axes[0].set_ylabel("force [N]")
    axes[0].legend(loc="upper right")

    for i in range(bel.shape[1]):
        axes[1].plot(t, bel[:, i], label=f"mode {i}")
    axes[1].set_ylabel("belief")
    axes[1].set_ylim(-0.05, 1.05)
    axes[1].legend(loc="center right")

    for i in range(scenario.n_modes):
        d = np.linalg.norm(st[:, :3] - scenario.goal_of(i).p, axis=1)
        axes[2].plot(t, d, label=f"goal {i}")
    axes[2].set_ylabel("distance [m]")
    axes[2].set_xlabel("time [s]")
    axes[2].legend(loc="upper right")

    fig.suptitle(f"episode: {log.metadata.get('scenario', '?')}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_topdown(log: EpisodeLog, scenario: Scenario, path, plan_every: int = 15) -> None:
    """Plan-view trajectory with goals and planned pose sequences."""
    st = log.state_trace()
    fig, ax = plt.subplots(figsize=(6.5, 6))
    ax.plot(st[:, 0], st[:, 1], "k-", lw=1.5, label="executed")
    ax.plot(st[0, 0], st[0, 1], "ko", ms=6)
    for i in range(scenario.n_modes):
        g = scenario.goal_of(i).p
        ax.plot(g[0], g[1], "*", ms=16, label=f"goal {i}")

    planned = [r for r in log.records if "plan" in r]
    for rec in planned[::plan_every]:
        for mi, poses in enumerate(rec["plan"]["poses"]):
            P = np.asarray(poses)
            ax.plot(P[:, 0], P[:, 1], "--", lw=0.8, alpha=0.5, color=f"C{mi}")

    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("plan view")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_bench(results, path) -> None:
    """Cold / average-warm / worst-warm bars per option row."""
    labels = [r.options.label().replace(" ", "\n") for r in results]
    x = np.arange(len(results))
    width = 0.27
    fig, ax = plt.subplots(figsize=(1.9 * len(results) + 2, 5))
    ax.bar(x - width, [r.cold_s for r in results], width, label="cold")
    ax.bar(x, [r.avg_warm_s for r in results], width, label="avg warm")
    ax.bar(x + width, [r.worst_warm_s for r in results], width, label="worst warm")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("solve time [s]")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("planner cost by problem options")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
