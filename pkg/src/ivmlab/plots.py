"""Figure rendering for the report path.

Every report-producing command saves a companion PNG next to its delimited
output.  Figures are a convenience view; the CSV/JSON files remain the
outputs of record.  PNG metadata is stripped so repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .abm import AbsorptionRecord, ParticlePath
from .analysis import PocResult
from .meanfield import OdeTrajectory

_STYLE = {
    "figure.figsize": (11.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
    "legend.framealpha": 0.9,
    "font.size": 10,
}

_SAVE_KWARGS = {"metadata": {"Software": None}, "bbox_inches": "tight"}


def _save(fig, path) -> None:
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def _state_labels(n_states: int) -> list[str]:
    return [f"$q_{{{i}}}$" for i in range(n_states)]


def plot_ode(traj: OdeTrajectory, path) -> None:
    """Left panel: weight components over time; right panel: mean opinion."""
    with plt.rc_context(_STYLE):
        fig, (ax_q, ax_m) = plt.subplots(1, 2)
        for i, label in enumerate(_state_labels(traj.space.n_states)):
            ax_q.plot(traj.times, traj.weights[:, i], label=label)
        ax_q.set_xlabel("t")
        ax_q.set_ylabel("weight")
        ax_q.set_title(f"opinion distribution (k={traj.space.k})")
        ax_q.legend(loc="best", ncol=2)
        ax_m.plot(traj.times, traj.means, color="black")
        ax_m.set_xlabel("t")
        ax_m.set_ylabel("M(t)")
        ax_m.set_ylim(-0.05, 2.0 * traj.space.k + 0.05)
        ax_m.set_title("mean opinion")
        _save(fig, path)


def plot_trajectory(times, marginals, k: int, path) -> None:
    """Empirical marginal snapshots of a stochastic run or ensemble mean."""
    marginals = np.asarray(marginals, dtype=float)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        for i, label in enumerate(_state_labels(marginals.shape[1])):
            ax.plot(times, marginals[:, i], marker="o", markersize=3, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel("empirical weight")
        ax.set_title(f"empirical opinion marginals (k={k})")
        ax.legend(loc="best", ncol=2)
        _save(fig, path)


def plot_absorption(records: list[AbsorptionRecord], path) -> None:
    """Histogram of absorption times, split by reached consensus."""
    left = [r.continuous_time for r in records if r.target == "left"]
    right = [r.continuous_time for r in records if r.target == "right"]
    unresolved = sum(not r.absorbed for r in records)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        all_times = left + right
        bins = max(10, min(50, len(all_times) // 20)) if all_times else 10
        ax.hist(
            [left, right],
            bins=bins,
            stacked=True,
            label=[f"left ({len(left)})", f"right ({len(right)})"],
            color=["tab:blue", "tab:red"],
        )
        title = f"absorption times over {len(records)} trials"
        if unresolved:
            title += f" ({unresolved} not absorbed within cap)"
        ax.set_title(title)
        ax.set_xlabel("absorption time")
        ax.set_ylabel("trials")
        ax.legend(loc="best")
        _save(fig, path)


def plot_poc(result: PocResult, path) -> None:
    """Log-log mean W1 against population size, one series per time."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        for t in result.t_list:
            rows = [r for r in result.rows if r.t == t]
            ns = [r.n for r in rows]
            means = [r.w1_mean for r in rows]
            errs = [r.w1_stderr for r in rows]
            ax.errorbar(
                ns, means, yerr=errs, marker="o", capsize=3,
                label=f"t={t:g} (slope {result.slopes[t]:.3f})",
            )
        ref_n = np.array(sorted(result.n_list), dtype=float)
        anchor = max(r.w1_mean for r in result.rows)
        ax.plot(
            ref_n, anchor * np.sqrt(ref_n[0] / ref_n), "--", color="gray",
            label=r"$N^{-1/2}$ reference",
        )
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel("mean marginal $W_1$")
        ax.set_title(f"marginal convergence scaling (k={result.space.k})")
        ax.legend(loc="best")
        _save(fig, path)


def plot_particle(particle: ParticlePath, path) -> None:
    """Step plot of a single mean-driven agent's opinion path."""
    k = particle.space.k
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(8.0, 3.5))
        ax.step(particle.times, particle.opinions, where="post", linewidth=0.9)
        ax.set_xlabel("t")
        ax.set_ylabel("opinion")
        ax.set_ylim(-k - 0.3, k + 0.3)
        ax.set_yticks(range(-k, k + 1))
        ax.set_title("mean-driven single-agent path")
        _save(fig, path)
