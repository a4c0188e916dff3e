"""Static SVG figures for study reports.

Rendering is byte-deterministic for fixed inputs: the SVG hash salt is
pinned and the date metadata is stripped, so golden-file comparisons work.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .controller import run_episode
from .experiments import _load, _with_overrides

plt.rcParams["svg.hashsalt"] = "pushlearn"

_COLORS = {
    "impedance": "#888888",
    "deform_only": "#2a7fbf",
    "learn_all": "#e07b39",
    "learn_one": "#7b4fa6",
    "qmdp": "#2f9e44",
}


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _draw_env(ax, scenario) -> None:
    env = scenario.env
    ax.set_xlim(env.bounds[0])
    ax.set_ylim(env.bounds[1])
    ax.axhline(env.table_y, color="#444444", lw=2)
    for center, radius in env.obstacles:
        ax.add_patch(plt.Circle(center, radius, color="#bbbbbb"))
    if env.laptop is not None:
        ax.add_patch(plt.Circle(env.laptop[0], env.laptop[1], color="#c0504d", alpha=0.6))
    if env.human_pos is not None:
        ax.plot(*env.human_pos, marker="*", ms=14, color="#c0504d")
    ax.plot(*scenario.q_start, "ko", ms=6)
    ax.plot(*scenario.q_goal, "k^", ms=7)
    ax.set_aspect("equal")


def _trajectory_overlay(scenario, modes, human_kind, seed, path: Path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    _draw_env(ax, scenario)
    sc = _with_overrides(scenario, human_kind=human_kind)
    for mode in modes:
        log = run_episode(sc, mode, seed=seed)
        ax.plot(log.xi_act[:, 0], log.xi_act[:, 1], color=_COLORS[mode], label=mode, lw=1.6)
    from . import planner, world

    desired = planner.plan(
        scenario.theta_true, scenario, world.straight_line(scenario.q_start, scenario.q_goal, scenario.T)
    )
    ax.plot(desired[:, 0], desired[:, 1], "b--", lw=1.2, label="desired")
    ax.legend(fontsize=7)
    ax.set_title(title, fontsize=9)
    _save(fig, path)


def _theta_curves(scenario, modes, human_kind, seeds, path: Path, title: str) -> None:
    fig, axes = plt.subplots(1, scenario.n_features, figsize=(3.2 * scenario.n_features, 3), squeeze=False)
    sc = _with_overrides(scenario, human_kind=human_kind)
    for mode in modes:
        histories = np.array([run_episode(sc, mode, seed=s).theta_history for s in seeds])
        mean = histories.mean(axis=0)
        sem = histories.std(axis=0) / np.sqrt(max(len(seeds), 1))
        ts = np.arange(mean.shape[0])
        for k, name in enumerate(scenario.feature_names):
            ax = axes[0, k]
            ax.plot(ts, mean[:, k], color=_COLORS[mode], label=mode)
            ax.fill_between(ts, mean[:, k] - sem[:, k], mean[:, k] + sem[:, k],
                            color=_COLORS[mode], alpha=0.2, lw=0)
    for k, name in enumerate(scenario.feature_names):
        ax = axes[0, k]
        ax.axhline(scenario.theta_true[k], color="k", ls=":", lw=1)
        ax.set_title(f"weight: {name}", fontsize=9)
        ax.set_xlabel("timestep", fontsize=8)
    axes[0, 0].legend(fontsize=7)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def _bar_chart(groups: dict[str, dict[str, float]], path: Path, title: str, ylabel: str) -> None:
    """groups: {group_label: {mode: value}}."""
    fig, ax = plt.subplots(figsize=(4.5, 3))
    labels = list(groups)
    modes = list(next(iter(groups.values())))
    width = 0.8 / max(len(modes), 1)
    xs = np.arange(len(labels))
    for i, mode in enumerate(modes):
        vals = [groups[g][mode] for g in labels]
        ax.bar(xs + i * width, vals, width, label=mode, color=_COLORS.get(mode, "#333333"))
    ax.set_xticks(xs + width * (len(modes) - 1) / 2)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel(ylabel, fontsize=8)
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def emit_plots(study: str, report: dict, out: Path, seeds=None) -> list[Path]:
    """Write the study's comparison figures; returns the emitted paths."""
    out = Path(out)
    seeds = list(seeds or [0])
    plot_seeds = seeds[: min(len(seeds), 20)]  # curve bands stay cheap
    emitted = []
    if study == "sim1":
        scenario = _load(report["scenario"])
        p = out / "sim1_trajectories.svg"
        _trajectory_overlay(scenario, ["impedance", "learn_all", "qmdp"], "optimal", seeds[0], p,
                            "executed paths (optimal human)")
        emitted.append(p)
        p = out / "sim1_theta.svg"
        _theta_curves(scenario, ["learn_all", "qmdp"], "boltzmann", plot_seeds, p,
                      "estimate vs. belief baseline")
        emitted.append(p)
        p = out / "sim1_regret.svg"
        groups = {
            hk: dict(report["summary"][hk]["normalized_regret"])
            for hk in ("optimal", "boltzmann")
        }
        _bar_chart(groups, p, "normalized regret", "regret / impedance regret")
        emitted.append(p)
    elif study == "sim2":
        scenario = _load(report["scenario"])
        p = out / "sim2_trajectories.svg"
        _trajectory_overlay(scenario, ["deform_only", "learn_all"], None, seeds[0], p,
                            "executed paths")
        emitted.append(p)
        p = out / "sim2_corrections.svg"
        groups = {
            f"mu={mu:g}": {m: vals["correction_steps"] for m, vals in per_mode.items()}
            for mu, per_mode in report["summary"].items()
        }
        _bar_chart(groups, p, "corrections needed", "correction timesteps")
        emitted.append(p)
        p = out / "sim2_effort.svg"
        groups = {
            f"mu={mu:g}": {m: vals["iact_force"] for m, vals in per_mode.items()}
            for mu, per_mode in report["summary"].items()
        }
        _bar_chart(groups, p, "human effort", "total interaction force (N)")
        emitted.append(p)
    elif study == "sim3":
        scenario = _load(report["scenario"])
        p = out / "sim3_trajectories.svg"
        _trajectory_overlay(scenario, ["learn_all", "learn_one"], "noisy", seeds[0], p,
                            "executed paths (noisy human)")
        emitted.append(p)
        for hk in ("optimal", "noisy"):
            p = out / f"sim3_theta_{hk}.svg"
            _theta_curves(scenario, ["learn_all", "learn_one"], hk, plot_seeds, p,
                          f"weight estimates ({hk} human)")
            emitted.append(p)
        p = out / "sim3_away.svg"
        groups = {
            hk: {m: report["summary"][hk][m]["away_human"] for m in ("learn_all", "learn_one")}
            for hk in ("optimal", "noisy")
        }
        _bar_chart(groups, p, "updates away from the true weight (human feature)", "count")
        emitted.append(p)
    else:
        raise ValueError(f"unknown study {study!r}")
    return emitted
