"""Scalar evaluation measures computed from episode logs.

All metrics are pure functions of (log, scenario). The normalized-regret
convention used in study summaries divides a mode's mean executed regret by
the impedance-mode mean regret over the same seeds; that normalization is a
reconstruction and is isolated in normalized_regret() so alternates are a
one-line swap.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import features, planner
from .controller import INTERACTION_DEADBAND, EpisodeLog
from .world import Scenario, straight_line


@dataclass(frozen=True)
class MetricReport:
    regret_exec: float
    regret_final: float
    dot_final: float
    dot_avg: float
    iact_force: float
    iact_time: float
    weight_path_length: np.ndarray  # per feature
    away_counts: np.ndarray  # per feature, integer-valued
    feature_diffs: np.ndarray  # per feature, |Phi(ideal) - Phi(executed)|


def _ideal_trajectory(scenario: Scenario) -> np.ndarray:
    init = straight_line(scenario.q_start, scenario.q_goal, scenario.T)
    return planner.plan(scenario.theta_true, scenario, init)


def regret_exec(log: EpisodeLog, scenario: Scenario) -> float:
    """True-reward gap between the ideal trajectory and the executed path."""
    xi_theta = _ideal_trajectory(scenario)
    r_star = planner.reward(xi_theta, scenario.theta_true, scenario.env, scenario.feature_names)
    r_act = planner.reward(log.xi_act, scenario.theta_true, scenario.env, scenario.feature_names)
    return r_star - r_act


def regret_final(log: EpisodeLog, scenario: Scenario) -> float:
    """True-reward gap between the ideal trajectory and the final learned plan."""
    xi_theta = _ideal_trajectory(scenario)
    theta_T = log.theta_history[-1]
    init = straight_line(scenario.q_start, scenario.q_goal, scenario.T)
    xi_learned = planner.plan(theta_T, scenario, init)
    names = scenario.feature_names
    r_star = planner.reward(xi_theta, scenario.theta_true, scenario.env, names)
    r_learned = planner.reward(xi_learned, scenario.theta_true, scenario.env, names)
    return r_star - r_learned


def dot_metrics(log: EpisodeLog, scenario: Scenario) -> tuple[float, float]:
    """(final, time-averaged) dot product of the estimate with the true weights."""
    theta = scenario.theta_true
    dots = log.theta_history @ theta
    return float(dots[-1]), float(np.mean(dots))


def interaction_metrics(log: EpisodeLog) -> tuple[float, float]:
    """Total interaction force (l1 norm summed) and interaction time (s)."""
    forces = log.forces()
    if forces.size == 0:
        return 0.0, 0.0
    iact_force = float(np.sum(np.abs(forces)))
    pushing = np.linalg.norm(forces, axis=1) > INTERACTION_DEADBAND
    return iact_force, float(np.count_nonzero(pushing)) * log.dt


def correction_steps(log: EpisodeLog) -> int:
    """Number of timesteps with an interaction above the deadband."""
    forces = log.forces()
    if forces.size == 0:
        return 0
    return int(np.count_nonzero(np.linalg.norm(forces, axis=1) > INTERACTION_DEADBAND))


def weight_path_and_away(log: EpisodeLog, theta_true: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature path length through weight space and away-update counts.

    An update counts as "away" when the component moves and either points
    against the sign of the remaining gap to the true weight or moves off an
    already-correct weight. Zero-magnitude component updates never count.
    """
    hist = np.asarray(log.theta_history, float)
    steps = np.diff(hist, axis=0)
    path = np.sum(np.abs(steps), axis=0)
    gaps = theta_true[None, :] - hist[:-1]
    moved = steps != 0.0
    against = np.sign(steps) == -np.sign(gaps)
    off_correct = gaps == 0.0
    away = np.sum(moved & (against | off_correct), axis=0)
    return path, away.astype(int)


def feature_diffs(log: EpisodeLog, scenario: Scenario) -> np.ndarray:
    """|Phi(ideal) - Phi(executed)| per feature."""
    xi_theta = _ideal_trajectory(scenario)
    names = scenario.feature_names
    phi_star = features.feature_count(xi_theta, scenario.env, names)
    phi_act = features.feature_count(log.xi_act, scenario.env, names)
    return np.abs(phi_star - phi_act)


def report(log: EpisodeLog, scenario: Scenario) -> MetricReport:
    dot_final, dot_avg = dot_metrics(log, scenario)
    iact_force, iact_time = interaction_metrics(log)
    path, away = weight_path_and_away(log, scenario.theta_true)
    return MetricReport(
        regret_exec=regret_exec(log, scenario),
        regret_final=regret_final(log, scenario),
        dot_final=dot_final,
        dot_avg=dot_avg,
        iact_force=iact_force,
        iact_time=iact_time,
        weight_path_length=path,
        away_counts=away,
        feature_diffs=feature_diffs(log, scenario),
    )


def normalized_regret(mode_mean_regret: float, impedance_mean_regret: float) -> float:
    """Regret relative to the same-seed impedance baseline mean."""
    return mode_mean_regret / impedance_mean_regret


# CSV schema: one row per episode. Fixed column order: the three identifiers,
# the scalar metrics, then per-feature columns grouped metric-first in the
# scenario's feature order.

_SCALAR_FIELDS = ("regret_exec", "regret_final", "dot_final", "dot_avg", "iact_force", "iact_time")


def csv_header(feature_names) -> list[str]:
    cols = ["scenario_id", "mode", "seed", *_SCALAR_FIELDS]
    for metric in ("wpath", "away", "fdiff"):
        cols.extend(f"{metric}_{name}" for name in feature_names)
    return cols


def csv_row(log: EpisodeLog, scenario: Scenario, rep: MetricReport | None = None) -> list[str]:
    rep = rep if rep is not None else report(log, scenario)
    row = [scenario.name, log.mode, str(log.seed)]
    row.extend(repr(float(getattr(rep, f))) for f in _SCALAR_FIELDS)
    row.extend(repr(float(v)) for v in rep.weight_path_length)
    row.extend(str(int(v)) for v in rep.away_counts)
    row.extend(repr(float(v)) for v in rep.feature_diffs)
    return row


def format_rows(rows: list[list[str]], feature_names) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(feature_names))
    writer.writerows(rows)
    return buf.getvalue()
