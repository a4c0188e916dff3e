"""Task feature registry: normalized per-waypoint features and trajectory counts.

Every feature maps into [0,1] so all weights act on the same scale. Proximity
features (table, laptop, human) report 1 at zero distance and fall linearly to
0 at their length scale, so a positive weight attracts and a negative weight
repels. The velocity feature is the squared per-segment displacement.

The closed forms here are reconstructions: only the feature *names* and the
shared [0,1] normalization are fixed by the task domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .world import Environment


class FeatureError(KeyError):
    """Unknown feature name or missing geometry for a registered feature."""


# A feature evaluates on waypoint arrays: values(Q, Qprev, env) -> (M,) floats,
# where Q is (M, 2) and Qprev is the preceding waypoint for motion features
# (ignored by state features). grad returns d(value)/dQ as (M, 2).


def _velocity_values(Q, Qprev, env):
    d2 = np.sum((Q - Qprev) ** 2, axis=1) / env.d_max**2
    return np.minimum(d2, 1.0)


def _velocity_grad(Q, Qprev, env):
    d2 = np.sum((Q - Qprev) ** 2, axis=1) / env.d_max**2
    g = 2.0 * (Q - Qprev) / env.d_max**2
    g[d2 >= 1.0] = 0.0
    return g


def _table_values(Q, Qprev, env):
    return 1.0 - np.clip(np.abs(Q[:, 1] - env.table_y) / env.h_max, 0.0, 1.0)


def _table_grad(Q, Qprev, env):
    dy = Q[:, 1] - env.table_y
    g = np.zeros_like(Q)
    active = (np.abs(dy) > 0.0) & (np.abs(dy) < env.h_max)
    g[active, 1] = -np.sign(dy[active]) / env.h_max
    return g


def _proximity_values(Q, center, r):
    d = np.linalg.norm(Q - center, axis=1)
    return 1.0 - np.clip(d / r, 0.0, 1.0)


def _proximity_grad(Q, center, r):
    diff = Q - center
    d = np.linalg.norm(diff, axis=1)
    g = np.zeros_like(Q)
    active = (d > 0.0) & (d < r)
    g[active] = -diff[active] / (r * d[active, None])
    return g


def _laptop_values(Q, Qprev, env):
    return _proximity_values(Q, env.laptop[0], env.r_influence)


def _laptop_grad(Q, Qprev, env):
    return _proximity_grad(Q, env.laptop[0], env.r_influence)


def _human_values(Q, Qprev, env):
    return _proximity_values(Q, env.human_pos, env.r_influence)


def _human_grad(Q, Qprev, env):
    return _proximity_grad(Q, env.human_pos, env.r_influence)


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str  # "state" (per waypoint) or "motion" (per segment)
    values: Callable
    grad: Callable
    requires: str | None = None  # Environment attribute that must be present


REGISTRY: dict[str, Feature] = {
    "velocity": Feature("velocity", "motion", _velocity_values, _velocity_grad),
    "table": Feature("table", "state", _table_values, _table_grad),
    "laptop": Feature("laptop", "state", _laptop_values, _laptop_grad, requires="laptop"),
    "human": Feature("human", "state", _human_values, _human_grad, requires="human_pos"),
}


def check_geometry(name: str, env: Environment) -> None:
    feat = REGISTRY.get(name)
    if feat is None:
        raise FeatureError(f"unknown feature {name!r}")
    if feat.requires is not None and getattr(env, feat.requires) is None:
        raise FeatureError(f"feature {name!r} needs env.{feat.requires}")


def eval_feature(name: str, q: np.ndarray, q_prev: np.ndarray, env: Environment) -> float:
    """Evaluate one feature at a waypoint; motion features use (q, q_prev)."""
    check_geometry(name, env)
    feat = REGISTRY[name]
    Q = np.asarray(q, float).reshape(1, 2)
    Qp = np.asarray(q_prev, float).reshape(1, 2)
    return float(feat.values(Q, Qp, env)[0])


def feature_count(traj: np.ndarray, env: Environment, names) -> np.ndarray:
    """Per-feature mean along the trajectory (the normalized feature count).

    State features average over all T+1 waypoints; motion features average
    over the T segments. Every component therefore stays in [0,1].
    """
    traj = np.asarray(traj, float)
    if traj.ndim != 2 or traj.shape[0] < 2:
        raise ValueError("trajectory needs at least 2 waypoints")
    out = np.empty(len(names))
    for k, name in enumerate(names):
        check_geometry(name, env)
        feat = REGISTRY[name]
        if feat.kind == "motion":
            out[k] = float(np.mean(feat.values(traj[1:], traj[:-1], env)))
        else:
            out[k] = float(np.mean(feat.values(traj, traj, env)))
    return out


def feature_count_grad(traj: np.ndarray, env: Environment, names) -> np.ndarray:
    """d(feature_count)/d(interior waypoints), shape (N, T-1, 2)."""
    traj = np.asarray(traj, float)
    n_pts = traj.shape[0]
    T = n_pts - 1
    out = np.zeros((len(names), T - 1, 2))
    for k, name in enumerate(names):
        check_geometry(name, env)
        feat = REGISTRY[name]
        if feat.kind == "motion":
            # segment i uses (w_i, w_{i-1}); interior waypoint j appears as the
            # endpoint of segment j and the start of segment j+1
            g = feat.grad(traj[1:], traj[:-1], env)  # (T, 2) wrt segment end
            out[k] = (g[:-1] - g[1:]) / T
        else:
            g = feat.grad(traj, traj, env)
            out[k] = g[1:-1] / n_pts
    return out
