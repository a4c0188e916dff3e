"""Trajectory optimization: maximize theta . Phi over fixed-endpoint paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import features
from .world import Environment, Scenario


@dataclass(frozen=True)
class PlannerConfig:
    step_size: float = 0.2
    max_iters: int = 300
    tol: float = 1e-8
    warm_start: bool = True  # replans start from the incumbent plan

    def __post_init__(self):
        if self.step_size <= 0 or self.max_iters < 0 or self.tol < 0:
            raise ValueError("need step_size > 0, max_iters >= 0, tol >= 0")


def reward(traj: np.ndarray, theta: np.ndarray, env: Environment, names) -> float:
    """Trajectory reward theta . Phi(traj)."""
    theta = np.asarray(theta, float)
    if theta.shape != (len(names),):
        raise ValueError(f"theta length {theta.shape} != feature count {len(names)}")
    return float(theta @ features.feature_count(traj, env, names))


def reward_gradient(traj: np.ndarray, theta: np.ndarray, env: Environment, names) -> np.ndarray:
    """Analytic d(reward)/d(interior waypoints), shape (T-1, 2)."""
    theta = np.asarray(theta, float)
    if theta.shape != (len(names),):
        raise ValueError(f"theta length {theta.shape} != feature count {len(names)}")
    grads = features.feature_count_grad(traj, env, names)
    return np.tensordot(theta, grads, axes=1)


def plan(
    theta: np.ndarray,
    scenario: Scenario,
    init: np.ndarray,
    config: PlannerConfig | None = None,
) -> np.ndarray:
    """Projected gradient ascent on the interior waypoints.

    Endpoints stay exactly at the init endpoints; waypoints are projected into
    the environment bounds after every step. Each iteration backtracks the
    step until the reward strictly improves, so the reward is monotone
    non-decreasing and ties keep the incumbent. Deterministic for fixed
    inputs; returns init unchanged when no ascent step improves.
    """
    cfg = config if config is not None else scenario.planner
    env = scenario.env
    names = scenario.feature_names
    traj = np.asarray(init, float).copy()
    if traj.ndim != 2 or traj.shape[0] != scenario.T + 1:
        raise ValueError(f"init must have {scenario.T + 1} waypoints")
    if not (np.array_equal(traj[0], scenario.q_start) and np.array_equal(traj[-1], scenario.q_goal)):
        raise ValueError("init endpoints must match the scenario start/goal")
    lo, hi = env.bounds[:, 0], env.bounds[:, 1]
    traj[1:-1] = np.clip(traj[1:-1], lo, hi)

    r = reward(traj, theta, env, names)
    for _ in range(cfg.max_iters):
        g = reward_gradient(traj, theta, env, names)
        gnorm = float(np.max(np.abs(g)))
        if gnorm == 0.0:
            break
        step = cfg.step_size / gnorm  # scale-free first trial step
        improved = False
        for _ in range(40):
            cand = traj.copy()
            cand[1:-1] = np.clip(cand[1:-1] + step * g, lo, hi)
            rc = reward(cand, theta, env, names)
            if rc > r:
                improved = rc - r >= cfg.tol
                traj, r = cand, rc
                break
            step *= 0.5
        else:
            break
        if not improved:
            break
    return traj
