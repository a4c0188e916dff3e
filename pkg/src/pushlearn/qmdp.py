"""QMDP baseline: per-candidate value iteration, Bayesian belief, mixed argmax.

The robot keeps a discrete belief over candidate weight vectors. For each
candidate it solves a small grid MDP once (value iteration over position
cells with a discrete force action set), then at runtime it picks the action
maximizing the belief-weighted Q-values and updates the belief from the
human's force through the softmax observation model.

Grid MDP reconstruction notes:
- transitions are kinematic: a force action displaces the cell center by
  move_scale meters per newton, clamped to the workspace;
- per-step reward is theta . phi at the landing point minus a constant step
  cost, and the goal cell is absorbing, which makes reaching the goal optimal
  while the features shape the path taken;
- executed on the true dynamics, the discrete action is applied together with
  a velocity-cancelling damping force so the realized displacement matches
  the kinematic model.

Q-tables are cached on disk as .npz archives keyed by a hash of the scenario
and solver constants (see table_cache_key).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features
from .world import Scenario

log = logging.getLogger(__name__)

BELIEF_FLOOR = 1e-12


class QMDPError(RuntimeError):
    pass


@dataclass(frozen=True)
class QMDPConfig:
    pos_bins: int = 21
    f_scale: float = 10.0  # action set is {-F, -F/2, 0, F/2, F} per axis
    gamma: float = 0.95
    vi_tol: float = 1e-6
    step_cost: float = 2.0
    move_scale: float = 0.01  # meters of displacement per newton of action
    obs_beta: float | None = None  # filter sharpness; None reuses the human's beta
    candidates: tuple = ()
    prior: np.ndarray = None


@dataclass(frozen=True)
class Grid:
    """Position discretization plus the shared discrete force action set."""

    bounds: np.ndarray  # (2, 2)
    pos_bins: tuple[int, int]
    actions: np.ndarray  # (A, 2) forces, contains the zero action

    def __post_init__(self):
        if min(self.pos_bins) < 2:
            raise ValueError("need at least 2 position bins per axis")
        if not np.any(np.all(self.actions == 0.0, axis=1)):
            raise ValueError("action set must contain the zero action")

    @property
    def n_cells(self) -> int:
        return self.pos_bins[0] * self.pos_bins[1]

    def centers(self) -> np.ndarray:
        xs = np.linspace(self.bounds[0, 0], self.bounds[0, 1], self.pos_bins[0])
        ys = np.linspace(self.bounds[1, 0], self.bounds[1, 1], self.pos_bins[1])
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def cell_index(self, q: np.ndarray) -> int:
        """Nearest cell, clamping positions outside the workspace."""
        spans = self.bounds[:, 1] - self.bounds[:, 0]
        rel = (np.asarray(q, float) - self.bounds[:, 0]) / spans
        ij = np.rint(rel * (np.array(self.pos_bins) - 1)).astype(int)
        ij = np.clip(ij, 0, np.array(self.pos_bins) - 1)
        return int(ij[0] * self.pos_bins[1] + ij[1])

    def nearest_action(self, u: np.ndarray) -> int:
        d = np.sum((self.actions - np.asarray(u, float)) ** 2, axis=1)
        return int(np.argmin(d))


@dataclass(frozen=True)
class QTable:
    q: np.ndarray  # (n_cells, n_actions)
    theta: np.ndarray
    grid: Grid
    residual: float

    def combined_action_values(self, q_pos: np.ndarray, u_r: np.ndarray) -> np.ndarray:
        """Q(x, u_r + u_h) for every candidate u_h in the action set.

        The robot force is clipped into the action box first: a saturating
        impedance force would otherwise push every combined action onto the
        same corner of the set and erase the likelihood signal.
        """
        s = self.grid.cell_index(q_pos)
        lo = self.grid.actions.min(axis=0)
        hi = self.grid.actions.max(axis=0)
        u_r = np.clip(np.asarray(u_r, float), lo, hi)
        vals = np.empty(self.grid.actions.shape[0])
        for k, u_h in enumerate(self.grid.actions):
            vals[k] = self.q[s, self.grid.nearest_action(u_r + u_h)]
        return vals


@dataclass(frozen=True)
class BeliefGrid:
    candidates: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("belief must be a normalized probability vector")

    def mean_theta(self) -> np.ndarray:
        return np.sum([p * c for p, c in zip(self.probs, self.candidates)], axis=0)


def default_action_set(f_scale: float) -> np.ndarray:
    """5x5 force grid {-F, -F/2, 0, F/2, F}^2 with the zero action first.

    Zero-first ordering makes the lowest-index tie-break resolve to "hold
    still", which is what absorption at the goal cell should look like.
    """
    levels = np.array([0.0, -f_scale, -f_scale / 2, f_scale / 2, f_scale])
    ax, ay = np.meshgrid(levels, levels, indexing="ij")
    return np.stack([ax.ravel(), ay.ravel()], axis=-1)


def build_grid(scenario: Scenario) -> Grid:
    cfg = scenario.qmdp
    if cfg is None:
        raise QMDPError(f"scenario {scenario.name!r} has no QMDP configuration")
    return Grid(
        bounds=scenario.env.bounds,
        pos_bins=(cfg.pos_bins, cfg.pos_bins),
        actions=default_action_set(cfg.f_scale),
    )


def value_iteration(
    grid: Grid,
    scenario: Scenario,
    theta: np.ndarray,
    gamma: float = 0.95,
    vi_tol: float = 1e-6,
    step_cost: float | None = None,
    goal_absorbing: bool = True,
    move_scale: float | None = None,
    max_iters: int = 200_000,
) -> QTable:
    """Solve the grid MDP for one candidate weight vector.

    Reward of (cell, action) is theta . phi evaluated at the landing point
    (motion features see the actual cell-to-cell displacement) minus
    step_cost; the scenario goal cell is absorbing when goal_absorbing is
    set. Iterates until the Bellman residual drops below vi_tol.
    """
    theta = np.asarray(theta, float)
    cfg = scenario.qmdp
    if step_cost is None:
        step_cost = cfg.step_cost if cfg is not None else 0.0
    if move_scale is None:
        move_scale = cfg.move_scale if cfg is not None else scenario.dt**2

    centers = grid.centers()  # (S, 2)
    S, A = centers.shape[0], grid.actions.shape[0]
    lo, hi = scenario.env.bounds[:, 0], scenario.env.bounds[:, 1]

    next_idx = np.empty((S, A), dtype=int)
    reward = np.empty((S, A))
    goal_cell = grid.cell_index(scenario.q_goal) if goal_absorbing else -1
    for a, act in enumerate(grid.actions):
        landing = np.clip(centers + move_scale * act, lo, hi)
        snapped = np.array([grid.cell_index(p) for p in landing])
        next_idx[:, a] = snapped
        land_centers = centers[snapped]
        phi = np.zeros((S, len(scenario.feature_names)))
        for k, name in enumerate(scenario.feature_names):
            feat = features.REGISTRY[name]
            if feat.kind == "motion":
                phi[:, k] = feat.values(land_centers, centers, scenario.env)
            else:
                phi[:, k] = feat.values(land_centers, land_centers, scenario.env)
        reward[:, a] = phi @ theta - step_cost

    v = np.zeros(S)
    for _ in range(max_iters):
        q = reward + gamma * v[next_idx]
        if goal_absorbing:
            q[goal_cell, :] = 0.0
        v_new = q.max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual < vi_tol:
            return QTable(q=q, theta=theta, grid=grid, residual=residual)
    raise QMDPError(f"value iteration did not converge within {max_iters} sweeps")


def action_log_likelihoods(q_table: QTable, q_pos: np.ndarray, u_r: np.ndarray, beta: float) -> np.ndarray:
    """Log softmax over the candidate pushes; shared by the sampler and the filter."""
    logits = beta * q_table.combined_action_values(q_pos, u_r)
    m = logits.max()
    return logits - (m + np.log(np.sum(np.exp(logits - m))))


def belief_update(
    b: BeliefGrid,
    x,
    u_r: np.ndarray,
    u_h: np.ndarray,
    q_tables: tuple[QTable, ...],
    beta: float,
) -> BeliefGrid:
    """Bayes step: b'(theta) proportional to P(u_h | x, u_r; theta) b(theta).

    The likelihood is the softmax over the discrete action set; the observed
    force maps to its nearest discrete action. An all-zero posterior gets
    floored and renormalized with a warning.
    """
    q_pos = x.q if hasattr(x, "q") else np.asarray(x, float)
    obs_idx = q_tables[0].grid.nearest_action(u_h)
    log_post = np.empty(len(q_tables))
    for i, qt in enumerate(q_tables):
        loglik = action_log_likelihoods(qt, q_pos, u_r, beta)[obs_idx]
        prior = b.probs[i]
        log_post[i] = (np.log(prior) if prior > 0 else -np.inf) + loglik
    if not np.any(np.isfinite(log_post)):
        log.warning("all observation likelihoods vanished; flooring belief")
        probs = np.full(len(q_tables), 1.0 / len(q_tables))
        return BeliefGrid(b.candidates, probs)
    log_post -= log_post[np.isfinite(log_post)].max()
    post = np.exp(log_post)
    post = np.maximum(post, 0.0)
    total = post.sum()
    if total <= 0:
        log.warning("degenerate belief posterior; flooring")
        post = np.full(len(q_tables), BELIEF_FLOOR)
        total = post.sum()
    return BeliefGrid(b.candidates, post / total)


def qmdp_action(x, b: BeliefGrid, q_tables: tuple[QTable, ...]) -> np.ndarray:
    """Argmax of the belief-mixed Q-values; ties resolve to the lowest action index."""
    q_pos = x.q if hasattr(x, "q") else np.asarray(x, float)
    s = q_tables[0].grid.cell_index(q_pos)
    mixed = np.zeros(q_tables[0].grid.actions.shape[0])
    for p, qt in zip(b.probs, q_tables):
        mixed += p * qt.q[s]
    return q_tables[0].grid.actions[int(np.argmax(mixed))].copy()


def true_candidate_index(scenario: Scenario) -> int:
    cfg = scenario.qmdp
    for i, c in enumerate(cfg.candidates):
        if np.allclose(c, scenario.theta_true):
            return i
    raise QMDPError("theta_true is not among the belief candidates")


def table_cache_key(scenario: Scenario, theta: np.ndarray) -> str:
    cfg = scenario.qmdp
    payload = json.dumps(
        {
            "bounds": scenario.env.bounds.tolist(),
            "table_y": scenario.env.table_y,
            "laptop": None if scenario.env.laptop is None
            else [scenario.env.laptop[0].tolist(), scenario.env.laptop[1]],
            "human_pos": None if scenario.env.human_pos is None
            else scenario.env.human_pos.tolist(),
            "scales": [scenario.env.d_max, scenario.env.h_max, scenario.env.r_influence],
            "goal": scenario.q_goal.tolist(),
            "features": list(scenario.feature_names),
            "theta": np.asarray(theta, float).tolist(),
            "pos_bins": cfg.pos_bins,
            "f_scale": cfg.f_scale,
            "gamma": cfg.gamma,
            "vi_tol": cfg.vi_tol,
            "step_cost": cfg.step_cost,
            "move_scale": cfg.move_scale,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


_MEMORY_CACHE: dict[str, tuple] = {}


def q_tables_for(scenario: Scenario, cache_dir: str | Path | None = None) -> tuple[QTable, ...]:
    """Q-tables for every belief candidate, memoized in memory and optionally on disk."""
    cfg = scenario.qmdp
    if cfg is None:
        raise QMDPError(f"scenario {scenario.name!r} has no QMDP configuration")
    grid = build_grid(scenario)
    tables = []
    mem_key = "|".join(table_cache_key(scenario, c) for c in cfg.candidates)
    if mem_key in _MEMORY_CACHE:
        return _MEMORY_CACHE[mem_key]
    for cand in cfg.candidates:
        key = table_cache_key(scenario, cand)
        path = Path(cache_dir) / f"qtable_{key}.npz" if cache_dir is not None else None
        if path is not None and path.exists():
            data = np.load(path)
            tables.append(
                QTable(q=data["q"], theta=data["theta"], grid=grid, residual=float(data["residual"]))
            )
            continue
        qt = value_iteration(grid, scenario, cand, gamma=cfg.gamma, vi_tol=cfg.vi_tol)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            np.savez(path, q=qt.q, theta=qt.theta, residual=qt.residual)
        tables.append(qt)
    result = tuple(tables)
    _MEMORY_CACHE[mem_key] = result
    return result
