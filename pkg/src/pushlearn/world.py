"""Planar world: environment geometry, point-robot dynamics, scenario loading."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

DEFAULT_SPEED_CAP = 2.0  # m/s


class ScenarioError(ValueError):
    """Raised when a scenario file is malformed or violates an invariant."""


def _vec2(value, name: str) -> np.ndarray:
    v = np.asarray(value, dtype=float)
    if v.shape != (2,):
        raise ScenarioError(f"{name} must be a 2-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ScenarioError(f"{name} must be finite")
    return v


@dataclass(frozen=True)
class Environment:
    """Static task geometry plus the feature length scales declared with it.

    bounds is [[xmin, xmax], [ymin, ymax]]. Obstacles, the laptop and the
    human marker are (center, radius) discs / points; they shape reward
    features, they are never hard constraints.
    """

    bounds: np.ndarray
    table_y: float
    obstacles: tuple[tuple[np.ndarray, float], ...] = ()
    laptop: tuple[np.ndarray, float] | None = None
    human_pos: np.ndarray | None = None
    d_max: float = 1.0
    h_max: float = 0.8
    r_influence: float = 0.4

    def contains(self, q: np.ndarray) -> bool:
        return bool(
            np.all(q >= self.bounds[:, 0] - 1e-12)
            and np.all(q <= self.bounds[:, 1] + 1e-12)
        )

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.bounds[:, 0], self.bounds[:, 1])


@dataclass
class RobotState:
    """Point-robot state: position q (m) and velocity qdot (m/s)."""

    q: np.ndarray
    qdot: np.ndarray

    def copy(self) -> "RobotState":
        return RobotState(self.q.copy(), self.qdot.copy())


@dataclass(frozen=True)
class Scenario:
    """Everything one episode needs, loaded from a single JSON document."""

    name: str
    env: Environment
    q_start: np.ndarray
    q_goal: np.ndarray
    T: int
    dt: float
    theta_true: np.ndarray
    theta_init: np.ndarray
    feature_names: tuple[str, ...]
    learnable_mask: np.ndarray
    gains: Any  # controller.Gains
    deform: Any  # deform.DeformConfig parameters (mu, order)
    planner: Any  # planner.PlannerConfig
    human: Any  # humans.HumanSpec
    qmdp: Any  # qmdp.QMDPConfig or None
    alpha: float
    seed: int
    speed_cap: float = DEFAULT_SPEED_CAP
    t_episode: int | None = None

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def episode_steps(self) -> int:
        return self.T if self.t_episode is None else self.t_episode


def step_dynamics(
    state: RobotState,
    u_total: np.ndarray,
    dt: float,
    bounds: np.ndarray | None = None,
    speed_cap: float = DEFAULT_SPEED_CAP,
) -> RobotState:
    """Advance the unit-mass double integrator one explicit-Euler step.

    Position updates with the pre-step velocity, then velocity integrates the
    force, so position lags the force by one step. Velocity is clamped to
    speed_cap; position is clamped into bounds when given.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    u = np.asarray(u_total, dtype=float)
    if u.shape != (2,) or not np.all(np.isfinite(u)):
        raise ValueError(f"invalid force {u_total!r}")
    q = state.q + state.qdot * dt
    qdot = state.qdot + u * dt
    speed = float(np.linalg.norm(qdot))
    if speed > speed_cap:
        qdot = qdot * (speed_cap / speed)
    if bounds is not None:
        q = np.clip(q, bounds[:, 0], bounds[:, 1])
    return RobotState(q, qdot)


def straight_line(q_start: np.ndarray, q_goal: np.ndarray, T: int) -> np.ndarray:
    """Uniform linear interpolation with T+1 waypoints, endpoints exact."""
    if T < 2:
        raise ValueError(f"need T >= 2 waypoint segments, got {T}")
    return np.linspace(np.asarray(q_start, float), np.asarray(q_goal, float), T + 1)


def waypoint_index(t: int, T: int, steps: int) -> int:
    """Waypoint the controller tracks at step t under the nominal timing."""
    return min(math.ceil(t * T / steps), T)


def _load_environment(raw: dict) -> Environment:
    bounds = np.asarray(raw["bounds"], dtype=float)
    if bounds.shape != (2, 2) or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ScenarioError("env.bounds must be [[xmin,xmax],[ymin,ymax]] with max > min")
    table_y = float(raw["table_y"])
    if not (bounds[1, 0] <= table_y <= bounds[1, 1]):
        raise ScenarioError("env.table_y must lie inside bounds")

    def disc(entry, name):
        center = _vec2(entry[0], f"{name} center")
        radius = float(entry[1])
        if radius <= 0:
            raise ScenarioError(f"{name} radius must be > 0")
        if not (np.all(center >= bounds[:, 0]) and np.all(center <= bounds[:, 1])):
            raise ScenarioError(f"{name} center must lie inside bounds")
        return center, radius

    obstacles = tuple(disc(o, "obstacle") for o in raw.get("obstacles", []))
    laptop = disc(raw["laptop"], "laptop") if raw.get("laptop") else None
    human_pos = None
    if raw.get("human_pos") is not None:
        human_pos = _vec2(raw["human_pos"], "human_pos")
        if not (np.all(human_pos >= bounds[:, 0]) and np.all(human_pos <= bounds[:, 1])):
            raise ScenarioError("human_pos must lie inside bounds")
    return Environment(
        bounds=bounds,
        table_y=table_y,
        obstacles=obstacles,
        laptop=laptop,
        human_pos=human_pos,
        d_max=float(raw.get("d_max", 1.0)),
        h_max=float(raw.get("h_max", 0.8)),
        r_influence=float(raw.get("r_influence", 0.4)),
    )


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario JSON file.

    Raises ScenarioError naming the violated invariant, or on parse failure.
    """
    # Local imports keep the base module free of cycles; each config type
    # lives next to the code that consumes it.
    from . import features as _features
    from .controller import Gains
    from .deform import DeformConfig
    from .humans import HumanSpec
    from .planner import PlannerConfig
    from .qmdp import QMDPConfig

    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from exc

    env = _load_environment(raw["env"])
    q_start = _vec2(raw["q_start"], "q_start")
    q_goal = _vec2(raw["q_goal"], "q_goal")
    if np.array_equal(q_start, q_goal):
        raise ScenarioError("q_start must differ from q_goal")
    for name, q in (("q_start", q_start), ("q_goal", q_goal)):
        if not env.contains(q):
            raise ScenarioError(f"{name} must lie inside bounds")

    T = int(raw["T"])
    if T < 3:
        raise ScenarioError(f"T must be >= 3, got {T}")
    dt = float(raw["dt"])
    if dt <= 0:
        raise ScenarioError("dt must be > 0")

    feature_names = tuple(raw["feature_names"])
    for name in feature_names:
        if name not in _features.REGISTRY:
            raise ScenarioError(f"unknown feature {name!r}")
        _features.check_geometry(name, env)
    n = len(feature_names)

    theta_true = np.asarray(raw["theta_true"], dtype=float)
    theta_init = np.asarray(raw["theta_init"], dtype=float)
    if theta_true.shape != (n,) or theta_init.shape != (n,):
        raise ScenarioError("theta_true/theta_init length must equal feature count")
    learnable = np.asarray(raw["learnable_mask"], dtype=bool)
    if learnable.shape != (n,):
        raise ScenarioError("learnable_mask length must equal feature count")

    gains_raw = raw.get("gains", {})
    gains = Gains(b_r=float(gains_raw.get("b_r", 2.0)), k_r=float(gains_raw.get("k_r", 20.0)))

    deform_raw = raw.get("deform", {})
    deform_cfg = DeformConfig(
        mu=float(deform_raw.get("mu", 8.0)), order=int(deform_raw.get("order", 1))
    )

    planner_raw = raw.get("planner", {})
    planner_cfg = PlannerConfig(
        step_size=float(planner_raw.get("step_size", 0.2)),
        max_iters=int(planner_raw.get("max_iters", 300)),
        tol=float(planner_raw.get("tol", 1e-8)),
        warm_start=bool(planner_raw.get("warm_start", True)),
    )

    human_raw = raw.get("human", {"kind": "none"})
    human = HumanSpec(
        kind=human_raw.get("kind", "none"),
        err_threshold=float(human_raw.get("err_threshold", 0.1)),
        gain=float(human_raw.get("gain", 5.0)),
        noise_sigma=float(human_raw.get("noise_sigma", 0.0)),
        bias=np.asarray(human_raw.get("bias", [0.0, 0.0]), dtype=float),
        beta=float(human_raw.get("beta", 1.0)),
        f_max=float(human_raw.get("f_max", 10.0)),
    )
    if human.kind not in ("optimal", "noisy", "boltzmann", "none"):
        raise ScenarioError(f"unknown human kind {human.kind!r}")
    if human.err_threshold <= 0 or human.gain <= 0 or human.noise_sigma < 0:
        raise ScenarioError("human spec needs err_threshold > 0, gain > 0, noise_sigma >= 0")

    qmdp_cfg = None
    if raw.get("qmdp") is not None:
        q_raw = raw["qmdp"]
        cands = tuple(np.asarray(c, dtype=float) for c in q_raw["candidates"])
        prior = np.asarray(q_raw["prior"], dtype=float)
        if len(cands) != prior.shape[0]:
            raise ScenarioError("qmdp prior length must match candidate count")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
            raise ScenarioError("qmdp prior must be a probability vector")
        for c in cands:
            if c.shape != (n,):
                raise ScenarioError("qmdp candidates must be full-length weight vectors")
        qmdp_cfg = QMDPConfig(
            pos_bins=int(q_raw.get("pos_bins", 21)),
            f_scale=float(q_raw.get("f_scale", 10.0)),
            gamma=float(q_raw.get("gamma", 0.95)),
            vi_tol=float(q_raw.get("vi_tol", 1e-6)),
            step_cost=float(q_raw.get("step_cost", 2.0)),
            move_scale=float(q_raw.get("move_scale", dt * dt)),
            obs_beta=float(q_raw["obs_beta"]) if q_raw.get("obs_beta") is not None else None,
            candidates=cands,
            prior=prior,
        )
        if not (0 < qmdp_cfg.gamma < 1):
            raise ScenarioError("qmdp gamma must be in (0, 1)")

    scenario = Scenario(
        name=raw.get("name", path.stem),
        env=env,
        q_start=q_start,
        q_goal=q_goal,
        T=T,
        dt=dt,
        theta_true=theta_true,
        theta_init=theta_init,
        feature_names=feature_names,
        learnable_mask=learnable,
        gains=gains,
        deform=deform_cfg,
        planner=planner_cfg,
        human=human,
        qmdp=qmdp_cfg,
        alpha=float(raw.get("alpha", 1.0)),
        seed=int(raw.get("seed", 0)),
        speed_cap=float(raw.get("speed_cap", DEFAULT_SPEED_CAP)),
        t_episode=int(raw["t_episode"]) if raw.get("t_episode") is not None else None,
    )
    if scenario.alpha <= 0:
        raise ScenarioError("alpha must be > 0")
    return scenario


def builtin_scenario_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def resolve_scenario_path(name_or_path: str | Path) -> Path:
    """Accept either a filesystem path or the bare name of a shipped scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    builtin = builtin_scenario_dir() / f"{p.name.removesuffix('.json')}.json"
    if builtin.exists():
        return builtin
    raise FileNotFoundError(f"no scenario file at {name_or_path!r} (and no builtin by that name)")
