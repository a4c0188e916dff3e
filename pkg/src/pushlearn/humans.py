"""Simulated humans that push the robot: threshold-triggered, noisy, Boltzmann."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .world import RobotState, waypoint_index

DEFAULT_F_MAX = 10.0  # N


@dataclass(frozen=True)
class HumanSpec:
    """Parameters of a simulated corrector.

    desired_traj and steps_total are bound at episode start (the desired
    trajectory is the plan under the true weights).
    """

    kind: str  # optimal | noisy | boltzmann | none
    err_threshold: float = 0.1
    gain: float = 5.0
    noise_sigma: float = 0.0
    bias: np.ndarray = None  # constant force offset toward the human, N
    beta: float = 1.0
    f_max: float = DEFAULT_F_MAX
    desired_traj: np.ndarray | None = None
    steps_total: int | None = None

    def __post_init__(self):
        if self.bias is None:
            object.__setattr__(self, "bias", np.zeros(2))

    def bound(self, desired_traj: np.ndarray, steps_total: int) -> "HumanSpec":
        return replace(self, desired_traj=desired_traj, steps_total=steps_total)


def cap_force(u: np.ndarray, f_max: float) -> np.ndarray:
    norm = float(np.linalg.norm(u))
    if norm > f_max:
        return u * (f_max / norm)
    return u


def desired_waypoint(spec: HumanSpec, t: int) -> np.ndarray:
    T = spec.desired_traj.shape[0] - 1
    return spec.desired_traj[waypoint_index(t, T, spec.steps_total)]


def optimal_human(x: RobotState, t: int, spec: HumanSpec) -> np.ndarray:
    """Pull proportionally toward the desired waypoint once the error exceeds the threshold."""
    e = desired_waypoint(spec, t) - x.q
    if float(np.linalg.norm(e)) <= spec.err_threshold:
        return np.zeros(2)
    return cap_force(spec.gain * e, spec.f_max)


def noisy_human(x: RobotState, t: int, spec: HumanSpec, rng: np.random.Generator) -> np.ndarray:
    """Optimal pull plus a constant bias and per-axis Gaussian noise.

    Noise and bias apply only when the optimal human would act, so silence
    inside the deadband stays exact.
    """
    u = optimal_human(x, t, spec)
    if not np.any(u):
        return u
    u = u + spec.bias + rng.normal(0.0, spec.noise_sigma, size=2)
    return cap_force(u, spec.f_max)


def boltzmann_human(
    x: RobotState,
    u_r: np.ndarray,
    q_table,
    beta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample a push from the softmax over the discrete action set.

    Logits are beta * Q(x, u_r + u_h) under the true-objective table; states
    off the grid clamp to the nearest cell (the table handles the clamping).
    """
    logits = beta * q_table.combined_action_values(x.q, u_r)
    logits = logits - logits.max()
    p = np.exp(logits)
    p /= p.sum()
    idx = int(rng.choice(p.shape[0], p=p))
    return q_table.grid.actions[idx].copy()


def sample_force(
    spec: HumanSpec,
    x: RobotState,
    t: int,
    u_r: np.ndarray,
    rng: np.random.Generator,
    q_table=None,
) -> np.ndarray:
    """Dispatch on the spec kind; the episode loop calls this every step."""
    if spec.kind == "none":
        return np.zeros(2)
    if spec.kind == "optimal":
        return optimal_human(x, t, spec)
    if spec.kind == "noisy":
        return noisy_human(x, t, spec, rng)
    if spec.kind == "boltzmann":
        if q_table is None:
            raise ValueError("boltzmann human needs the true-objective Q-table")
        return boltzmann_human(x, u_r, q_table, spec.beta, rng)
    raise ValueError(f"unknown human kind {spec.kind!r}")
