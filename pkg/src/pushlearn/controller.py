"""Impedance tracking and the per-episode loop tying all the pieces together.

Each episode step: compute the robot force for the currently tracked
waypoint, ask the human model for a force (or take one injected by an
interactive session), and on interaction let the mode react -- learning modes
deform the plan into the intended trajectory, update the weight estimate and
replan start-to-goal; deform-only adopts the deformed trajectory without
learning; impedance ignores the push; the QMDP mode picks belief-mixed grid
actions and filters the belief instead of tracking a plan. Finally the force
sum drives the point-robot dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import deform as deform_mod
from . import features as features_mod
from . import humans as humans_mod
from . import learner as learner_mod
from . import planner as planner_mod
from . import qmdp as qmdp_mod
from .world import RobotState, Scenario, step_dynamics, straight_line, waypoint_index

INTERACTION_DEADBAND = 1e-6  # N; separates "no interaction" from numeric noise

MODES = ("impedance", "deform_only", "learn_all", "learn_one", "qmdp")


@dataclass(frozen=True)
class Gains:
    """Diagonal damping/stiffness of the tracking law (isotropic)."""

    b_r: float = 2.0
    k_r: float = 20.0

    def __post_init__(self):
        if self.b_r <= 0 or self.k_r <= 0:
            raise ValueError("gains must be positive")


def impedance_force(x: RobotState, q_r: np.ndarray, qdot_r: np.ndarray, gains: Gains) -> np.ndarray:
    """Spring-damper force toward the desired state."""
    return gains.b_r * (qdot_r - x.qdot) + gains.k_r * (q_r - x.q)


@dataclass(frozen=True)
class StepRecord:
    t: int
    q: np.ndarray
    qdot: np.ndarray
    q_des: np.ndarray
    u_r: np.ndarray
    u_h: np.ndarray
    theta_hat: np.ndarray
    replanned: bool
    interacted: bool


@dataclass
class EpisodeLog:
    scenario_name: str
    mode: str
    seed: int
    feature_names: tuple[str, ...]
    dt: float
    records: list[StepRecord] = field(default_factory=list)
    xi_act: np.ndarray | None = None  # (steps+1, 2) executed positions
    theta_history: np.ndarray | None = None  # (steps+1, N)
    belief_history: np.ndarray | None = None
    final_plan: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.records)

    def forces(self) -> np.ndarray:
        return np.array([r.u_h for r in self.records])


class EpisodeRunner:
    """Step-wise episode execution; run_episode and interactive sessions share it."""

    def __init__(
        self,
        scenario: Scenario,
        mode: str,
        seed: int | None = None,
        human: humans_mod.HumanSpec | None = None,
        cache_dir=None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.scenario = scenario
        self.mode = mode
        self.seed = scenario.seed if seed is None else int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.steps_total = scenario.episode_steps
        self.t = 0

        self.x = RobotState(scenario.q_start.copy(), np.zeros(2))
        init = straight_line(scenario.q_start, scenario.q_goal, scenario.T)
        self.desired = planner_mod.plan(scenario.theta_true, scenario, init)

        spec = human if human is not None else scenario.human
        self.human = spec.bound(self.desired, self.steps_total)

        self.est = learner_mod.ObjectiveEstimate.from_scenario(scenario)
        self.norm = deform_mod.build_norm_matrix(scenario.T, scenario.deform.order)

        self.q_tables = None
        self.belief = None
        if scenario.qmdp is not None:
            self.q_tables = qmdp_mod.q_tables_for(scenario, cache_dir=cache_dir)
            self.belief = qmdp_mod.BeliefGrid(
                scenario.qmdp.candidates, scenario.qmdp.prior.copy()
            )
            self._true_table = self.q_tables[qmdp_mod.true_candidate_index(scenario)]
        elif self.human.kind == "boltzmann" or mode == "qmdp":
            raise ValueError(f"{mode!r}/boltzmann requires a QMDP configuration in the scenario")
        else:
            self._true_table = None

        self.xi_r = None
        if mode != "qmdp":
            self.xi_r = planner_mod.plan(self.est.theta_hat, scenario, init)

        self.log = EpisodeLog(
            scenario_name=scenario.name,
            mode=mode,
            seed=self.seed,
            feature_names=scenario.feature_names,
            dt=scenario.dt,
        )
        self._positions = [self.x.q.copy()]
        self._thetas = [self._theta_snapshot()]
        self._beliefs = [self.belief.probs.copy()] if self.belief is not None else None

    def _theta_snapshot(self) -> np.ndarray:
        if self.mode == "qmdp":
            return self.belief.mean_theta()
        return self.est.theta_hat.copy()

    def _tracked_index(self) -> int:
        return waypoint_index(self.t, self.scenario.T, self.steps_total)

    def _desired_state(self) -> tuple[np.ndarray, np.ndarray]:
        sc = self.scenario
        k = min(self._tracked_index(), sc.T)
        q_r = self.xi_r[k]
        if k == 0:
            qdot_r = np.zeros(2)
        else:
            dt_wp = sc.dt * self.steps_total / sc.T
            qdot_r = (self.xi_r[k] - self.xi_r[k - 1]) / dt_wp
        return q_r, qdot_r

    def step(self, u_h_override: np.ndarray | None = None) -> StepRecord:
        """Advance one timestep; u_h_override replaces the simulated human."""
        sc = self.scenario
        if self.mode == "qmdp":
            # pick the action at the coasted position: position integrates the
            # pre-step velocity, so deciding on the current cell would chase a
            # limit cycle around any hold cell
            x_pred = RobotState(
                sc.env.clamp(self.x.q + self.x.qdot * sc.dt), self.x.qdot
            )
            a_star = qmdp_mod.qmdp_action(x_pred, self.belief, self.q_tables)
            # damping cancels the carried velocity so the executed displacement
            # follows the kinematic model the grid MDP was solved with
            u_r = a_star * (sc.qmdp.move_scale / sc.dt**2) - self.x.qdot / sc.dt
            u_r_obs = a_star
            q_des = sc.env.clamp(self.x.q + sc.qmdp.move_scale * a_star)
        else:
            q_des, qdot_des = self._desired_state()
            u_r = impedance_force(self.x, q_des, qdot_des, sc.gains)
            u_r_obs = u_r
            if self.q_tables is not None:
                # observation model and Boltzmann human reason in grid-action
                # units: present the tracking intent as its equivalent action,
                # not the raw spring force
                intent = (q_des - self.x.q) + qdot_des * sc.dt
                u_r_obs = intent / sc.qmdp.move_scale

        if u_h_override is not None:
            u_h = humans_mod.cap_force(np.asarray(u_h_override, float), self.human.f_max)
        else:
            u_h = humans_mod.sample_force(
                self.human, self.x, self.t, u_r_obs, self.rng, q_table=self._true_table
            )
        interacted = float(np.linalg.norm(u_h)) > INTERACTION_DEADBAND

        replanned = False
        if interacted and self.mode in ("learn_all", "learn_one", "deform_only"):
            t_idx = int(np.clip(self._tracked_index(), 1, sc.T - 1))
            xi_h = deform_mod.deform(self.xi_r, u_h, t_idx, sc.deform, self.norm)
            if self.mode == "deform_only":
                self.xi_r = xi_h
            else:
                phi_r = features_mod.feature_count(self.xi_r, sc.env, sc.feature_names)
                phi_h = features_mod.feature_count(xi_h, sc.env, sc.feature_names)
                update = (
                    learner_mod.update_all_at_once
                    if self.mode == "learn_all"
                    else learner_mod.update_one_at_a_time
                )
                self.est = update(self.est, phi_h, phi_r, t=self.t)
                init = (
                    self.xi_r
                    if sc.planner.warm_start
                    else straight_line(sc.q_start, sc.q_goal, sc.T)
                )
                self.xi_r = planner_mod.plan(self.est.theta_hat, sc, init)
                replanned = True

        if self.belief is not None and interacted:
            obs_beta = sc.qmdp.obs_beta if sc.qmdp.obs_beta is not None else self.human.beta
            self.belief = qmdp_mod.belief_update(
                self.belief, self.x, u_r_obs, u_h, self.q_tables, obs_beta
            )

        record = StepRecord(
            t=self.t,
            q=self.x.q.copy(),
            qdot=self.x.qdot.copy(),
            q_des=q_des.copy(),
            u_r=np.asarray(u_r, float).copy(),
            u_h=np.asarray(u_h, float).copy(),
            theta_hat=self._theta_snapshot(),
            replanned=replanned,
            interacted=interacted,
        )
        self.x = step_dynamics(
            self.x, u_r + u_h, sc.dt, bounds=sc.env.bounds, speed_cap=sc.speed_cap
        )
        self.t += 1
        self.log.records.append(record)
        self._positions.append(self.x.q.copy())
        self._thetas.append(self._theta_snapshot())
        if self._beliefs is not None:
            self._beliefs.append(self.belief.probs.copy())
        return record

    def finish(self) -> EpisodeLog:
        log = self.log
        log.xi_act = np.array(self._positions)
        log.theta_history = np.array(self._thetas)
        if self._beliefs is not None:
            log.belief_history = np.array(self._beliefs)
        log.final_plan = None if self.xi_r is None else self.xi_r.copy()
        return log


def run_episode(
    scenario: Scenario,
    mode: str,
    human: humans_mod.HumanSpec | None = None,
    seed: int | None = None,
    cache_dir=None,
) -> EpisodeLog:
    """Run the full episode loop for exactly the scenario's step count."""
    runner = EpisodeRunner(scenario, mode, seed=seed, human=human, cache_dir=cache_dir)
    for _ in range(runner.steps_total):
        runner.step()
    return runner.finish()
