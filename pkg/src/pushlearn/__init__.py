"""Workbench for robots that learn their objective online from physical corrections."""

from .controller import MODES, EpisodeLog, EpisodeRunner, Gains, impedance_force, run_episode
from .deform import DeformConfig, NormMatrix, build_norm_matrix, deform
from .features import eval_feature, feature_count
from .humans import HumanSpec, boltzmann_human, noisy_human, optimal_human
from .learner import (
    ObjectiveEstimate,
    calibrate_alpha,
    infer_intended_feature,
    map_oracle,
    update_all_at_once,
    update_one_at_a_time,
)
from .planner import PlannerConfig, plan, reward, reward_gradient
from .qmdp import BeliefGrid, Grid, QTable, belief_update, qmdp_action, value_iteration
from .world import (
    Environment,
    RobotState,
    Scenario,
    ScenarioError,
    load_scenario,
    step_dynamics,
    straight_line,
)

__version__ = "0.1.0"
