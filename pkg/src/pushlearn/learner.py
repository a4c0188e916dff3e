"""Online estimation of the objective weights from observed corrections.

Two rules share one mechanic: the weight estimate moves by alpha times a
feature-count difference between the corrected and the planned trajectory.
The all-at-once rule applies the full difference; the one-at-a-time rule
first projects it onto the single feature that changed the most, which is
the restriction that suppresses unintended learning from sloppy corrections.
Updates depend only on the feature-count difference; no effort-penalty
constant appears anywhere in the rules.

A brute-force grid maximizer over the regularized separation objective is
included as a test oracle, plus the learning-rate calibration that matches
the first estimate step to the first belief step of the QMDP baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .world import Scenario


class CalibrationError(RuntimeError):
    """Raised when the calibration probe produces no usable interaction."""


@dataclass(frozen=True)
class UpdateRecord:
    t: int | None
    delta_phi: np.ndarray
    rule: str  # "all_at_once" | "one_at_a_time"
    chosen_feature: int | None
    theta_before: np.ndarray
    theta_after: np.ndarray


@dataclass(frozen=True)
class ObjectiveEstimate:
    """Current weight estimate, its prior, the learning rate, and the audit trail.

    Components with learnable_mask False never move off the prior. clamp_box,
    when set to (lo, hi), bounds every learnable component after each update;
    it defaults to off and stays off for all study runs.
    """

    theta_hat: np.ndarray
    theta_prior: np.ndarray
    alpha: float
    learnable_mask: np.ndarray
    history: tuple[UpdateRecord, ...] = ()
    clamp_box: tuple[float, float] | None = None

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "ObjectiveEstimate":
        return cls(
            theta_hat=scenario.theta_init.copy(),
            theta_prior=scenario.theta_init.copy(),
            alpha=scenario.alpha,
            learnable_mask=scenario.learnable_mask.copy(),
        )


def _apply(est: ObjectiveEstimate, applied: np.ndarray, rule: str,
           chosen: int | None, t: int | None) -> ObjectiveEstimate:
    before = est.theta_hat
    after = before + est.alpha * applied
    after = np.where(est.learnable_mask, after, est.theta_prior)
    if est.clamp_box is not None:
        lo, hi = est.clamp_box
        after = np.where(est.learnable_mask, np.clip(after, lo, hi), after)
    record = UpdateRecord(
        t=t, delta_phi=applied.copy(), rule=rule, chosen_feature=chosen,
        theta_before=before.copy(), theta_after=after.copy(),
    )
    return replace(est, theta_hat=after, history=est.history + (record,))


def _delta(est: ObjectiveEstimate, phi_h: np.ndarray, phi_r: np.ndarray) -> np.ndarray:
    phi_h = np.asarray(phi_h, float)
    phi_r = np.asarray(phi_r, float)
    if phi_h.shape != est.theta_hat.shape or phi_r.shape != est.theta_hat.shape:
        raise ValueError("feature count dimension mismatch")
    return phi_h - phi_r


def update_all_at_once(
    est: ObjectiveEstimate, phi_h: np.ndarray, phi_r: np.ndarray, t: int | None = None
) -> ObjectiveEstimate:
    """Move every learnable weight by alpha * (Phi_corrected - Phi_planned)."""
    delta = _delta(est, phi_h, phi_r)
    return _apply(est, delta, "all_at_once", None, t)


def infer_intended_feature(delta_phi: np.ndarray, learnable_mask: np.ndarray) -> int:
    """Index of the learnable feature with the largest |delta|; ties pick the lowest index."""
    mask = np.asarray(learnable_mask, bool)
    if not mask.any():
        raise ValueError("no learnable features")
    magnitude = np.where(mask, np.abs(np.asarray(delta_phi, float)), -np.inf)
    return int(np.argmax(magnitude))


def update_one_at_a_time(
    est: ObjectiveEstimate, phi_h: np.ndarray, phi_r: np.ndarray, t: int | None = None
) -> ObjectiveEstimate:
    """Move only the weight of the feature that changed the most."""
    delta = _delta(est, phi_h, phi_r)
    chosen = infer_intended_feature(delta, est.learnable_mask)
    applied = np.zeros_like(delta)
    applied[chosen] = delta[chosen]
    return _apply(est, applied, "one_at_a_time", chosen, t)


@dataclass(frozen=True)
class GridSpec:
    lo: np.ndarray
    hi: np.ndarray
    delta: float

    def axes(self):
        return [np.arange(l, h + self.delta / 2, self.delta) for l, h in zip(self.lo, self.hi)]


def map_oracle(records, theta_prior: np.ndarray, alpha: float, grid_spec: GridSpec) -> np.ndarray:
    """Exhaustive grid argmax of the regularized separation objective.

    Maximizes sum_t theta . (Phi_h^t - Phi_r^t) - ||theta - prior||^2 / (2 alpha)
    over the grid; ties resolve to the lexicographically first grid point.
    Test oracle only -- quadratic cost in grid size.
    """
    theta_prior = np.asarray(theta_prior, float)
    total = np.zeros_like(theta_prior)
    for phi_h, phi_r in records:
        total = total + (np.asarray(phi_h, float) - np.asarray(phi_r, float))
    axes = grid_spec.axes()
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)  # (G, N)
    objective = pts @ total - np.sum((pts - theta_prior) ** 2, axis=1) / (2.0 * alpha)
    return pts[int(np.argmax(objective))].copy()


def first_interaction_probe(scenario: Scenario, seed: int | None = None):
    """Run a learning-mode episode until the first correction and report it.

    Returns (delta_phi, b0_true, b1_true): the feature-count difference at
    the first interaction and the belief on the true weights before and
    after the matching Bayesian update.
    """
    from . import qmdp as _qmdp
    from .controller import EpisodeRunner

    if scenario.qmdp is None:
        raise CalibrationError("scenario has no belief-grid configuration")
    probe_human = replace(scenario.human, kind="boltzmann")
    runner = EpisodeRunner(
        scenario, "learn_all", seed=scenario.seed if seed is None else seed, human=probe_human
    )
    true_idx = _qmdp.true_candidate_index(scenario)
    b0 = float(runner.belief.probs[true_idx])
    for _ in range(scenario.episode_steps):
        record = runner.step()
        if record.interacted:
            b1 = float(runner.belief.probs[true_idx])
            delta_phi = runner.est.history[-1].delta_phi
            return delta_phi, b0, b1
    raise CalibrationError("no interaction occurred in the probe episode")


def calibrate_alpha(
    scenario: Scenario,
    alpha_max: float = 50.0,
    tol: float = 1e-4,
    default_alpha: float | None = None,
) -> float:
    """Learning rate that makes the first estimate step land on the first belief step.

    Runs the coupled probe (one Boltzmann-human first interaction feeding both
    the belief update and the estimate update), then bisects alpha in
    (0, alpha_max] until the updated learnable weight equals the posterior
    belief on the true weights.
    """
    delta_phi, b0, b1 = first_interaction_probe(scenario)
    learnable = np.flatnonzero(scenario.learnable_mask)
    if learnable.shape[0] != 1:
        raise CalibrationError("calibration needs exactly one learnable weight")
    i = int(learnable[0])
    theta0 = float(scenario.theta_init[i])
    return solve_alpha(
        theta0, float(delta_phi[i]), b0, b1,
        alpha_max=alpha_max, tol=tol,
        default_alpha=default_alpha if default_alpha is not None else scenario.alpha,
    )


def solve_alpha(
    theta0: float,
    dphi: float,
    b0: float,
    b1: float,
    alpha_max: float = 50.0,
    tol: float = 1e-4,
    default_alpha: float = 1.0,
) -> float:
    """Bisect f(alpha) = theta0 + alpha * dphi - b1 to zero on (0, alpha_max]."""
    if b1 == b0 and theta0 == b0:
        return default_alpha  # degenerate: any alpha matches
    if dphi == 0.0:
        raise CalibrationError("zero feature change at the first interaction")
    f = lambda a: theta0 + a * dphi - b1
    lo, hi = 0.0, alpha_max
    if f(hi) * f(lo) > 0:
        raise CalibrationError(
            f"no alpha in (0, {alpha_max}] matches the belief step (f(0)={f(lo):.4g}, "
            f"f(max)={f(hi):.4g})"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
