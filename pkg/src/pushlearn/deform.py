"""Propagate a point force along a trajectory, keeping the endpoints fixed.

A push at one waypoint shifts the whole interior by mu * A^-1 * U, where U
carries the force at the pushed waypoint and zeros elsewhere, and A is the
minimum-norm matrix built from a finite-difference operator with clamped
endpoint rows. The result is the smooth, endpoint-preserving bump familiar
from elastic-band trajectory editing: largest at the pushed waypoint and
decaying monotonically away from it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded


@dataclass(frozen=True)
class NormMatrix:
    """SPD quadratic form over interior waypoints plus its cached factorization."""

    a: np.ndarray  # dense (T-1, T-1), band-diagonal
    order: int
    cho: tuple  # (banded cholesky factor, lower) for cho_solve_banded

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded(self.cho, rhs)


@dataclass(frozen=True)
class DeformConfig:
    mu: float = 8.0
    order: int = 1

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")


def _difference_operator(n_points: int, order: int) -> np.ndarray:
    d = np.eye(n_points)
    for _ in range(order):
        d = d[1:] - d[:-1]
    return d


@lru_cache(maxsize=64)
def build_norm_matrix(T: int, order: int = 1) -> NormMatrix:
    """Build A = D^T D over the T-1 interior waypoints of a (T+1)-point path.

    D is the order-th finite-difference operator on the full trajectory with
    the endpoint columns dropped (the endpoints are clamped, so their motion
    never enters the norm). Factorized once per (T, order) and cached.
    """
    if T < 3:
        raise ValueError(f"need T >= 3 for interior waypoints, got {T}")
    if not (1 <= order <= 3):
        raise ValueError(f"order must be in 1..3, got {order}")
    d_full = _difference_operator(T + 1, order)
    d_int = d_full[:, 1:T]
    a = d_int.T @ d_int
    # upper banded storage: ab[u + i - j, j] = a[i, j], u superdiagonals
    u = min(order, a.shape[0] - 1)
    ab = np.zeros((u + 1, a.shape[0]))
    for k in range(u + 1):
        ab[u - k, k:] = np.diagonal(a, offset=k)
    # cholesky raises on a non-positive-definite matrix, so this is the SPD check
    cho = cholesky_banded(ab, lower=False)
    return NormMatrix(a=a, order=order, cho=(cho, False))


def deform(
    xi_r: np.ndarray,
    u_h: np.ndarray,
    t_idx: int,
    cfg: DeformConfig,
    norm: NormMatrix | None = None,
) -> np.ndarray:
    """Shift the interior of xi_r by mu * A^-1 * U with the force at t_idx.

    t_idx must be an interior waypoint; endpoints never move. Linear in both
    u_h and mu.
    """
    xi_r = np.asarray(xi_r, float)
    T = xi_r.shape[0] - 1
    if not (0 < t_idx < T):
        raise ValueError(f"t_idx must be interior (0 < {t_idx} < {T})")
    u = np.asarray(u_h, float)
    if u.shape != (2,) or not np.all(np.isfinite(u)):
        raise ValueError(f"invalid force {u_h!r}")
    if norm is None:
        norm = build_norm_matrix(T, cfg.order)
    rhs = np.zeros((T - 1, 2))
    rhs[t_idx - 1] = u
    shift = cfg.mu * norm.solve(rhs)
    out = xi_r.copy()
    out[1:T] += shift
    return out
