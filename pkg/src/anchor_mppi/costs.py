"""Stage-I and stage-II rollout costs.

Every running term sums over steps ``t = 0 .. N-1`` of a rollout with
``N + 1`` states and ``N`` controls. Scalar weights multiply vector norms:
tracking, goal position and goal velocity use plain Euclidean norms, the
velocity and control terms use squared norms.

These are the reference implementations; the batched planner kernel in
:mod:`anchor_mppi._kernels` is tested against them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from anchor_mppi.config import CostWeights
from anchor_mppi.dynamics import P, Q, V, quat_from_yaw, quat_to_rotation
from anchor_mppi.guidance import GuidingTrajectory
from anchor_mppi.perception import FilteredCloud, clearance


@dataclass(frozen=True)
class Rollout:
    states: np.ndarray  # (N + 1, 10)
    controls: np.ndarray  # (N, 4)
    dt: float = 0.05
    guide: GuidingTrajectory | None = None
    valid: bool = True

    def __post_init__(self) -> None:
        if len(self.states) != len(self.controls) + 1:
            raise ValueError("a rollout needs exactly one more state than controls")

    @property
    def N(self) -> int:
        return len(self.controls)


@dataclass(frozen=True)
class GoalSpec:
    p_goal: np.ndarray
    v_goal: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q_goal: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self) -> None:
        if abs(np.linalg.norm(self.q_goal) - 1.0) > 1e-9:
            raise ValueError("q_goal must be a unit quaternion")

    @classmethod
    def toward(cls, p_goal, origin, v_goal=(0.0, 0.0, 0.0)) -> GoalSpec:
        """Goal with level attitude yawed to face ``p_goal`` from ``origin``."""
        p_goal = np.asarray(p_goal, float)
        rel = p_goal - np.asarray(origin, float)
        yaw = float(np.arctan2(rel[1], rel[0])) if np.hypot(rel[0], rel[1]) > 1e-9 else 0.0
        return cls(p_goal, np.asarray(v_goal, float), quat_from_yaw(yaw))


def tracking_cost(r: Rollout, w: CostWeights, guide: GuidingTrajectory | None = None) -> float:
    guide = guide if guide is not None else r.guide
    t = np.arange(r.N) * r.dt
    ref = guide.position(t)
    return float(w.q_track * np.linalg.norm(r.states[: r.N, P] - ref, axis=1).sum())


def vnorm_cost(r: Rollout, w: CostWeights) -> float:
    v = r.states[: r.N, V]
    return float(w.q_vnorm * (v**2).sum())


def control_cost(r: Rollout, w: CostWeights, u_prev=None) -> float:
    """Magnitude over ``t = 0..N-2`` plus rate over ``t = 1..N-2``.

    With these index ranges every difference stays inside the sequence, so
    ``u_prev`` never enters; it is accepted to mirror the planner's call.
    """
    u = r.controls
    n = r.N
    mag = (u[: n - 1] ** 2).sum()
    rate = ((u[1 : n - 1] - u[: n - 2]) ** 2).sum() if n > 2 else 0.0
    return float(w.q_c * mag + w.q_c_delta * rate)


def attitude_error(q: np.ndarray, q_goal: np.ndarray) -> np.ndarray:
    """``|| R(q) R(q_goal)^T - I ||_F`` per quaternion in ``q``."""
    err = quat_to_rotation(q) @ quat_to_rotation(q_goal).T - np.eye(3)
    return np.sqrt((err**2).sum(axis=(-2, -1)))


def goal_cost(r: Rollout, g: GoalSpec, w: CostWeights) -> float:
    s = r.states[: r.N]
    pos = np.linalg.norm(s[:, P] - g.p_goal, axis=1).sum()
    vel = np.linalg.norm(s[:, V] - g.v_goal, axis=1).sum()
    att = attitude_error(s[:, Q], g.q_goal).sum()
    return float(w.q_p * pos + w.q_v * vel + w.q_q * att)


def collision_term(d, w: CostWeights):
    """Piecewise penalty: ``C`` inside ``d_min``, exponential decay up to ``d_max``, then 0."""
    d = np.asarray(d, float)
    out = np.where(
        d < w.d_min,
        w.C,
        np.where(d < w.d_max, w.C * np.exp(-w.a * (d - w.d_min)), 0.0),
    )
    return float(out) if out.ndim == 0 else out


def collision_cost(r: Rollout, filtered: FilteredCloud, w: CostWeights) -> float:
    """Sum of :func:`collision_term` of the clearance at every running step.

    ``filtered`` must be expressed in the same frame as the rollout states.
    """
    if len(filtered) == 0:
        return 0.0
    d = clearance(filtered, r.states[: r.N, P])
    return float(np.sum(collision_term(d, w)))


def stage2_cost(r: Rollout, goal: GoalSpec, filtered: FilteredCloud, w: CostWeights) -> float:
    return goal_cost(r, goal, w) + collision_cost(r, filtered, w)


def stage1_cost(
    r: Rollout,
    guide: GuidingTrajectory | None,
    goal: GoalSpec,
    filtered: FilteredCloud,
    w: CostWeights,
    u_prev=None,
) -> float:
    return (
        tracking_cost(r, w, guide)
        + vnorm_cost(r, w)
        + control_cost(r, w, u_prev)
        + stage2_cost(r, goal, filtered, w)
    )


def cost_breakdown(
    r: Rollout,
    guide: GuidingTrajectory | None,
    goal: GoalSpec,
    filtered: FilteredCloud,
    w: CostWeights,
) -> dict[str, float]:
    """The five named terms, for logging."""
    return {
        "track": tracking_cost(r, w, guide) if (guide or r.guide) is not None else 0.0,
        "vnorm": vnorm_cost(r, w),
        "ctrl": control_cost(r, w),
        "goal": goal_cost(r, goal, w),
        "col": collision_cost(r, filtered, w),
    }
