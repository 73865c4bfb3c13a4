"""The ensemble planning cycle.

One cycle: anchors from the coarse partition -> one quintic guide per
anchor -> one stage-I MPPI update per guide, each instance starting from its
guide's feedforward controls (or, with ``warm_start="winner"``, all from the
shifted previous winner) -> noise-free re-rollout of every updated nominal
-> the instance with the lowest stage-II cost wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from anchor_mppi import _kernels
from anchor_mppi.config import EnsembleConfig
from anchor_mppi.costs import GoalSpec, Rollout
from anchor_mppi.dynamics import CONTROL_DIM, P, Q, V, STATE_DIM, _as_state, acceleration, clamp_control, quat_to_rotation
from anchor_mppi.guidance import Anchor, GuidingTrajectory, guide_controls, refine_endpoints, sample_initial_endpoints, solve_quintic
from anchor_mppi.mppi import NoValidRollout, compute_weights, effective_sample_size, sample_perturbations, shift_nominal, update_nominal
from anchor_mppi.perception import PerceptionSnapshot


class PlanningFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class InstanceRecord:
    stage1: float
    stage2: float
    nominal: np.ndarray
    ess: float
    min_cost: float = float("nan")  # over the last iteration's samples
    mean_cost: float = float("nan")


@dataclass(frozen=True)
class PlanResult:
    winner_index: int
    control: np.ndarray
    winner_rollout: Rollout
    per_instance: list[InstanceRecord]
    anchors: list[Anchor]
    guides: list[GuidingTrajectory]
    breakdown: dict[str, float] = field(default_factory=dict)

    @property
    def stage2(self) -> float:
        return self.per_instance[self.winner_index].stage2

    @property
    def nominal(self) -> np.ndarray:
        return self.per_instance[self.winner_index].nominal


def plan_anchors(x, goal: GoalSpec, snapshot: PerceptionSnapshot, cfg: EnsembleConfig) -> tuple[list[Anchor], float]:
    """Sample and refine anchors; returns world-frame anchors and the goal distance.

    The look-ahead shrinks to the goal distance so that guides stop at the goal
    instead of overshooting it.
    """
    x = _as_state(x)
    p0 = x[P]
    rot = quat_to_rotation(x[Q])
    rel_world = np.asarray(goal.p_goal, float) - p0
    dist = float(np.linalg.norm(rel_world))
    ell = min(cfg.grid.lookahead, dist)
    rel_body = rel_world @ rot if dist > 1e-9 else np.array([1.0, 0.0, 0.0]) @ rot
    body_pts = sample_initial_endpoints(np.zeros(3), rel_body, cfg.grid, lookahead=max(ell, 1e-9))
    body_anchors = refine_endpoints(
        body_pts,
        snapshot.coarse,
        np.zeros(3),
        ell,
        d_obs_max=cfg.weights.d_max,
        min_distance=min(cfg.min_anchor_distance, ell),
    )
    anchors = [
        Anchor(
            p0 + rot @ a.initial_endpoint,
            p0 + rot @ a.refined_endpoint,
            rot @ a.safe_dir,
            a.safe_range,
            a.coarse_cell,
        )
        for a in body_anchors
    ]
    return anchors, dist


def build_guides(x, u_prev, anchors: list[Anchor], goal_dist: float, cfg: EnsembleConfig) -> list[GuidingTrajectory]:
    """Quintic guides from the current state to each refined anchor.

    Start acceleration is the one the last applied control produces; the end
    has zero acceleration and a forward speed along the safe direction that
    fades to zero within one look-ahead of the goal.
    """
    x = _as_state(x)
    a0 = acceleration(x[Q], np.asarray(u_prev, float)[0], cfg.dynamics)
    v_end = cfg.v_end * min(1.0, goal_dist / cfg.grid.lookahead)
    start = (x[P], x[V], a0)
    zero = np.zeros(3)
    T = cfg.mppi.horizon
    return [solve_quintic(start, (a.refined_endpoint, v_end * a.safe_dir, zero), T) for a in anchors]


def _run_kernel(x0, nominals, noise, guide_pts, goal: GoalSpec, snapshot: PerceptionSnapshot, cfg: EnsembleConfig, store_states=False):
    M, K, N = noise.shape[:3]
    dyn = cfg.dynamics
    index = snapshot.filtered.index
    terms = np.empty((M, K, _kernels.N_TERMS))
    applied = np.empty_like(noise)
    states = np.empty((M, K, N + 1, STATE_DIM)) if store_states else np.empty((1, 1, 1, STATE_DIM))
    _kernels.rollout_terms(
        np.ascontiguousarray(x0, float),
        np.ascontiguousarray(nominals, float),
        np.ascontiguousarray(noise, float),
        dyn.control_lower,
        dyn.control_upper,
        float(dyn.mass),
        np.asarray(dyn.gravity, float),
        float(dyn.dt),
        np.ascontiguousarray(guide_pts, float),
        np.asarray(goal.p_goal, float),
        np.asarray(goal.v_goal, float),
        np.asarray(goal.q_goal, float),
        _kernels.weight_vector(cfg.weights),
        index.points,
        index.starts,
        index.origin,
        index.dims,
        float(index.cell),
        terms,
        applied,
        states,
        store_states,
    )
    return terms, applied, states


def plan_step(
    x,
    goal: GoalSpec,
    snapshot: PerceptionSnapshot,
    cfg: EnsembleConfig,
    cycle: int = 0,
    seed: int = 0,
    nominal: np.ndarray | None = None,
    u_prev: np.ndarray | None = None,
) -> PlanResult:
    """Run one ensemble cycle and pick the control to execute.

    ``nominal`` is the shared warm start used when ``cfg.warm_start`` is
    ``"winner"`` (hover if omitted); ``u_prev`` is the control executed last
    cycle (hover if omitted).

    Raises:
        PlanningFailed: if every instance's re-rollout is invalid.
    """
    x0 = _as_state(x)
    dyn, mp, w = cfg.dynamics, cfg.mppi, cfg.weights
    hover = dyn.hover_control()
    if nominal is None:
        nominal = np.tile(hover, (mp.N, 1))
    u_prev = hover if u_prev is None else np.asarray(u_prev, float)

    anchors, goal_dist = plan_anchors(x0, goal, snapshot, cfg)
    guides = build_guides(x0, u_prev, anchors, goal_dist, cfg)
    M = len(guides)
    times = np.arange(mp.N) * mp.dt
    guide_pts = np.stack([g.position(times) for g in guides])

    if cfg.warm_start == "guide":
        R0 = quat_to_rotation(x0[Q])
        nominals = np.stack([guide_controls(g, R0, dyn, mp.N, mp.dt) for g in guides])
    else:
        nominals = np.broadcast_to(np.asarray(nominal, float), (M, mp.N, CONTROL_DIM)).copy()
    ess = np.zeros(M)
    cost_stats = np.full((M, 2), np.nan)
    for it in range(mp.iterations):
        noise = np.stack([sample_perturbations(mp, seed, m, cycle, it) for m in range(M)])
        terms, applied, _ = _run_kernel(x0, nominals, noise, guide_pts, goal, snapshot, cfg)
        s1 = terms.sum(axis=-1)
        for m in range(M):
            try:
                weights = compute_weights(s1[m], mp.lam)
            except NoValidRollout:
                continue
            nominals[m] = update_nominal(nominals[m], applied[m], weights, dyn)
            ess[m] = effective_sample_size(weights)
            finite = s1[m][np.isfinite(s1[m])]
            cost_stats[m] = finite.min(), finite.mean()

    zero = np.zeros((M, 1, mp.N, CONTROL_DIM))
    terms, _, states = _run_kernel(x0, nominals, zero, guide_pts, goal, snapshot, cfg, store_states=True)
    terms = terms[:, 0]
    s1 = terms.sum(axis=-1)
    s2 = terms[:, _kernels.GOAL] + terms[:, _kernels.COL]
    if not np.isfinite(s2).any():
        raise PlanningFailed("planning failed")
    winner = int(np.argmin(np.where(np.isfinite(s2), s2, np.inf)))

    records = [
        InstanceRecord(float(s1[m]), float(s2[m]), nominals[m], float(ess[m]), *map(float, cost_stats[m]))
        for m in range(M)
    ]
    names = ("track", "vnorm", "ctrl", "goal", "col")
    breakdown = {n: float(terms[winner, i]) for i, n in enumerate(names)}
    winner_rollout = Rollout(states[winner, 0], clamp_control(nominals[winner], dyn), mp.dt, guides[winner])
    control = clamp_control(nominals[winner][0], dyn)
    return PlanResult(winner, control, winner_rollout, records, anchors, guides, breakdown)


class EnsemblePlanner:
    """Receding-horizon wrapper that carries the warm start between cycles.

    The nominal sequence is discretised at ``dt`` while cycles run at
    ``1 / replan_hz``; executed time is accumulated and the nominal is
    shifted by one step each time a full ``dt`` has elapsed.
    """

    def __init__(self, cfg: EnsembleConfig, goal: GoalSpec, seed: int = 0):
        self.cfg = cfg
        self.goal = goal
        self.seed = seed
        hover = cfg.dynamics.hover_control()
        self.nominal = np.tile(hover, (cfg.mppi.N, 1))
        self.u_prev = hover
        self.cycle = 0
        self._phase = 0.0

    def plan(self, x, snapshot: PerceptionSnapshot) -> PlanResult:
        return plan_step(x, self.goal, snapshot, self.cfg, self.cycle, self.seed, self.nominal, self.u_prev)

    def commit(self, control: np.ndarray, nominal: np.ndarray | None, elapsed: float) -> None:
        """Record the executed control and advance the warm start by ``elapsed`` seconds."""
        self.u_prev = np.asarray(control, float)
        if nominal is not None:
            self.nominal = np.asarray(nominal, float).copy()
        self._phase += elapsed
        dt = self.cfg.mppi.dt
        while self._phase >= dt - 1e-9:
            self.nominal = shift_nominal(self.nominal)
            self._phase -= dt
        self.cycle += 1
