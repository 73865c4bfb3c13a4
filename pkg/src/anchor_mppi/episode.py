"""Closed-loop driver: sense, plan, act, repeat.

Trajectory logs are CSV with a versioned comment header::

    # anchor_mppi trajectory v1
    t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,thrust,wx,wy,wz,winner,S2,clearance,J_track,J_vnorm,J_ctrl,J_goal,J_col

The ``J_*`` columns are the winning rollout's cost terms (NaN on cycles where
planning failed and the vehicle hovered).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from anchor_mppi.config import EnsembleConfig
from anchor_mppi.costs import GoalSpec
from anchor_mppi.dynamics import P, Q, V, State, rk4_step
from anchor_mppi.perception import PointCloudBuffer, build_snapshot
from anchor_mppi.planner import EnsemblePlanner, PlanningFailed
from anchor_mppi.sim import LidarModel, Scenario, check_collision, lidar_scan, true_clearance

LOG_HEADER = "# anchor_mppi trajectory v1"
LOG_COLUMNS = (
    "t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
    "thrust", "wx", "wy", "wz", "winner", "S2", "clearance",
    "J_track", "J_vnorm", "J_ctrl", "J_goal", "J_col",
)  # fmt: skip
BREAKDOWN_KEYS = ("track", "vnorm", "ctrl", "goal", "col")


@dataclass(frozen=True)
class LogRecord:
    t: float
    state: np.ndarray
    control: np.ndarray
    winner: int
    s2: float
    clearance: float
    breakdown: dict[str, float] = field(default_factory=dict)

    def row(self) -> list[float]:
        s = self.state
        terms = [self.breakdown.get(k, float("nan")) for k in BREAKDOWN_KEYS]
        return [self.t, *s[P], *s[V], *s[Q], *self.control, self.winner, self.s2, self.clearance, *terms]


@dataclass
class TrajectoryLog:
    records: list[LogRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, rec: LogRecord) -> None:
        self.records.append(rec)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def positions(self) -> np.ndarray:
        return np.array([r.state[P] for r in self.records]).reshape(-1, 3)

    @property
    def velocities(self) -> np.ndarray:
        return np.array([r.state[V] for r in self.records]).reshape(-1, 3)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(LOG_HEADER + "\n")
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for r in self.records:
                w.writerow([repr(float(v)) if i != 15 else int(v) for i, v in enumerate(r.row())])

    @classmethod
    def read_csv(cls, path: str | Path) -> TrajectoryLog:
        with open(path, newline="") as fh:
            header = fh.readline().strip()
            if header != LOG_HEADER:
                raise ValueError(f"unsupported trajectory log header {header!r}")
            reader = csv.reader(fh)
            if tuple(next(reader)) != LOG_COLUMNS:
                raise ValueError("unexpected trajectory log columns")
            log = cls()
            for row in reader:
                v = [float(x) for x in row]
                state = np.array(v[1:4] + v[7:11] + v[4:7])
                terms = {k: x for k, x in zip(BREAKDOWN_KEYS, v[18:23]) if not np.isnan(x)}
                log.append(LogRecord(v[0], state, np.array(v[11:15]), int(v[15]), v[16], v[17], terms))
        return log


@dataclass
class World:
    """Mutable simulation state of one episode."""

    scene: Scenario
    state: np.ndarray
    lidar: LidarModel
    buffer: PointCloudBuffer
    seed: int = 0
    time: float = 0.0
    cycle: int = 0
    collided: bool = False

    def scan(self) -> None:
        self.buffer.push(lidar_scan(self.scene, self.state, self.lidar, (self.seed, 7, self.cycle)))


def make_world(scene: Scenario, seed: int = 0, lidar: LidarModel | None = None, capacity: int = 10) -> World:
    """World at the scenario start, hovering level, with one frame already sensed."""
    yaw_rel = np.subtract(scene.goal, scene.start)
    state = State.at(scene.start).array
    if np.hypot(yaw_rel[0], yaw_rel[1]) > 1e-9:
        yaw = np.arctan2(yaw_rel[1], yaw_rel[0])
        state[Q] = [np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)]
    world = World(scene, state, lidar or LidarModel(), PointCloudBuffer(capacity), seed)
    world.scan()
    return world


def execute_cycle(world: World, planner: EnsemblePlanner, cfg: EnsembleConfig, drone_radius: float = 0.2) -> tuple[World, LogRecord]:
    """Plan on the current snapshot, apply the winner for one replan period, re-sense."""
    snapshot = build_snapshot(world.buffer, world.state, cfg.r_max)
    try:
        result = planner.plan(world.state, snapshot)
        control, nominal = result.control, result.nominal
        winner, s2, breakdown = result.winner_index, result.stage2, result.breakdown
    except PlanningFailed:
        # every instance invalid: hover and try again next cycle
        control, nominal = cfg.dynamics.hover_control(), None
        winner, s2, breakdown = -1, float("inf"), {}

    period = 1.0 / cfg.replan_hz
    world.state = rk4_step(world.state, control, cfg.dynamics, dt=period)
    world.time += period
    world.cycle += 1
    planner.commit(control, nominal, period)

    scan_every = max(1, round(cfg.replan_hz / world.lidar.rate_hz))
    if world.cycle % scan_every == 0:
        world.scan()

    p = world.state[P]
    clearance = true_clearance(world.scene, p, include_ground=False)
    if check_collision(world.scene, p, drone_radius):
        world.collided = True
    return world, LogRecord(world.time, world.state.copy(), np.asarray(control, float).copy(), winner, s2, clearance, breakdown)


@dataclass(frozen=True)
class EpisodeOutcome:
    status: str  # success | collision | timeout | planner-failure
    duration: float
    log: TrajectoryLog


def fly(
    scene: Scenario,
    cfg: EnsembleConfig,
    seed: int = 0,
    goal_radius: float = 1.0,
    timeout: float = 60.0,
    drone_radius: float = 0.2,
    lidar: LidarModel | None = None,
    max_failed_cycles: int = 50,
) -> EpisodeOutcome:
    """Run one episode until success, collision or timeout."""
    world = make_world(scene, seed, lidar)
    goal = GoalSpec.toward(scene.goal, scene.start)
    planner = EnsemblePlanner(cfg, goal, seed)
    log = TrajectoryLog()
    failed = 0
    status = "timeout"
    while world.time < timeout - 1e-9:
        world, rec = execute_cycle(world, planner, cfg, drone_radius)
        log.append(rec)
        failed = failed + 1 if rec.winner < 0 else 0
        if world.collided:
            status = "collision"
            break
        if not np.all(np.isfinite(world.state)) or failed >= max_failed_cycles:
            status = "planner-failure"
            break
        if np.linalg.norm(world.state[P] - np.asarray(scene.goal)) <= goal_radius:
            status = "success"
            break
    return EpisodeOutcome(status, world.time, log)
