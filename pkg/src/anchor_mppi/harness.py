"""Episode metrics, batch evaluation and obstacle-density sweeps.

Speed caps are labels: a cap scales the speed penalty and limits the guide
terminal speed (see :func:`capped_config`); nothing clips the velocity.
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from anchor_mppi.config import EnsembleConfig
from anchor_mppi.episode import TrajectoryLog, fly
from anchor_mppi.sim import Scenario, check_collision, density_scenario, empty_scenario, generate_scenario, true_clearance, two_gap_scenario

METRIC_NAMES = ("avg_vel", "max_vel", "smoothness", "path_length", "avg_clearance", "min_clearance")
SCENARIO_KINDS = ("forest", "verticals", "inclines", "two_gap", "empty")


@dataclass(frozen=True)
class EpisodeMetrics:
    avg_vel: float
    max_vel: float
    smoothness: float  # integral of squared jerk, m^2/s^5
    path_length: float
    avg_clearance: float
    min_clearance: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class EpisodeResult:
    status: str  # success | collision | timeout | planner-failure
    duration: float
    trajectory: TrajectoryLog = field(repr=False)
    metrics: EpisodeMetrics | None


def jerk_from_velocity(v: np.ndarray, dt: float) -> np.ndarray:
    """Second derivative of ``v`` by central differences, one-sided at the ends.

    All stencils are second-order accurate, so a quadratic velocity profile
    gives its exact constant jerk everywhere.
    """
    v = np.asarray(v, float)
    if len(v) < 4:
        raise ValueError("need at least 4 samples to estimate jerk")
    j = np.empty_like(v)
    j[1:-1] = v[2:] - 2 * v[1:-1] + v[:-2]
    j[0] = 2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]
    j[-1] = 2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]
    return j / dt**2


def compute_metrics(log: TrajectoryLog, scene: Scenario | None = None, dt: float | None = None) -> EpisodeMetrics:
    """Velocity, smoothness, length and clearance statistics of a logged flight.

    ``dt`` defaults to the log's (uniform) timestep. Clearance ignores the
    ground slab; it is ``inf`` when the scene has no obstacles or is omitted.

    Raises:
        ValueError: if the log has fewer than 4 samples or a non-uniform step.
    """
    if len(log) < 4:
        raise ValueError("need at least 4 samples to estimate jerk")
    t = log.times
    if dt is None:
        steps = np.diff(t)
        dt = float(np.mean(steps))
        if not np.allclose(steps, dt, rtol=1e-6, atol=1e-9):
            raise ValueError("trajectory log timestep is not uniform")
    p, v = log.positions, log.velocities
    speed = np.linalg.norm(v, axis=1)
    jerk = jerk_from_velocity(v, dt)
    if scene is None or not scene.obstacles:
        clear = np.full(len(p), np.inf)
    else:
        clear = np.asarray(true_clearance(scene, p, include_ground=False), float)
    return EpisodeMetrics(
        avg_vel=float(speed.mean()),
        max_vel=float(speed.max()),
        smoothness=float(np.sum(jerk**2) * dt),
        path_length=float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum()),
        avg_clearance=float(clear.mean()),
        min_clearance=float(clear.min()),
    )


def capped_config(cfg: EnsembleConfig, cap: float | None) -> EnsembleConfig:
    """Config for a speed-cap label (m/s).

    The guides set the pace: a guide covers one look-ahead per horizon, so the
    look-ahead shrinks to ``cap * horizon`` and the guide terminal speed to
    ``cap``. The speed penalty grows by the squared ratio of the uncapped pace
    to the cap. Caps at or above the uncapped pace change nothing but the
    terminal speed.
    """
    if cap is None:
        return cfg
    if not cap > 0:
        raise ValueError("velocity cap must be positive")
    T = cfg.mppi.horizon
    pace = cfg.grid.lookahead / T
    w = replace(cfg.weights, q_vnorm=cfg.weights.q_vnorm * max(1.0, (pace / cap) ** 2))
    grid = replace(cfg.grid, lookahead=min(cfg.grid.lookahead, cap * T))
    return replace(cfg, weights=w, grid=grid, v_end=min(cfg.v_end, cap))


def make_scenario(kind: str, seed: int) -> Scenario:
    if kind == "two_gap":
        return two_gap_scenario()
    if kind == "empty":
        return empty_scenario()
    return generate_scenario(kind, seed)


def collided_anywhere(log: TrajectoryLog, scene: Scenario, drone_radius: float = 0.2) -> bool:
    """Independent re-scan of a log against the collision check."""
    return bool(np.any(check_collision(scene, log.positions, drone_radius)))


def run_episode(
    scene: Scenario,
    cfg: EnsembleConfig | None = None,
    seed: int = 0,
    cap: float | None = None,
    goal_radius: float = 1.0,
    timeout: float = 60.0,
) -> EpisodeResult:
    cfg = capped_config(cfg or EnsembleConfig(), cap)
    out = fly(scene, cfg, seed=seed, goal_radius=goal_radius, timeout=timeout)
    metrics = compute_metrics(out.log, scene) if len(out.log) >= 4 else None
    return EpisodeResult(out.status, out.duration, out.log, metrics)


@dataclass(frozen=True)
class EpisodeRow:
    scenario: str
    cap: float | None
    seed: int
    status: str
    duration: float
    metrics: dict[str, float] | None
    winners: tuple[int, ...] = ()


@dataclass
class BatchReport:
    scenario: str
    rows: list[EpisodeRow]

    def groups(self) -> dict[float | None, list[EpisodeRow]]:
        out: dict[float | None, list[EpisodeRow]] = {}
        for r in self.rows:
            out.setdefault(r.cap, []).append(r)
        return out

    def summary(self) -> list[dict]:
        """Per cap: success rate plus mean and std of each metric over successes."""
        table = []
        for cap, rows in self.groups().items():
            ok = [r for r in rows if r.status == "success" and r.metrics is not None]
            entry: dict = {
                "scenario": self.scenario,
                "cap": cap,
                "episodes": len(rows),
                "successes": len(ok),
                "success_rate": len(ok) / len(rows),
                "status_counts": {s: sum(r.status == s for r in rows) for s in sorted({r.status for r in rows})},
            }
            for name in METRIC_NAMES:
                vals = np.array([r.metrics[name] for r in ok], float)
                entry[name] = {
                    "mean": float(vals.mean()) if len(vals) else math.nan,
                    "std": float(vals.std()) if len(vals) else math.nan,
                }
            table.append(entry)
        return table

    def long_rows(self) -> list[tuple]:
        """``(scenario, cap, seed, metric, value)`` rows; status and duration included."""
        out = []
        for r in self.rows:
            out.append((self.scenario, r.cap, r.seed, "success", float(r.status == "success")))
            out.append((self.scenario, r.cap, r.seed, "duration", r.duration))
            for name in METRIC_NAMES:
                value = r.metrics[name] if r.metrics else math.nan
                out.append((self.scenario, r.cap, r.seed, name, value))
        return out

    def write_summary(self, path: str | Path) -> None:
        doc = {
            "scenario": self.scenario,
            "summary": self.summary(),
            "episodes": [asdict(r) for r in self.rows],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, default=_json_default)
            fh.write("\n")

    def write_long_csv(self, path: str | Path) -> None:
        write_long_csv(self.long_rows(), path)


def write_long_csv(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("scenario", "cap", "seed", "metric", "value"))
        for scenario, cap, seed, metric, value in rows:
            w.writerow((scenario, "" if cap is None else repr(float(cap)), seed, metric, repr(float(value))))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def _episode_job(job) -> tuple[EpisodeRow, TrajectoryLog]:
    kind, scene, cap, seed, cfg, timeout = job
    res = run_episode(scene, cfg, seed=seed, cap=cap, timeout=timeout)
    winners = tuple(sorted({r.winner for r in res.trajectory.records if r.winner >= 0}))
    row = EpisodeRow(kind, cap, seed, res.status, res.duration, res.metrics.as_dict() if res.metrics else None, winners)
    return row, res.trajectory


def _run_jobs(jobs, workers: int | None):
    workers = workers if workers is not None else 1
    if workers <= 1 or len(jobs) <= 1:
        return [_episode_job(j) for j in jobs]
    # spawn, because forking after the numba thread pool started is unsafe;
    # results come back in submission order whatever the completion order
    with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn")) as pool:
        return list(pool.map(_episode_job, jobs))


def run_batch(
    kind: str,
    seeds,
    caps=(None,),
    cfg: EnsembleConfig | None = None,
    workers: int | None = 1,
    out_dir: str | Path | None = None,
    timeout: float = 60.0,
) -> BatchReport:
    """One episode per (cap, seed); the world for seed ``s`` is ``make_scenario(kind, s)``.

    With ``out_dir`` each trajectory is written as ``{kind}_cap{cap}_seed{seed}.csv``
    next to ``summary.json`` and ``metrics_long.csv``.
    """
    cfg = cfg or EnsembleConfig()
    caps = list(caps) or [None]
    jobs = [(kind, make_scenario(kind, s), cap, int(s), cfg, timeout) for cap in caps for s in seeds]
    results = _run_jobs(jobs, workers)
    report = BatchReport(kind, [row for row, _ in results])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for row, log in results:
            log.write_csv(out / f"{kind}_cap{row.cap}_seed{row.seed}.csv")
        report.write_summary(out / "summary.json")
        report.write_long_csv(out / "metrics_long.csv")
    return report


@dataclass
class SweepReport:
    rows: list[EpisodeRow]

    def cells(self) -> list[dict]:
        """Velocity statistics per (height mode, count) cell."""
        keyed: dict[str, list[EpisodeRow]] = {}
        for r in self.rows:
            keyed.setdefault(r.scenario, []).append(r)
        out = []
        for name, rows in keyed.items():
            _, mode, count = name.split("-")
            flown = [r for r in rows if r.metrics is not None]
            out.append(
                {
                    "height_mode": mode,
                    "count": int(count),
                    "episodes": len(rows),
                    "success_rate": sum(r.status == "success" for r in rows) / len(rows),
                    "mean_vel": float(np.mean([r.metrics["avg_vel"] for r in flown])) if flown else math.nan,
                    "max_vel": float(np.max([r.metrics["max_vel"] for r in flown])) if flown else math.nan,
                }
            )
        return sorted(out, key=lambda c: (c["height_mode"], c["count"]))

    def trend(self) -> dict[str, dict]:
        """Mean velocity against density per height mode, with a monotonicity flag."""
        out = {}
        for mode in sorted({c["height_mode"] for c in self.cells()}):
            cells = [c for c in self.cells() if c["height_mode"] == mode]
            vel = [c["mean_vel"] for c in cells]
            out[mode] = {
                "counts": [c["count"] for c in cells],
                "mean_vel": vel,
                "non_increasing": bool(all(b <= a for a, b in zip(vel, vel[1:]))),
            }
        return out

    def long_rows(self) -> list[tuple]:
        return [
            (r.scenario, r.cap, r.seed, m, r.metrics[m] if r.metrics else math.nan)
            for r in self.rows
            for m in ("avg_vel", "max_vel")
        ]

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.json", "w") as fh:
            json.dump({"cells": self.cells(), "trend": self.trend()}, fh, indent=2, default=_json_default)
            fh.write("\n")
        write_long_csv(self.long_rows(), out / "sweep_long.csv")


def density_sweep(
    counts,
    height_mode: str,
    seeds,
    cfg: EnsembleConfig | None = None,
    cap: float | None = None,
    workers: int | None = 1,
    timeout: float = 60.0,
) -> SweepReport:
    """Verticals-style worlds at each obstacle count; ``height_mode`` is ``random`` or ``fixed``."""
    cfg = cfg or EnsembleConfig()
    jobs = []
    for count in counts:
        for s in seeds:
            scene = density_scenario(int(count), height_mode, int(s))
            jobs.append((scene.kind, scene, cap, int(s), cfg, timeout))
    return SweepReport([row for row, _ in _run_jobs(jobs, workers)])


def cruise_speed(cfg: EnsembleConfig, cap: float | None = None) -> float:
    """Pace the guides set: one look-ahead per horizon."""
    c = capped_config(cfg, cap)
    return c.grid.lookahead / c.mppi.horizon


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
