"""Acceptance suite: one PASS/FAIL line per criterion, printed to the terminal.

The closed-loop criteria (6-8) fly full episodes and dominate the runtime.
"""

import math
import time

import numpy as np
import pytest

from anchor_mppi.config import CostWeights, EnsembleConfig
from anchor_mppi.costs import GoalSpec, collision_term
from anchor_mppi.dynamics import State
from anchor_mppi.episode import TrajectoryLog
from anchor_mppi.guidance import solve_quintic
from anchor_mppi.harness import compute_metrics, default_workers, run_batch
from anchor_mppi.mppi import compute_weights
from anchor_mppi.perception import N_AZ, N_EL, PointCloudBuffer, build_partition, build_snapshot, clearance, pool_coarse
from anchor_mppi.planner import plan_step
from anchor_mppi.sim import generate_scenario, lidar_scan, signed_distance, two_gap_scenario

from test_dynamics import rk4_convergence_ratio
from test_harness import make_log

WORKERS = default_workers()


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return emit


def test_quintic_boundary_residuals(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        start = tuple(rng.uniform(-10, 10, 3) for _ in range(3))
        end = tuple(rng.uniform(-10, 10, 3) for _ in range(3))
        T = rng.uniform(0.2, 3.0)
        g = solve_quintic(start, end, T)
        for order in range(3):
            worst = max(worst, np.abs(g.derivative(0.0, order) - start[order]).max(), np.abs(g.derivative(T, order) - end[order]).max())
    elapsed = time.perf_counter() - t0
    report(1, worst < 1e-9 and elapsed < 1.0, f"quintic: worst residual {worst:.2e} over 1000 draws in {elapsed:.3f} s")


def test_rk4_order(report):
    t0 = time.perf_counter()
    ratio = rk4_convergence_ratio()
    elapsed = time.perf_counter() - t0
    report(2, 10 <= ratio <= 24 and elapsed < 1.0, f"RK4 self-convergence ratio {ratio:.2f} in {elapsed:.3f} s")


def test_weight_law(report):
    uniform = compute_weights(np.full(128, 42.0), 0.1)
    s = np.random.default_rng(0).integers(0, 1 << 12, 128) / 256.0
    shifted = all(np.array_equal(compute_weights(s, 0.1), compute_weights(s + c, 0.1)) for c in (1.0, 64.0, -2.5))
    pair = compute_weights(np.array([0.0, 0.1]), 0.1)
    ok = np.allclose(uniform, 1 / 128, rtol=0, atol=1e-12) and shifted and np.allclose(pair, [0.73106, 0.26894], atol=1e-5, rtol=0)
    report(3, ok, f"weights: uniform ok, translation exact={shifted}, S=[0, lambda] -> ({pair[0]:.5f}, {pair[1]:.5f})")


def test_collision_branch_table(report):
    w = CostWeights()
    c = [collision_term(d, w) for d in (0.2, 0.4, 0.6, 1.0)]
    ok = c[0] == 1e6 and c[1] == 1e6 and abs(c[2] / (1e6 * math.exp(-1)) - 1) < 1e-6 and c[3] == 0.0
    report(4, ok, f"collision cost at 0.2/0.4/0.6/1.0 m: {c[0]:.0f} / {c[1]:.0f} / {c[2]:.2f} / {c[3]:.0f}")


def oracle_ranges(points, r_max=10.0, eps=0.05):
    r = np.sqrt((points**2).sum(axis=1))
    keep = (r > eps) & (r <= r_max)
    p, r = points[keep], r[keep]
    az = np.degrees(np.arctan2(p[:, 1], p[:, 0]))
    el = np.degrees(np.arcsin(np.clip(p[:, 2] / r, -1, 1)))
    i = np.floor((az + 180) / 3).astype(int) % N_AZ
    j = np.minimum(np.floor((el + 90) / 3).astype(int), N_EL - 1)
    out = np.full((N_AZ, N_EL), r_max)
    np.minimum.at(out, (i, j), r)
    return out


def oracle_pool(ranges):
    cells = np.empty((20, 10, 2), int)
    for I in range(20):
        for J in range(10):
            block = ranges[6 * I : 6 * I + 6, 6 * J : 6 * J + 6]
            best = block.max()
            di, dj = next((a, b) for a in range(6) for b in range(6) if block[a, b] == best)
            cells[I, J] = (6 * I + di, 6 * J + dj)
    return cells


def test_partition_oracle_equivalence(report):
    rng = np.random.default_rng(5)
    mismatches, impl_time = 0, 0.0
    for _ in range(100):
        d = rng.normal(size=(10_000, 3))
        cloud = d / np.linalg.norm(d, axis=1, keepdims=True) * rng.uniform(0, 12, (10_000, 1))
        queries = rng.uniform(-10, 10, (200, 3))
        t0 = time.perf_counter()
        part = build_partition(cloud)
        coarse = pool_coarse(part)
        got = clearance(part.filtered, queries)
        impl_time += time.perf_counter() - t0
        expected = np.sqrt(((queries[:, None] - part.filtered.points[None]) ** 2).sum(-1)).min(axis=1)
        ranges = oracle_ranges(cloud)
        mismatches += not np.array_equal(part.ranges, ranges)
        mismatches += not np.array_equal(coarse.safe_cell, oracle_pool(ranges))
        mismatches += not np.array_equal(got, expected)
    report(5, mismatches == 0 and impl_time < 30, f"partition/pool/clearance: {mismatches} mismatches over 100 clouds, {impl_time:.2f} s")


def test_empty_world_regulation(report):
    t0 = time.perf_counter()
    rep = run_batch("empty", range(20), workers=WORKERS, timeout=60.0)
    ok = sum(r.status == "success" for r in rep.rows)
    times = [r.duration for r in rep.rows if r.status == "success"]
    detail = f"empty world: {ok}/20 reached the goal (max {max(times, default=math.nan):.1f} s simulated), {time.perf_counter() - t0:.0f} s wall"
    report(6, ok >= 19, detail)


def test_forest_success_at_cap(report):
    t0 = time.perf_counter()
    rep = run_batch("forest", range(20), caps=[3.0], workers=WORKERS, timeout=60.0)
    summary = rep.summary()[0]
    detail = f"forest cap 3 m/s: success {summary['successes']}/20 = {summary['success_rate']:.2f} {summary['status_counts']}, mean speed {summary['avg_vel']['mean']:.2f} m/s, {time.perf_counter() - t0:.0f} s wall"
    report(7, summary["success_rate"] >= 0.8, detail)


def corridor(log, wall_x):
    p = log.positions
    crossed = np.nonzero(p[:, 0] >= wall_x)[0]
    return None if not len(crossed) else ("left" if p[crossed[0], 1] > 0 else "right")


def test_two_gap_exploration(report, tmp_path):
    t0 = time.perf_counter()
    rep = run_batch("two_gap", range(50), workers=WORKERS, timeout=60.0, out_dir=tmp_path)
    wall_x = two_gap_scenario().obstacles[0].center[0]
    ok = [r.seed for r in rep.rows if r.status == "success"]
    sides = [corridor(TrajectoryLog.read_csv(tmp_path / f"two_gap_capNone_seed{s}.csv"), wall_x) for s in ok]
    both = {"left", "right"} <= set(sides)
    detail = f"two gaps: success {len(ok)}/50, left {sides.count('left')} right {sides.count('right')}, {time.perf_counter() - t0:.0f} s wall"
    report(8, both and len(ok) / 50 >= 0.9, detail)


def test_determinism_across_workers(report, tmp_path):
    kw = dict(caps=[3.0], timeout=2.0)
    run_batch("forest", [0, 1, 2], workers=1, out_dir=tmp_path / "a", **kw)
    run_batch("forest", [0, 1, 2], workers=1, out_dir=tmp_path / "b", **kw)
    run_batch("forest", [0, 1, 2], workers=3, out_dir=tmp_path / "c", **kw)
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / d / n).read_bytes() for n in names for d in ("b", "c"))
    report(9, same and len(names) == 4, f"determinism: {len(names) - 1} trajectory logs bit-identical across reruns and 1 vs 3 workers: {same}")


def test_plan_step_throughput(report):
    cfg = EnsembleConfig()
    scene = generate_scenario("forest", 0)
    x = State.at((25.0, 0.0, 2.0))
    assert signed_distance(scene, x.array[:3]) > 1.0
    goal = GoalSpec.toward(scene.goal, scene.start)
    buf = PointCloudBuffer()
    for f in range(10):
        buf.push(lidar_scan(scene, x, frame_seed=f))
    plan_step(x, goal, build_snapshot(buf, x), cfg)  # compile
    times = []
    for cycle in range(30):
        t0 = time.perf_counter()
        snap = build_snapshot(buf, x)
        plan_step(x, goal, snap, cfg, cycle=cycle)
        times.append(time.perf_counter() - t0)
    med = float(np.median(times)) * 1e3
    report(10, med < 100.0, f"plan_step incl. partition rebuild: median {med:.1f} ms over 30 cycles ({len(buf.world_points())} points, 1 thread)")


def test_metrics_oracle(report):
    t = np.arange(51) * 0.02
    cubic = compute_metrics(make_log(t, np.column_stack([t**3, 0 * t, 0 * t]), np.column_stack([3 * t**2, 0 * t, 0 * t])))
    t = np.arange(501) * 0.02
    line = compute_metrics(make_log(t, np.column_stack([2 * t, 0 * t, 0 * t + 2]), np.tile([2.0, 0, 0], (501, 1))))
    ok = abs(cubic.smoothness / 36 - 1) < 0.05 and abs(line.path_length - 20) < 1e-9 and abs(line.avg_vel - 2) < 1e-9 and abs(line.max_vel - 2) < 1e-9
    report(11, ok, f"metrics: cubic smoothness {cubic.smoothness:.3f} (analytic 36), line length {line.path_length:.12f}, speed {line.avg_vel:.12f}")
