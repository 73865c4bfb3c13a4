"""Walk through a single planning cycle in a random forest.

Scan the world from the start pose, bin the returns, pick anchors, and run
the ensemble once. Prints what each stage produced and writes the guides
next to the script as CSV.
"""

from pathlib import Path

import numpy as np

from anchor_mppi.config import EnsembleConfig
from anchor_mppi.costs import GoalSpec
from anchor_mppi.dynamics import State
from anchor_mppi.io import write_guides_csv
from anchor_mppi.perception import PointCloudBuffer, build_snapshot
from anchor_mppi.planner import plan_step
from anchor_mppi.sim import generate_scenario, lidar_scan

cfg = EnsembleConfig()
scene = generate_scenario("forest", seed=3)
x0 = State.at(scene.start)
goal = GoalSpec.toward(scene.goal, scene.start)

buf = PointCloudBuffer()
buf.push(lidar_scan(scene, x0, frame_seed=0))
snap = build_snapshot(buf, x0)
occupied = int((snap.partition.ranges < cfg.r_max).sum())
print(f"{len(buf.world_points())} returns, {occupied} of 7200 cells occupied, {len(snap.filtered)} filtered points")

res = plan_step(x0, goal, snap, cfg, seed=0)
print("\nanchor  refined endpoint             safe range   stage II")
for m, (a, rec) in enumerate(zip(res.anchors, res.per_instance)):
    mark = "*" if m == res.winner_index else " "
    print(f"{m:>4}{mark}  {np.array2string(a.refined_endpoint, precision=2):<28} {a.safe_range:6.2f}   {rec.stage2:10.1f}")

print("\nwinning cost terms:", {k: round(v, 2) for k, v in res.breakdown.items()})
print("first control (thrust, wx, wy, wz):", np.round(res.control, 3))

out = Path(__file__).with_name("one_cycle_guides.csv")
write_guides_csv(out, res.guides, cfg.mppi.dt, cfg.mppi.N)
print("guides written to", out)
