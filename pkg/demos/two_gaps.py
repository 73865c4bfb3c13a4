"""Which way round the wall?

A wall blocks the straight line to the goal and has two identical gaps.
Fly a handful of seeds and count which corridor each flight used.
"""

import sys

import numpy as np

from anchor_mppi.harness import run_episode
from anchor_mppi.sim import two_gap_scenario

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 6)
scene = two_gap_scenario()
wall_x = scene.obstacles[0].center[0]

tally = {"left": 0, "right": 0, "none": 0}
for seed in seeds:
    res = run_episode(scene, seed=seed)
    p = res.trajectory.positions
    crossed = np.nonzero(p[:, 0] >= wall_x)[0]
    side = "none" if not len(crossed) else ("left" if p[crossed[0], 1] > 0 else "right")
    tally[side] += 1
    print(f"seed {seed}: {res.status:<10} {res.duration:5.2f} s via {side}")

print(tally)
