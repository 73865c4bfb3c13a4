"""Anchor-guided ensemble MPPI for mapless quadrotor navigation.

The package is organised bottom-up:

- :mod:`anchor_mppi.dynamics` -- quadrotor model, quaternion helpers, RK4.
- :mod:`anchor_mppi.perception` -- point-cloud buffer, spherical partitions,
  filtered cloud and clearance queries.
- :mod:`anchor_mppi.guidance` -- anchor sampling/refinement and quintic guides.
- :mod:`anchor_mppi.costs` -- stage-I / stage-II cost terms.
- :mod:`anchor_mppi.mppi` -- a single MPPI instance.
- :mod:`anchor_mppi.planner` -- the ensemble planning cycle and closed loop.
- :mod:`anchor_mppi.sim` -- obstacle worlds, LiDAR emulation, ground truth.
- :mod:`anchor_mppi.harness` -- episode metrics, batches and density sweeps.
"""

from anchor_mppi.config import (
    AnchorGrid,
    CostWeights,
    DynamicsParams,
    EnsembleConfig,
    MppiConfig,
)
from anchor_mppi.dynamics import ControlInput, State

__all__ = [
    "AnchorGrid",
    "ControlInput",
    "CostWeights",
    "DynamicsParams",
    "EnsembleConfig",
    "MppiConfig",
    "State",
]

__version__ = "0.1.0"
