"""Look-ahead anchors and the quintic guiding trajectories built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from anchor_mppi.config import AnchorGrid, DynamicsParams
from anchor_mppi.perception import (
    COARSE_RESOLUTION_DEG,
    N_AZ_COARSE,
    N_EL_COARSE,
    CoarsePartition,
    cell_of_angles,
    direction,
)

MAX_ELEVATION = np.deg2rad(89.0)


def grid_offsets(grid: AnchorGrid) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth and elevation offsets (radians) of every anchor, row-major over elevation."""
    step = np.deg2rad(grid.spacing_deg)
    dh = (np.arange(grid.m_h) - (grid.m_h - 1) / 2) * step
    dv = (np.arange(grid.m_v) - (grid.m_v - 1) / 2) * step
    el, az = np.meshgrid(dv, dh, indexing="ij")
    return az.ravel(), el.ravel()


def sample_initial_endpoints(p0, goal, grid: AnchorGrid, lookahead: float | None = None) -> np.ndarray:
    """Anchor endpoints on a sphere of radius ``lookahead`` around ``p0``.

    The grid is centred on the goal direction. Offsets are applied in
    azimuth/elevation, with elevation clamped to +-89 degrees.

    Returns:
        ``(m_h * m_v, 3)`` endpoints; index ``v * m_h + h``.

    Raises:
        ValueError: when ``goal`` coincides with ``p0``.
    """
    p0 = np.asarray(p0, float)
    rel = np.asarray(goal, float) - p0
    dist = np.linalg.norm(rel)
    if not dist > 1e-9:
        raise ValueError("degenerate goal direction")
    ell = grid.lookahead if lookahead is None else lookahead
    alpha0 = np.arctan2(rel[1], rel[0])
    beta0 = np.arcsin(np.clip(rel[2] / dist, -1.0, 1.0))
    d_az, d_el = grid_offsets(grid)
    beta = np.clip(beta0 + d_el, -MAX_ELEVATION, MAX_ELEVATION)
    return p0 + ell * direction(alpha0 + d_az, beta)


@dataclass(frozen=True)
class Anchor:
    initial_endpoint: np.ndarray
    refined_endpoint: np.ndarray
    safe_dir: np.ndarray
    safe_range: float
    coarse_cell: tuple[int, int]


def refine_endpoints(
    endpoints: np.ndarray,
    coarse: CoarsePartition,
    p0,
    lookahead: float,
    d_obs_max: float = 1.0,
    min_distance: float = 0.5,
) -> list[Anchor]:
    """Re-aim each endpoint along the safest direction of its coarse cell.

    The refined distance is ``min(lookahead, max(safe_range - d_obs_max,
    min_distance))``: never past the look-ahead, kept outside the outer
    penalty shell of the blocking obstacle, and never collapsed onto the
    vehicle. Endpoints must be expressed in the partition's frame.
    """
    p0 = np.asarray(p0, float)
    rel = np.asarray(endpoints, float).reshape(-1, 3) - p0
    r = np.linalg.norm(rel, axis=1)
    alpha = np.arctan2(rel[:, 1], rel[:, 0])
    beta = np.arcsin(np.clip(rel[:, 2] / np.where(r > 0, r, 1.0), -1.0, 1.0))
    big_i, big_j = cell_of_angles(alpha, beta, COARSE_RESOLUTION_DEG)
    anchors = []
    for k in range(len(rel)):
        I, J = int(big_i[k]) % N_AZ_COARSE, min(int(big_j[k]), N_EL_COARSE - 1)
        safe_range = float(coarse.safe_range[I, J])
        safe_dir = coarse.safe_dir[I, J]
        reach = min(lookahead, max(safe_range - d_obs_max, min_distance))
        anchors.append(Anchor(p0 + rel[k], p0 + reach * safe_dir, safe_dir.copy(), safe_range, (I, J)))
    return anchors


@dataclass(frozen=True)
class GuidingTrajectory:
    """Per-axis quintic ``f(t) = sum_i coeffs[:, i] t**i`` on ``[0, horizon]``."""

    coeffs: np.ndarray  # (3, 6)
    horizon: float

    def position(self, t) -> np.ndarray:
        return self.derivative(t, 0)

    def derivative(self, t, order: int = 0) -> np.ndarray:
        """``order``-th time derivative at ``t`` (clamped to the horizon)."""
        t = np.clip(np.asarray(t, float), 0.0, self.horizon)
        c = self.coeffs
        for _ in range(order):
            c = c[:, 1:] * np.arange(1, c.shape[1])
        out = np.zeros(t.shape + (3,))
        for k in range(c.shape[1] - 1, -1, -1):
            out = out * t[..., None] + c[:, k]
        return out


def solve_quintic(start, end, T: float) -> GuidingTrajectory:
    """Closed-form quintic matching position, velocity and acceleration at both ends.

    ``start`` and ``end`` are ``(p, v, a)`` triples of 3-vectors.
    """
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    p0, v0, a0 = (np.asarray(s, float) for s in start)
    p1, v1, a1 = (np.asarray(s, float) for s in end)
    h = p1 - p0
    T2, T3 = T * T, T**3
    c3 = (20 * h - (8 * v1 + 12 * v0) * T - (3 * a0 - a1) * T2) / (2 * T3)
    c4 = (-30 * h + (14 * v1 + 16 * v0) * T + (3 * a0 - 2 * a1) * T2) / (2 * T3 * T)
    c5 = (12 * h - 6 * (v1 + v0) * T - (a0 - a1) * T2) / (2 * T3 * T2)
    coeffs = np.stack([p0, v0, 0.5 * a0, c3, c4, c5], axis=-1)
    return GuidingTrajectory(coeffs, float(T))


def guide_controls(guide: GuidingTrajectory, R0: np.ndarray, params: DynamicsParams, N: int, dt: float) -> np.ndarray:
    """Feedforward thrust and body rates that fly ``guide`` from attitude ``R0``.

    Differential flatness at the heading of ``R0``: the thrust axis follows
    ``a - g``. Each zero-order-hold step takes the midpoint thrust and the
    constant body rate that carries one node attitude onto the next.
    Returns an ``(N, 4)`` array clamped to the actuator limits.
    """
    t = np.arange(N + 1) * dt
    f = params.mass * (guide.derivative(t, 2) - np.asarray(params.gravity, float))
    zb = f / np.maximum(np.linalg.norm(f, axis=1), 1e-9)[:, None]
    heading = np.array([R0[0, 0], R0[1, 0], 0.0])
    yb = np.cross(zb, heading)
    yb /= np.linalg.norm(yb, axis=1, keepdims=True)
    R = np.stack([np.cross(yb, zb), yb, zb], axis=-1)
    R[0] = R0
    # body rate of each step from the relative rotation between nodes
    rel = np.einsum("kji,kjl->kil", R[:-1], R[1:])
    cos = np.clip((np.trace(rel, axis1=1, axis2=2) - 1) / 2, -1.0, 1.0)
    angle = np.arccos(cos)
    skew = np.stack([rel[:, 2, 1] - rel[:, 1, 2], rel[:, 0, 2] - rel[:, 2, 0], rel[:, 1, 0] - rel[:, 0, 1]], axis=1)
    scale = np.where(angle < 1e-8, 0.5, angle / (2 * np.sin(np.maximum(angle, 1e-8))))
    omega = skew * scale[:, None] / dt
    thrust = params.mass * np.linalg.norm(guide.derivative(t[:-1] + dt / 2, 2) - np.asarray(params.gravity, float), axis=1)
    return np.clip(np.column_stack([thrust, omega]), params.control_lower, params.control_upper)


def eval_guide(traj: GuidingTrajectory, t) -> np.ndarray:
    """Guide position at ``t`` (Horner; ``t`` clamped to ``[0, T]``)."""
    return traj.position(t)
