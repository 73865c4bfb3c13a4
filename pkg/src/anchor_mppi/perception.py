"""Egocentric spherical partitions of an accumulated LiDAR cloud.

The high-resolution grid splits the sphere around the vehicle into
3-degree cones (120 azimuth x 60 elevation cells, elevation spanning the
full [-90, 90] degrees). Each cone keeps the nearest return. The coarse grid
pools 6x6 blocks into 18-degree cells and keeps, per block, the direction
with the largest free range.

Angles: azimuth ``alpha`` in [-180, 180) measured from +x towards +y,
elevation ``beta`` in [-90, 90] measured from the xy plane. Cell ``i`` covers
``alpha`` in ``[-180 + 3 i, -180 + 3 (i + 1))`` and cell ``j`` covers
``beta`` in ``[-90 + 3 j, -90 + 3 (j + 1))``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numba as nb
import numpy as np

from anchor_mppi.dynamics import P, Q, _as_state, quat_to_rotation
from anchor_mppi.spatial import VoxelIndex

RESOLUTION_DEG = 3.0
N_AZ = 120
N_EL = 60
POOL = 6
COARSE_RESOLUTION_DEG = RESOLUTION_DEG * POOL
N_AZ_COARSE = N_AZ // POOL
N_EL_COARSE = N_EL // POOL
MIN_RANGE = 0.05  # self-return cutoff, m
HORIZON_REACH = 20.0  # added to r_max for the empty-cloud clearance sentinel


def direction(alpha, beta) -> np.ndarray:
    """Unit vector for azimuth/elevation given in radians."""
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    cb = np.cos(beta)
    return np.stack([cb * np.cos(alpha), cb * np.sin(alpha), np.sin(beta)], axis=-1)


def cell_center_angles(i, j, resolution_deg: float = RESOLUTION_DEG) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth and elevation (radians) of cell centres."""
    res = np.deg2rad(resolution_deg)
    alpha = -np.pi + (np.asarray(i, float) + 0.5) * res
    beta = -np.pi / 2 + (np.asarray(j, float) + 0.5) * res
    return alpha, beta


def cell_direction(i, j, resolution_deg: float = RESOLUTION_DEG) -> np.ndarray:
    """Unit direction through the centre of cell ``(i, j)``.

    Raises:
        IndexError: for indices outside the grid of the given resolution.
    """
    n_az = round(360.0 / resolution_deg)
    n_el = round(180.0 / resolution_deg)
    ii = np.asarray(i)
    jj = np.asarray(j)
    if np.any((ii < 0) | (ii >= n_az) | (jj < 0) | (jj >= n_el)):
        raise IndexError(f"cell index out of range for a {n_az}x{n_el} grid")
    return direction(*cell_center_angles(ii, jj, resolution_deg))


CELL_DIRECTIONS = cell_direction(*np.meshgrid(np.arange(N_AZ), np.arange(N_EL), indexing="ij"))


def angles_of(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Range, azimuth and elevation of body-frame points."""
    pts = np.asarray(points, float).reshape(-1, 3)
    r = np.sqrt((pts**2).sum(axis=1))
    alpha = np.arctan2(pts[:, 1], pts[:, 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = np.arcsin(np.clip(pts[:, 2] / r, -1.0, 1.0))
    return r, alpha, beta


def cell_of_angles(alpha, beta, resolution_deg: float = RESOLUTION_DEG) -> tuple[np.ndarray, np.ndarray]:
    """Cell indices containing the given angles (radians)."""
    # work in degrees so that cell boundaries such as 0 or 90 degrees are exact
    n_az = round(360.0 / resolution_deg)
    n_el = round(180.0 / resolution_deg)
    i = np.floor((np.degrees(alpha) + 180.0) / resolution_deg).astype(np.int64) % n_az
    j = np.clip(np.floor((np.degrees(beta) + 90.0) / resolution_deg).astype(np.int64), 0, n_el - 1)
    return i, j


class PointCloudBuffer:
    """Ring buffer of the most recent world-frame LiDAR frames."""

    def __init__(self, capacity: int = 10):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.frames: deque[np.ndarray] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.frames)

    def push(self, frame: np.ndarray) -> None:
        self.frames.append(np.asarray(frame, float).reshape(-1, 3))

    def world_points(self) -> np.ndarray:
        if not self.frames:
            return np.empty((0, 3))
        return np.concatenate(list(self.frames), axis=0)

    def body_points(self, pose) -> np.ndarray:
        """Accumulated cloud expressed in the body frame of ``pose``."""
        return to_body(self.world_points(), pose)


def accumulate(buffer: PointCloudBuffer, frame: np.ndarray, pose=None) -> PointCloudBuffer:
    """Append a world-frame frame, evicting the oldest beyond capacity.

    ``pose`` is accepted for symmetry with :meth:`PointCloudBuffer.body_points`;
    frames are stored in the world frame and projected on demand.
    """
    buffer.push(frame)
    return buffer


def to_body(points: np.ndarray, pose) -> np.ndarray:
    x = _as_state(pose)
    rot = quat_to_rotation(x[Q])
    return (np.asarray(points, float).reshape(-1, 3) - x[P]) @ rot


def to_world(points: np.ndarray, pose) -> np.ndarray:
    x = _as_state(pose)
    rot = quat_to_rotation(x[Q])
    return np.asarray(points, float).reshape(-1, 3) @ rot.T + x[P]


@dataclass(frozen=True)
class FilteredCloud:
    """One nearest return per non-empty high-resolution cell."""

    points: np.ndarray
    frame: str = "body"
    r_max: float = 10.0

    @property
    def empty_clearance(self) -> float:
        return self.r_max + HORIZON_REACH

    @cached_property
    def index(self) -> VoxelIndex:
        return VoxelIndex(self.points, cell=0.5)

    def __len__(self) -> int:
        return len(self.points)

    def in_world(self, pose) -> FilteredCloud:
        if self.frame == "world":
            return self
        return FilteredCloud(to_world(self.points, pose), "world", self.r_max)


@dataclass(frozen=True)
class SphericalPartition:
    """Nearest range per 3-degree cone; empty cells hold ``r_max``."""

    ranges: np.ndarray  # (120, 60)
    nearest_point: np.ndarray  # (120, 60, 3), NaN where empty
    counts: np.ndarray  # (120, 60) binned points per cell
    r_max: float = 10.0

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    @property
    def filtered(self) -> FilteredCloud:
        occ = self.occupied
        return FilteredCloud(self.nearest_point[occ], "body", self.r_max)


@dataclass(frozen=True)
class CoarsePartition:
    """Safest high-resolution cell of every 6x6 block."""

    safe_range: np.ndarray  # (20, 10)
    safe_cell: np.ndarray  # (20, 10, 2) high-res (i, j) of the argmax
    safe_dir: np.ndarray = field(repr=False)  # (20, 10, 3)

    @property
    def safe_point(self) -> np.ndarray:
        return self.safe_range[..., None] * self.safe_dir


@nb.njit(cache=True)
def _bin_nearest(flat, r, pts, ranges, nearest, counts):
    # strict < keeps the earliest point on equal ranges
    for k in range(flat.shape[0]):
        c = flat[k]
        if counts[c] == 0 or r[k] < ranges[c]:
            ranges[c] = r[k]
            nearest[c, 0] = pts[k, 0]
            nearest[c, 1] = pts[k, 1]
            nearest[c, 2] = pts[k, 2]
        counts[c] += 1


def build_partition(cloud: np.ndarray, r_max: float = 10.0, min_range: float = MIN_RANGE) -> SphericalPartition:
    """Bin a body-frame cloud into cones and keep the nearest point of each."""
    pts = np.asarray(cloud, float).reshape(-1, 3)
    r, alpha, beta = angles_of(pts)
    keep = (r > min_range) & (r <= r_max)
    pts, r, alpha, beta = pts[keep], r[keep], alpha[keep], beta[keep]

    ranges = np.full((N_AZ, N_EL), float(r_max))
    nearest = np.full((N_AZ, N_EL, 3), np.nan)
    counts = np.zeros((N_AZ, N_EL), dtype=np.int64)
    if len(pts):
        i, j = cell_of_angles(alpha, beta)
        _bin_nearest(i * N_EL + j, r, pts, ranges.reshape(-1), nearest.reshape(-1, 3), counts.reshape(-1))
    return SphericalPartition(ranges, nearest, counts, float(r_max))


def pool_coarse(part: SphericalPartition) -> CoarsePartition:
    """Per 6x6 block, the cell with the largest range (first in (i, j) order on ties)."""
    blocks = part.ranges.reshape(N_AZ_COARSE, POOL, N_EL_COARSE, POOL).transpose(0, 2, 1, 3)
    flat = blocks.reshape(N_AZ_COARSE, N_EL_COARSE, POOL * POOL)
    k = np.argmax(flat, axis=-1)  # first maximum in row-major (i, j) order
    di, dj = np.divmod(k, POOL)
    ii = np.arange(N_AZ_COARSE)[:, None] * POOL + di
    jj = np.arange(N_EL_COARSE)[None, :] * POOL + dj
    safe_range = np.take_along_axis(flat, k[..., None], axis=-1)[..., 0]
    return CoarsePartition(safe_range, np.stack([ii, jj], axis=-1), CELL_DIRECTIONS[ii, jj])


def clearance(filtered: FilteredCloud, p: np.ndarray) -> np.ndarray | float:
    """Exact distance from ``p`` (same frame as the cloud) to the nearest filtered point."""
    p = np.asarray(p, float)
    if len(filtered) == 0:
        out = np.full(p.shape[:-1], filtered.empty_clearance)
    else:
        out = filtered.index.nearest(p)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PerceptionSnapshot:
    """Immutable per-cycle view shared by all rollouts of one planning step."""

    pose: np.ndarray
    partition: SphericalPartition
    coarse: CoarsePartition
    filtered: FilteredCloud  # world frame


def build_snapshot(buffer: PointCloudBuffer, pose, r_max: float = 10.0) -> PerceptionSnapshot:
    x = _as_state(pose)
    part = build_partition(buffer.body_points(x), r_max)
    return PerceptionSnapshot(x.copy(), part, pool_coarse(part), part.filtered.in_world(x))


def partition_rows(part: SphericalPartition) -> list[tuple[int, int, float]]:
    """``(i, j, range)`` rows in lexicographic order, for CSV dumps."""
    return [(i, j, float(part.ranges[i, j])) for i in range(N_AZ) for j in range(N_EL)]
