"""Uniform voxel bucketing for exact nearest-distance queries.

Points are sorted by voxel id into a CSR layout (``order``/``starts``), so a
query only touches the voxels that can still hold a closer point. Both the
bounded query (used inside rollouts, where only distances below the outer
collision radius matter) and the unbounded one return the exact Euclidean
minimum, identical to a linear scan.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_MAX_VOXELS = 1 << 21


class VoxelIndex:
    """Static bucket grid over a point set."""

    def __init__(self, points: np.ndarray, cell: float = 1.0):
        pts = np.ascontiguousarray(np.asarray(points, float).reshape(-1, 3))
        if not cell > 0:
            raise ValueError("cell size must be positive")
        self.n = len(pts)
        if self.n == 0:
            self.cell = float(cell)
            self.origin = np.zeros(3)
            self.dims = np.ones(3, dtype=np.int64)
            self.points = pts
            self.starts = np.zeros(2, dtype=np.int64)
            return
        lo = pts.min(axis=0)
        extent = float((pts.max(axis=0) - lo).max())
        # keep the dense grid bounded for widely spread inputs
        cell = max(float(cell), extent / (_MAX_VOXELS ** (1 / 3) - 1))
        dims = np.floor((pts.max(axis=0) - lo) / cell).astype(np.int64) + 1
        ijk = np.minimum(np.floor((pts - lo) / cell).astype(np.int64), dims - 1)
        vid = (ijk[:, 0] * dims[1] + ijk[:, 1]) * dims[2] + ijk[:, 2]
        order = np.argsort(vid, kind="stable")
        counts = np.bincount(vid, minlength=int(np.prod(dims)))
        self.cell = cell
        self.origin = lo
        self.dims = dims
        self.points = pts[order]
        self.starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def nearest(self, queries: np.ndarray) -> np.ndarray:
        """Exact distance to the nearest point (``inf`` for an empty index)."""
        q = np.ascontiguousarray(np.asarray(queries, float).reshape(-1, 3))
        out = np.empty(len(q))
        _nearest_exact_batch(q, self.points, self.starts, self.origin, self.dims, self.cell, out)
        return out.reshape(np.shape(queries)[:-1])

    def nearest_within(self, queries: np.ndarray, bound: float) -> np.ndarray:
        """Exact nearest distance where it is below ``bound``, else ``inf``."""
        q = np.ascontiguousarray(np.asarray(queries, float).reshape(-1, 3))
        out = np.empty(len(q))
        _nearest_bounded_batch(q, self.points, self.starts, self.origin, self.dims, self.cell, bound, out)
        return out.reshape(np.shape(queries)[:-1])


@nb.njit(cache=True)
def _scan_voxel(qx, qy, qz, pts, starts, vid, best):
    for k in range(starts[vid], starts[vid + 1]):
        dx = pts[k, 0] - qx
        dy = pts[k, 1] - qy
        dz = pts[k, 2] - qz
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if d < best:
            best = d
    return best


@nb.njit(cache=True, inline="always")
def _gap(q, lo, cell, i):
    """Distance along one axis from ``q`` to voxel slab ``i``."""
    a = lo + i * cell
    if q < a:
        return a - q
    b = a + cell
    if q > b:
        return q - b
    return 0.0


@nb.njit(cache=True)
def nearest_bounded(qx, qy, qz, pts, starts, origin, dims, cell, bound, floor=0.0):
    """Exact nearest distance if it is strictly below ``bound``, else inf.

    Once a point closer than ``floor`` turns up the search stops and returns
    that distance, which is then only an upper bound below ``floor``.
    """
    best = bound
    if pts.shape[0] == 0:
        return np.inf
    reach = int(math.ceil(bound / cell))
    cx = int(math.floor((qx - origin[0]) / cell))
    cy = int(math.floor((qy - origin[1]) / cell))
    cz = int(math.floor((qz - origin[2]) / cell))
    for ix in range(max(cx - reach, 0), min(cx + reach, dims[0] - 1) + 1):
        gx = _gap(qx, origin[0], cell, ix)
        gx2 = gx * gx
        if gx2 >= best * best:
            continue
        for iy in range(max(cy - reach, 0), min(cy + reach, dims[1] - 1) + 1):
            gy = _gap(qy, origin[1], cell, iy)
            gxy2 = gx2 + gy * gy
            if gxy2 >= best * best:
                continue
            base = (ix * dims[1] + iy) * dims[2]
            for iz in range(max(cz - reach, 0), min(cz + reach, dims[2] - 1) + 1):
                vid = base + iz
                if starts[vid] == starts[vid + 1]:
                    continue
                gz = _gap(qz, origin[2], cell, iz)
                if gxy2 + gz * gz >= best * best:
                    continue
                best = _scan_voxel(qx, qy, qz, pts, starts, vid, best)
                if best < floor:
                    return best
    if best >= bound:
        return np.inf
    return best


@nb.njit(cache=True)
def nearest_exact(qx, qy, qz, pts, starts, origin, dims, cell):
    best = np.inf
    if pts.shape[0] == 0:
        return best
    cx = int(math.floor((qx - origin[0]) / cell))
    cy = int(math.floor((qy - origin[1]) / cell))
    cz = int(math.floor((qz - origin[2]) / cell))
    # shell beyond which no voxel of the grid remains
    last = max(
        max(cx, dims[0] - 1 - cx),
        max(max(cy, dims[1] - 1 - cy), max(cz, dims[2] - 1 - cz)),
    )
    s = 0
    while s <= last:
        for ix in range(max(cx - s, 0), min(cx + s, dims[0] - 1) + 1):
            edge_x = ix == cx - s or ix == cx + s
            for iy in range(max(cy - s, 0), min(cy + s, dims[1] - 1) + 1):
                base = (ix * dims[1] + iy) * dims[2]
                if edge_x or iy == cy - s or iy == cy + s:
                    for iz in range(max(cz - s, 0), min(cz + s, dims[2] - 1) + 1):
                        best = _scan_voxel(qx, qy, qz, pts, starts, base + iz, best)
                else:
                    if 0 <= cz - s < dims[2]:
                        best = _scan_voxel(qx, qy, qz, pts, starts, base + cz - s, best)
                    if s > 0 and 0 <= cz + s < dims[2]:
                        best = _scan_voxel(qx, qy, qz, pts, starts, base + cz + s, best)
        # anything in shell s + 1 lies at least s * cell away
        if best <= s * cell:
            break
        s += 1
    return best


@nb.njit(cache=True)
def _nearest_exact_batch(q, pts, starts, origin, dims, cell, out):
    for i in range(q.shape[0]):
        out[i] = nearest_exact(q[i, 0], q[i, 1], q[i, 2], pts, starts, origin, dims, cell)


@nb.njit(cache=True)
def _nearest_bounded_batch(q, pts, starts, origin, dims, cell, bound, out):
    for i in range(q.shape[0]):
        out[i] = nearest_bounded(q[i, 0], q[i, 1], q[i, 2], pts, starts, origin, dims, cell, bound)
