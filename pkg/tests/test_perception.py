import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchor_mppi.dynamics import State, quat_from_yaw
from anchor_mppi.perception import (
    CELL_DIRECTIONS,
    HORIZON_REACH,
    N_AZ,
    N_EL,
    FilteredCloud,
    PointCloudBuffer,
    SphericalPartition,
    accumulate,
    build_partition,
    build_snapshot,
    cell_direction,
    clearance,
    direction,
    pool_coarse,
    to_body,
    to_world,
)
from anchor_mppi.spatial import VoxelIndex, nearest_bounded


def random_cloud(rng, n=10_000, r_max=10.0):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(0.0, 1.2 * r_max, size=(n, 1))


def brute_force_ranges(points, r_max=10.0, eps=0.05):
    """Per-point loop binning in degrees; first point wins equal ranges."""
    ranges = np.full((N_AZ, N_EL), r_max)
    seen = set()
    for x, y, z in points:
        r = math.sqrt(x * x + y * y + z * z)
        if not (eps < r <= r_max):
            continue
        az = math.degrees(math.atan2(y, x))
        el = math.degrees(math.asin(max(-1.0, min(1.0, z / r))))
        i = int(math.floor((az + 180.0) / 3.0)) % N_AZ
        j = min(int(math.floor((el + 90.0) / 3.0)), N_EL - 1)
        if (i, j) not in seen or r < ranges[i, j]:
            ranges[i, j] = r
            seen.add((i, j))
    return ranges


def brute_force_pool(ranges):
    safe = np.empty((20, 10))
    cells = np.empty((20, 10, 2), dtype=int)
    for I in range(20):
        for J in range(10):
            best, arg = -np.inf, None
            for i in range(6 * I, 6 * I + 6):
                for j in range(6 * J, 6 * J + 6):
                    if ranges[i, j] > best:
                        best, arg = ranges[i, j], (i, j)
            safe[I, J], cells[I, J] = best, arg
    return safe, cells


def test_cell_grid_shape():
    assert CELL_DIRECTIONS.shape == (N_AZ, N_EL, 3)
    assert np.allclose(np.linalg.norm(CELL_DIRECTIONS, axis=-1), 1.0, atol=1e-12)


@pytest.mark.parametrize(
    "alpha, beta, expected",
    [(0, 0, (1, 0, 0)), (90, 0, (0, 1, 0)), (0, 90, (0, 0, 1))],
)
def test_direction_formula(alpha, beta, expected):
    assert np.allclose(direction(np.deg2rad(alpha), np.deg2rad(beta)), expected, atol=1e-15)


def test_cell_direction_uses_cell_centres():
    assert np.allclose(cell_direction(60, 30), direction(np.deg2rad(1.5), np.deg2rad(1.5)))
    assert np.allclose(cell_direction(0, 0), direction(np.deg2rad(-178.5), np.deg2rad(-88.5)))


@pytest.mark.parametrize("i, j", [(-1, 0), (120, 0), (0, 60), (0, -1)])
def test_cell_direction_out_of_range(i, j):
    with pytest.raises(IndexError):
        cell_direction(i, j)


def test_ring_buffer_evicts_oldest():
    buf = PointCloudBuffer(10)
    for k in range(11):
        accumulate(buf, np.array([[float(k), 0.0, 0.0]]))
    pts = buf.world_points()
    assert len(buf) == 10
    assert 0.0 not in pts[:, 0]
    assert set(pts[:, 0]) == set(map(float, range(1, 11)))


def test_body_frame_projection():
    assert np.allclose(to_body(np.array([[1.0, 0, 0]]), State.at((0, 0, 0))), [[1, 0, 0]])
    assert np.allclose(to_body(np.array([[2.0, 0, 0]]), State.at((1, 0, 0))), [[1, 0, 0]])
    yawed = State.at((0, 0, 0), q=quat_from_yaw(np.pi / 2))
    assert np.allclose(to_body(np.array([[0.0, 1, 0]]), yawed), [[1, 0, 0]], atol=1e-12)


@given(st.floats(-np.pi, np.pi), st.tuples(*[st.floats(-5, 5)] * 3))
def test_body_world_round_trip(yaw, p):
    pose = State.at(p, q=quat_from_yaw(yaw))
    pts = np.array([[1.0, 2.0, 3.0], [-4.0, 0.5, 0.0]])
    assert np.allclose(to_world(to_body(pts, pose), pose), pts, atol=1e-9)


def test_empty_cloud_partition():
    part = build_partition(np.empty((0, 3)))
    assert np.all(part.ranges == 10.0)
    assert len(part.filtered) == 0
    assert np.all(pool_coarse(part).safe_range == 10.0)


def test_single_point_partition():
    part = build_partition(np.array([[4.0, 0.0, 0.0]]))
    assert np.count_nonzero(part.ranges < 10.0) == 1
    assert part.ranges[60, 30] == 4.0
    assert np.array_equal(part.nearest_point[60, 30], [4.0, 0, 0])
    assert np.all(np.isnan(part.nearest_point[part.ranges == 10.0]))


def test_self_returns_and_far_points_dropped():
    part = build_partition(np.array([[0.01, 0, 0], [0, 0, 12.0], [0, 0.049, 0]]))
    assert np.all(part.ranges == 10.0)
    assert part.counts.sum() == 0


def test_point_exactly_at_r_max_kept():
    part = build_partition(np.array([[10.0, 0.0, 0.0]]))
    assert part.counts.sum() == 1
    assert part.ranges[60, 30] == 10.0


def test_azimuth_wrap_and_poles():
    part = build_partition(np.array([[-3.0, 0.0, 0.0], [0.0, 0.0, 2.0], [0.0, 0.0, -2.5]]))
    assert part.ranges[0, 30] == 3.0  # +-180 degrees both land in the first azimuth column
    assert part.ranges[60, 59] == 2.0
    assert part.ranges[60, 0] == 2.5


def test_binning_is_partition_complete():
    pts = random_cloud(np.random.default_rng(5))
    r = np.linalg.norm(pts, axis=1)
    part = build_partition(pts)
    assert part.counts.sum() == np.count_nonzero((r > 0.05) & (r <= 10.0))
    assert len(part.filtered) == np.count_nonzero(part.counts)


def test_partition_matches_brute_force_oracle():
    rng = np.random.default_rng(11)
    for _ in range(5):
        pts = random_cloud(rng)
        part = build_partition(pts)
        assert np.array_equal(part.ranges, brute_force_ranges(pts))


def test_partition_rebuild_is_bit_identical():
    pts = random_cloud(np.random.default_rng(2))
    a, b = build_partition(pts), build_partition(pts)
    assert np.array_equal(a.ranges, b.ranges)
    assert np.array_equal(a.nearest_point, b.nearest_point, equal_nan=True)


def test_pooling_tie_breaks_lexicographically():
    ranges = np.full((N_AZ, N_EL), 10.0)
    ranges[2, 2] = 3.0
    part = SphericalPartition(ranges, np.full((N_AZ, N_EL, 3), np.nan), np.zeros((N_AZ, N_EL), int))
    coarse = pool_coarse(part)
    assert coarse.safe_range[0, 0] == 10.0
    assert tuple(coarse.safe_cell[0, 0]) == (0, 0)
    assert np.allclose(coarse.safe_dir[0, 0], cell_direction(0, 0))


def test_pooling_matches_exhaustive_scan():
    rng = np.random.default_rng(3)
    for _ in range(20):
        # coarse value grid so that ties actually occur
        ranges = rng.integers(1, 6, size=(N_AZ, N_EL)).astype(float)
        part = SphericalPartition(ranges, np.full((N_AZ, N_EL, 3), np.nan), np.ones((N_AZ, N_EL), int))
        coarse = pool_coarse(part)
        safe, cells = brute_force_pool(ranges)
        assert np.array_equal(coarse.safe_range, safe)
        assert np.array_equal(coarse.safe_cell, cells)
        assert np.allclose(np.linalg.norm(coarse.safe_dir, axis=-1), 1.0, atol=1e-9)
        assert np.allclose(coarse.safe_point, coarse.safe_range[..., None] * coarse.safe_dir)


def test_clearance_examples():
    empty = FilteredCloud(np.empty((0, 3)))
    assert clearance(empty, np.zeros(3)) == 10.0 + HORIZON_REACH
    assert clearance(FilteredCloud(np.array([[1.0, 0, 0]])), np.zeros(3)) == 1.0


def test_clearance_matches_linear_scan():
    rng = np.random.default_rng(7)
    cloud = FilteredCloud(rng.uniform(-10, 10, size=(7200, 3)))
    q = rng.uniform(-12, 12, size=(500, 3))
    oracle = np.sqrt(((q[:, None, :] - cloud.points[None]) ** 2).sum(-1)).min(axis=1)
    assert np.array_equal(clearance(cloud, q), oracle)


@settings(max_examples=100)
@given(st.tuples(*[st.floats(-8, 8)] * 3), st.tuples(*[st.floats(-8, 8)] * 3))
def test_clearance_is_lipschitz(p1, p2):
    cloud = FilteredCloud(np.random.default_rng(0).uniform(-5, 5, size=(300, 3)))
    p1, p2 = np.array(p1), np.array(p2)
    assert abs(clearance(cloud, p1) - clearance(cloud, p2)) <= np.linalg.norm(p1 - p2) + 1e-12


def test_snapshot_filtered_cloud_in_world_frame():
    buf = PointCloudBuffer()
    buf.push(np.array([[5.0, 1.0, 2.0]]))
    snap = build_snapshot(buf, State.at((1.0, 1.0, 2.0), q=quat_from_yaw(0.4)))
    assert snap.filtered.frame == "world"
    assert np.allclose(snap.filtered.points, [[5.0, 1.0, 2.0]])
    assert snap.partition.counts.sum() == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 3.0), st.floats(0.0, 1.0))
def test_bounded_voxel_query(seed, bound, floor_frac):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-3, 3, (300, 3))
    q = rng.uniform(-4, 4, (50, 3))
    index = VoxelIndex(pts, cell=0.5)
    exact = np.sqrt(((q[:, None] - pts[None]) ** 2).sum(-1)).min(axis=1)
    within = index.nearest_within(q, bound)
    assert np.array_equal(within, np.where(exact < bound, exact, np.inf))
    floor = floor_frac * bound
    for qi, e in zip(q, exact):
        d = nearest_bounded(*qi, index.points, index.starts, index.origin, index.dims, index.cell, bound, floor)
        if e >= bound:
            assert d == np.inf
        elif e >= floor:
            assert d == e
        else:
            assert e <= d < floor
