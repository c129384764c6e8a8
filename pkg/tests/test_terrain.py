import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from geoloc import io
from geoloc.geometry import Pose
from geoloc.terrain import (
    COST_MIN,
    FREE,
    OCCUPIED,
    UNKNOWN,
    CostMapGlobal,
    InsufficientDataError,
    LocalElevationGrid,
    RoughnessParams,
    build_global_costmap,
    occupancy_costmap,
    overlay_local,
    plane_roughness,
    roughness,
    update_local_grid,
    voxel_downsample,
)


def _tilted_frame():
    n = np.array([0.2, -0.3, 1.0])
    n /= np.linalg.norm(n)
    a = np.cross(n, [1.0, 0, 0])
    a /= np.linalg.norm(a)
    return n, a, np.cross(n, a)


def _flat_cloud(size=20.0, spacing=0.5, z=0.0):
    xs = np.arange(0, size + 1e-9, spacing)
    gx, gy = np.meshgrid(xs, xs)
    return np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])


def test_coplanar_points_zero(rng):
    n, a, b = _tilted_frame()
    uv = rng.uniform(-1, 1, (100, 2))
    pts = uv[:, :1] * a + uv[:, 1:] * b + [3, 4, 5]
    assert plane_roughness(pts) == pytest.approx(0.0, abs=1e-12)


def test_alternating_offsets_give_h():
    n, a, b = _tilted_frame()
    h = 0.07
    g = np.arange(-5, 6) * 0.1
    uu, vv = np.meshgrid(g, g)
    uv = np.column_stack([uu.ravel(), vv.ravel()])
    base = uv[:, :1] * a + uv[:, 1:] * b
    # each lattice point doubled, one copy above and one below: symmetric about the plane
    pts = np.vstack([base + h * n, base - h * n])
    assert plane_roughness(pts) == pytest.approx(h, rel=1e-9)


def test_roughness_insufficient_data():
    cloud = np.array([[0, 0, 0], [0.1, 0, 0.0]])
    with pytest.raises(InsufficientDataError):
        roughness(cloud, (0, 0), RoughnessParams(min_points=3))


def test_roughness_uses_horizontal_radius():
    cloud = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 50.0], [3, 3, 0]])
    with pytest.raises(InsufficientDataError):
        roughness(cloud, (0, 0), RoughnessParams(radius=1.5, min_points=4))
    assert roughness(cloud, (0, 0), RoughnessParams(radius=1.5, min_points=3)) == pytest.approx(0.0, abs=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        RoughnessParams(radius=0)
    with pytest.raises(ValueError):
        RoughnessParams(threshold=-1)


def test_flat_field_all_navigable():
    cm = build_global_costmap(_flat_cloud(), RoughnessParams(), 0.5, origin=(0, 0), shape=(40, 40))
    assert cm.navigable.all()
    assert np.all(cm.cost == COST_MIN)


def _oracle_rough(cloud, cx, cy, radius, min_points):
    d = np.sqrt((cloud[:, 0] - cx) ** 2 + (cloud[:, 1] - cy) ** 2)
    P = cloud[d <= radius]
    if len(P) < min_points:
        return math.nan
    C = P - P.mean(axis=0)
    normal = np.linalg.svd(C, full_matrices=False)[2][-1]
    return float(np.mean(np.abs(C @ normal)))


def test_rough_patch_matches_per_cell_oracle(rng):
    cloud = _flat_cloud(16.0, 0.25)
    in_patch = np.hypot(cloud[:, 0] - 8, cloud[:, 1] - 8) < 3
    cloud[in_patch, 2] = rng.uniform(-2, 2, in_patch.sum())
    params = RoughnessParams(1.5, 0.15, 10)
    cm = build_global_costmap(cloud, params, 0.5, origin=(0, 0), shape=(32, 32))
    oracle = np.array([[_oracle_rough(cloud, (ix + 0.5) * 0.5, (iy + 0.5) * 0.5, 1.5, 10)
                        for ix in range(32)] for iy in range(32)])
    assert np.allclose(cm.roughness, oracle, rtol=1e-9, atol=1e-12, equal_nan=True)
    assert (~cm.navigable).sum() == (~(oracle < 0.15)).sum()
    assert not cm.navigable[16, 16]
    assert cm.navigable[2, 2]


def test_data_hole_is_non_navigable():
    cloud = _flat_cloud(30.0)
    hole = (np.abs(cloud[:, 0] - 15) < 5) & (np.abs(cloud[:, 1] - 15) < 5)
    cm = build_global_costmap(cloud[~hole], RoughnessParams(), 0.5, origin=(0, 0), shape=(60, 60))
    assert not cm.known[30, 30] and not cm.navigable[30, 30]
    assert np.isnan(cm.roughness[30, 30]) and math.isinf(cm.cost[30, 30])
    assert cm.known[5, 5]


def test_empty_cloud_rejected():
    with pytest.raises(ValueError):
        build_global_costmap(np.zeros((0, 3)))


def test_cost_monotone_in_roughness(rng):
    cloud = _flat_cloud(20.0, 0.25)
    cloud[:, 2] = rng.normal(0, 0.01, len(cloud)) * (cloud[:, 0] / 5.0)
    cm = build_global_costmap(cloud, RoughnessParams(), 0.5, origin=(0, 0), shape=(40, 40))
    r, c = cm.roughness[cm.navigable], cm.cost[cm.navigable]
    order = np.argsort(r)
    assert np.all(np.diff(c[order]) >= 0)
    assert c.min() >= 1.0 and c.max() <= 10.0


@given(dx=st.integers(-20, 20), dy=st.integers(-20, 20))
def test_costmap_translation_equivariant(dx, dy):
    rng = np.random.default_rng(3)
    cloud = _flat_cloud(10.0, 0.5)
    cloud[:, 2] = rng.normal(0, 0.05, len(cloud))
    a = build_global_costmap(cloud, RoughnessParams(), 0.5, origin=(0, 0), shape=(20, 20))
    shift = np.array([dx * 0.5, dy * 0.5, 0.0])
    b = build_global_costmap(cloud + shift, RoughnessParams(), 0.5, origin=(dx * 0.5, dy * 0.5), shape=(20, 20))
    assert np.allclose(a.roughness, b.roughness, rtol=1e-9, atol=1e-12, equal_nan=True)


def test_costmap_file_round_trip(tmp_path, rng):
    rough = rng.uniform(0, 0.2, (7, 9))
    rough[2, 3] = np.nan
    cost = np.where(rough < 0.15, 1 + 60 * rough, np.inf)
    cm = CostMapGlobal((12.5, -3.0), 0.5, rough, cost)
    io.write_costmap(tmp_path / "m.bin", cm, {"radius": 1.5})
    back = io.read_costmap(tmp_path / "m.bin")
    assert back.origin_utm == (12.5, -3.0) and back.cell_size == 0.5
    assert np.array_equal(back.cost, cm.cost)
    assert np.array_equal(back.roughness, cm.roughness, equal_nan=True)
    meta = (tmp_path / "m.bin.meta.txt").read_text()
    assert "radius: 1.5" in meta and "unknown_cells: 1" in meta
    (tmp_path / "bad.bin").write_bytes(b"GLCM" + b"\0" * 10)
    with pytest.raises(io.FormatError):
        io.read_costmap(tmp_path / "bad.bin")


# --- local grid ------------------------------------------------------------

def test_flat_scan_elevation_zero():
    grid = LocalElevationGrid(center_utm=(15, 0))
    pts = _flat_cloud(30.0, 0.1)
    pts[:, 1] -= 15
    update_local_grid(grid, pts, Pose([0, 0, 0]), range_limit=50, voxel_size=0.2)
    touched = grid.count > 0
    assert touched.sum() > 1000
    assert np.all(grid.elevation[touched] == 0.0)
    assert np.all(grid.occupancy[touched] == 0.0)
    occ = occupancy_costmap(grid)
    assert np.all(occ[touched] == FREE) and np.all(occ[~touched] == UNKNOWN)


def test_hand_computed_cell():
    grid = LocalElevationGrid(center_utm=(0, 0))
    grid.insert(np.array([[0.1, 0.1, h] for h in (0, 0, 0, 0, 2.0)]))
    ij = grid.cell_index(0.1, 0.1)
    c = (ij[1], ij[0])
    assert grid.mean[c] == pytest.approx(0.4)
    assert grid.std[c] == pytest.approx(0.8)
    assert grid.elevation[c] == 0.0
    assert grid.occupancy[c] == pytest.approx(0.2)
    assert occupancy_costmap(grid, 0.15)[c] == OCCUPIED
    assert occupancy_costmap(grid, 0.25)[c] == FREE


def test_grid_centred_ahead_and_scrolls():
    grid = LocalElevationGrid()
    pose = Pose([0, 0, 0], yaw=0.0)
    scan = np.array([[x, y, 0.0] for x in np.arange(0, 30, 0.5) for y in np.arange(-5, 5, 0.5)])
    update_local_grid(grid, scan, pose, voxel_size=0.01)
    assert grid.center_utm == pytest.approx((15.0, 0.0))
    kept = grid.cell_index(19.9, 0.1)
    before = grid.count[kept[1], kept[0]]
    update_local_grid(grid, np.zeros((0, 3)), Pose([20, 0, 0]), voxel_size=0.01)
    assert grid.center_utm == pytest.approx((35.0, 0.0))
    assert grid.cell_index(1.0, 0.0) is None  # trailing cells dropped
    moved = grid.cell_index(19.9, 0.1)
    assert grid.count[moved[1], moved[0]] == before  # stats preserved
    lead = grid.cell_index(50.0, 0.0)
    assert grid.count[lead[1], lead[0]] == 0  # leading cells empty


def test_range_filter_and_voxel_centroid():
    pts = np.array([[0.01, 0.01, 0.0], [0.03, 0.03, 0.1], [100, 0, 0]])
    out = voxel_downsample(pts[:2], 0.2)
    assert np.allclose(out, [[0.02, 0.02, 0.05]])
    grid = LocalElevationGrid(center_utm=(0, 0), lookahead=0.0)
    update_local_grid(grid, pts, Pose([0, 0, 0]), range_limit=50, voxel_size=0.2)
    assert grid.count.sum() == 1


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=60), st.randoms(), st.integers(1, 6))
def test_recursive_stats_equal_batch(heights, rnd, chunks):
    order = list(range(len(heights)))
    rnd.shuffle(order)
    h = np.array(heights)[order]
    grid = LocalElevationGrid(center_utm=(0, 0), lookahead=0.0)
    for part in np.array_split(h, chunks):
        grid.insert(np.column_stack([np.full(len(part), 0.1), np.full(len(part), 0.1), part]))
    ix, iy = grid.cell_index(0.1, 0.1)
    assert grid.count[iy, ix] == len(h)
    assert grid.mean[iy, ix] == pytest.approx(np.mean(h), rel=1e-9, abs=1e-9)
    assert grid.std[iy, ix] == pytest.approx(np.std(h), rel=1e-9, abs=1e-9)
    e = grid.elevation[iy, ix]
    assert min(h) - 1e-12 <= e <= np.mean(h) + 1e-9


def test_gaussian_fraction_above_ground(rng):
    z = rng.normal(3.0, 0.7, 10_000)
    grid = LocalElevationGrid(center_utm=(0, 0), lookahead=0.0)
    grid.insert(np.column_stack([np.full(z.size, 0.2), np.full(z.size, 0.2), z]))
    ix, iy = grid.cell_index(0.2, 0.2)
    frac = np.mean(z > grid.elevation[iy, ix])
    assert norm.cdf(1.0) == pytest.approx(0.841, abs=5e-4)
    assert frac == pytest.approx(norm.cdf(1.0), abs=0.02)


def test_overlay_marks_occupied_cells():
    cm = CostMapGlobal.uniform(100, 100, 0.5)
    grid = LocalElevationGrid(center_utm=(25, 25))
    grid.insert(np.array([[20.1, 20.1, h] for h in (0, 0, 0, 0, 2.0)]))
    over = overlay_local(cm, grid)
    assert math.isinf(over.cost[40, 40]) and over.navigable.sum() == cm.navigable.sum() - 1
    assert cm.navigable.all()  # input untouched
