"""Terrain roughness cost-map and the scrolling local elevation grid."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose

COST_MIN = 1.0
COST_MAX = 10.0

FREE, OCCUPIED, UNKNOWN = 0, 1, -1


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class RoughnessParams:
    radius: float = 1.5
    threshold: float = 0.15
    min_points: int = 10

    def __post_init__(self):
        if not self.radius > 0 or not self.threshold > 0:
            raise ValueError("radius and threshold must be positive")
        if self.min_points < 3:
            raise ValueError("a plane needs at least 3 points")


def _as_cloud(cloud) -> np.ndarray:
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud contains non-finite coordinates")
    return pts


def plane_roughness(points: np.ndarray) -> float:
    """Mean absolute distance to the total-least-squares plane."""
    c = points - points.mean(axis=0)
    # smallest right-singular vector of the centred scatter is the normal
    normal = np.linalg.svd(c, full_matrices=False)[2][-1]
    return float(np.mean(np.abs(c @ normal)))


def roughness(cloud, center, params: RoughnessParams) -> float:
    pts = _as_cloud(cloud)
    cx, cy = float(center[0]), float(center[1])
    near = pts[(pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 <= params.radius ** 2]
    if len(near) < params.min_points:
        raise InsufficientDataError(f"{len(near)} points within {params.radius} m, need {params.min_points}")
    return plane_roughness(near)


@dataclass
class CostMapGlobal:
    origin_utm: tuple[float, float]
    cell_size: float
    roughness: np.ndarray  # (height, width); NaN where data was insufficient
    cost: np.ndarray  # inf on non-navigable cells

    @property
    def width(self) -> int:
        return self.cost.shape[1]

    @property
    def height(self) -> int:
        return self.cost.shape[0]

    @property
    def navigable(self) -> np.ndarray:
        return np.isfinite(self.cost)

    @property
    def known(self) -> np.ndarray:
        return np.isfinite(self.roughness)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor((x - self.origin_utm[0]) / self.cell_size)),
                int(math.floor((y - self.origin_utm[1]) / self.cell_size)))

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin_utm[0] + (ix + 0.5) * self.cell_size,
                self.origin_utm[1] + (iy + 0.5) * self.cell_size)

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_navigable(self, x: float, y: float) -> bool:
        ix, iy = self.cell_of(x, y)
        return self.in_bounds(ix, iy) and bool(np.isfinite(self.cost[iy, ix]))

    @classmethod
    def uniform(cls, width: int, height: int, cell_size: float = 0.5, cost: float = COST_MIN,
                origin=(0.0, 0.0)) -> CostMapGlobal:
        c = np.full((height, width), float(cost))
        r = np.where(np.isfinite(c), 0.0, np.nan)
        return cls((float(origin[0]), float(origin[1])), cell_size, r, c)


def cost_from_roughness(r: np.ndarray, threshold: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    nav = np.isfinite(r) & (r < threshold)
    out = np.full(r.shape, np.inf)
    out[nav] = COST_MIN + (COST_MAX - COST_MIN) * r[nav] / threshold
    return out


def build_global_costmap(
    cloud,
    params: RoughnessParams = RoughnessParams(),
    cell_size: float = 0.5,
    origin: tuple[float, float] | None = None,
    shape: tuple[int, int] | None = None,
) -> CostMapGlobal:
    """Per-cell roughness at cell centres, thresholded into a cost grid.

    ``shape`` is ``(height, width)``. Without ``origin``/``shape`` the grid
    covers the cloud's horizontal extent snapped to the cell size.
    """
    pts = _as_cloud(cloud)
    if len(pts) == 0:
        raise ValueError("empty point cloud")
    if origin is None:
        origin = (math.floor(pts[:, 0].min() / cell_size) * cell_size,
                  math.floor(pts[:, 1].min() / cell_size) * cell_size)
    if shape is None:
        shape = (max(1, math.ceil((pts[:, 1].max() - origin[1]) / cell_size)),
                 max(1, math.ceil((pts[:, 0].max() - origin[0]) / cell_size)))
    h, w = shape
    xs = origin[0] + (np.arange(w) + 0.5) * cell_size
    ys = origin[1] + (np.arange(h) + 0.5) * cell_size
    gx, gy = np.meshgrid(xs, ys)
    centers = np.column_stack([gx.ravel(), gy.ravel()])

    tree = cKDTree(pts[:, :2])
    neigh = tree.query_ball_point(centers, params.radius, workers=-1)
    counts = np.fromiter((len(n) for n in neigh), dtype=np.int64, count=len(neigh))
    rough = np.full(len(centers), np.nan)
    ok = counts >= params.min_points
    if ok.any():
        idx_ok = np.flatnonzero(ok)
        flat = np.concatenate([np.asarray(neigh[i], dtype=np.int64) for i in idx_ok])
        owner = np.repeat(np.arange(len(idx_ok)), counts[idx_ok])
        n = counts[idx_ok].astype(float)
        P = pts[flat]
        mean = np.column_stack([np.bincount(owner, P[:, k], len(idx_ok)) for k in range(3)]) / n[:, None]
        C = P - mean[owner]
        scatter = np.empty((len(idx_ok), 3, 3))
        for a in range(3):
            for b in range(a, 3):
                s = np.bincount(owner, C[:, a] * C[:, b], len(idx_ok))
                scatter[:, a, b] = s
                scatter[:, b, a] = s
        normals = np.linalg.eigh(scatter)[1][:, :, 0]
        dist = np.abs(np.einsum("ij,ij->i", C, normals[owner]))
        rough[idx_ok] = np.bincount(owner, dist, len(idx_ok)) / n
    rough = rough.reshape(h, w)
    return CostMapGlobal((float(origin[0]), float(origin[1])), cell_size, rough,
                         cost_from_roughness(rough, params.threshold))


# --- run-time local grid ----------------------------------------------------

@dataclass
class LocalElevationGrid:
    """Fixed-size window of world-aligned cells that scrolls with the vehicle.

    Cell statistics are kept per cell with Chan/Welford merges; the raw
    voxel heights are retained per cell only to count points above ground.
    """

    cell_size: float = 0.5
    size_cells: int = 80
    lookahead: float = 15.0
    clearance: float = 0.3
    center_utm: tuple[float, float] = (0.0, 0.0)
    # index of the window's lower-left cell in the world cell lattice
    corner: tuple[int, int] = (0, 0)
    count: np.ndarray = field(default=None)
    mean: np.ndarray = field(default=None)
    m2: np.ndarray = field(default=None)
    min_height: np.ndarray = field(default=None)
    _heights: np.ndarray = field(default=None, repr=False)
    _hx: np.ndarray = field(default=None, repr=False)
    _hy: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.size_cells
        if self.count is None:
            self.count = np.zeros((n, n), dtype=np.int64)
            self.mean = np.zeros((n, n))
            self.m2 = np.zeros((n, n))
            self.min_height = np.full((n, n), np.inf)
        if self._heights is None:
            self._heights = np.zeros(0)
            self._hx = np.zeros(0, dtype=np.int64)
            self._hy = np.zeros(0, dtype=np.int64)
        self.recenter(self.center_utm)

    @property
    def std(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 0, np.sqrt(self.m2 / np.maximum(self.count, 1)), 0.0)

    @property
    def elevation(self) -> np.ndarray:
        e = np.maximum(self.mean - self.std, self.min_height)
        return np.where(self.count > 0, e, np.nan)

    @property
    def occupancy(self) -> np.ndarray:
        occ = np.zeros(self.count.shape)
        if len(self._heights):
            ix = self._hx - self.corner[0]
            iy = self._hy - self.corner[1]
            elev = self.elevation[iy, ix]
            above = self._heights > elev + self.clearance
            occ = np.bincount(iy * self.size_cells + ix, above.astype(float),
                              self.size_cells ** 2).reshape(self.count.shape)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 0, occ / np.maximum(self.count, 1), 0.0)

    def world_cell(self, x, y):
        return (np.floor(np.asarray(x) / self.cell_size).astype(np.int64),
                np.floor(np.asarray(y) / self.cell_size).astype(np.int64))

    def recenter(self, center_utm) -> None:
        n = self.size_cells
        cx, cy = self.world_cell(center_utm[0], center_utm[1])
        new_corner = (int(cx) - n // 2, int(cy) - n // 2)
        dx, dy = new_corner[0] - self.corner[0], new_corner[1] - self.corner[1]
        self.center_utm = (float(center_utm[0]), float(center_utm[1]))
        if dx == 0 and dy == 0:
            return
        for name, fill in (("count", 0), ("mean", 0.0), ("m2", 0.0), ("min_height", np.inf)):
            old = getattr(self, name)
            new = np.full_like(old, fill)
            xs, xd = max(0, dx), max(0, -dx)
            ys, yd = max(0, dy), max(0, -dy)
            w, h = n - abs(dx), n - abs(dy)
            if w > 0 and h > 0:
                new[yd:yd + h, xd:xd + w] = old[ys:ys + h, xs:xs + w]
            setattr(self, name, new)
        self.corner = new_corner
        keep = ((self._hx >= new_corner[0]) & (self._hx < new_corner[0] + n)
                & (self._hy >= new_corner[1]) & (self._hy < new_corner[1] + n))
        self._heights, self._hx, self._hy = self._heights[keep], self._hx[keep], self._hy[keep]

    def insert(self, points) -> None:
        """Merge world-frame points into the per-cell statistics."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return
        n = self.size_cells
        wx, wy = self.world_cell(pts[:, 0], pts[:, 1])
        ix, iy = wx - self.corner[0], wy - self.corner[1]
        inside = (ix >= 0) & (ix < n) & (iy >= 0) & (iy < n)
        pts, ix, iy, wx, wy = pts[inside], ix[inside], iy[inside], wx[inside], wy[inside]
        if len(pts) == 0:
            return
        flat = iy * n + ix
        z = pts[:, 2]
        cells, inv = np.unique(flat, return_inverse=True)
        nb = np.bincount(inv).astype(float)
        mb = np.bincount(inv, z) / nb
        m2b = np.bincount(inv, (z - mb[inv]) ** 2)
        minb = np.full(len(cells), np.inf)
        np.minimum.at(minb, inv, z)
        r, c = np.divmod(cells, n)
        na = self.count[r, c].astype(float)
        ma = self.mean[r, c]
        tot = na + nb
        delta = mb - ma
        self.mean[r, c] = ma + delta * nb / tot
        self.m2[r, c] = self.m2[r, c] + m2b + delta ** 2 * na * nb / tot
        self.count[r, c] = tot.astype(np.int64)
        self.min_height[r, c] = np.minimum(self.min_height[r, c], minb)
        self._heights = np.concatenate([self._heights, z])
        self._hx = np.concatenate([self._hx, wx])
        self._hy = np.concatenate([self._hy, wy])

    def cell_index(self, x: float, y: float) -> tuple[int, int] | None:
        wx, wy = self.world_cell(x, y)
        ix, iy = int(wx) - self.corner[0], int(wy) - self.corner[1]
        if 0 <= ix < self.size_cells and 0 <= iy < self.size_cells:
            return ix, iy
        return None


def voxel_downsample(points, voxel_size: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return pts
    keys = np.floor(pts / voxel_size).astype(np.int64)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    n = np.bincount(inv).astype(float)
    return np.column_stack([np.bincount(inv, pts[:, k]) / n for k in range(3)])


def update_local_grid(
    grid: LocalElevationGrid,
    scan,
    vehicle_pose: Pose,
    range_limit: float = 50.0,
    voxel_size: float = 0.2,
) -> LocalElevationGrid:
    """Range-filter, voxelise and merge one scan; scrolls ``grid`` in place."""
    pts = np.asarray(scan, dtype=float).reshape(-1, 3)
    if len(pts):
        pts = pts[np.linalg.norm(pts - vehicle_pose.position_utm, axis=1) <= range_limit]
        pts = voxel_downsample(pts, voxel_size)
    p = vehicle_pose.position_utm
    ahead = (p[0] + grid.lookahead * math.cos(vehicle_pose.yaw), p[1] + grid.lookahead * math.sin(vehicle_pose.yaw))
    grid.recenter(ahead)
    grid.insert(pts)
    return grid


def occupancy_costmap(grid: LocalElevationGrid, obstacle_threshold: float = 0.15) -> np.ndarray:
    out = np.where(grid.occupancy >= obstacle_threshold, OCCUPIED, FREE).astype(np.int8)
    out[grid.count == 0] = UNKNOWN
    return out


def overlay_local(costmap: CostMapGlobal, grid: LocalElevationGrid,
                  obstacle_threshold: float = 0.15) -> CostMapGlobal:
    """Copy of ``costmap`` with locally occupied cells marked non-navigable.

    Requires both grids to share the cell size and a cell-aligned origin.
    """
    if abs(costmap.cell_size - grid.cell_size) > 1e-12:
        raise ValueError("cell sizes differ")
    off = np.array(costmap.origin_utm) / costmap.cell_size
    if np.any(np.abs(off - np.round(off)) > 1e-9):
        raise ValueError("cost-map origin is not aligned with the cell lattice")
    occ_iy, occ_ix = np.nonzero(occupancy_costmap(grid, obstacle_threshold) == OCCUPIED)
    gx = occ_ix + grid.corner[0] - int(round(off[0]))
    gy = occ_iy + grid.corner[1] - int(round(off[1]))
    keep = (gx >= 0) & (gx < costmap.width) & (gy >= 0) & (gy < costmap.height)
    cost = costmap.cost.copy()
    cost[gy[keep], gx[keep]] = np.inf
    return CostMapGlobal(costmap.origin_utm, costmap.cell_size, costmap.roughness, cost)
