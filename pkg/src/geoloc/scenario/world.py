from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from ..fusion import ClassLabel

# (footprint radius, height) in metres
OBJECT_SIZES = {
    ClassLabel.PERSON: (0.3, 1.8),
    ClassLabel.E_GATOR: (0.8, 1.9),
    ClassLabel.PICKUP_TRUCK: (1.0, 1.9),
}


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class WorldObject:
    class_label: ClassLabel
    position_utm: np.ndarray  # base point, on the terrain surface
    radius: float
    height: float

    @property
    def center_utm(self) -> np.ndarray:
        return self.position_utm + np.array([0.0, 0.0, self.height / 2.0])


@dataclass(frozen=True)
class RoughPatch:
    center: tuple[float, float]
    radius: float
    amplitude: float = 0.6

    def contains(self, x, y) -> np.ndarray:
        return (np.asarray(x) - self.center[0]) ** 2 + (np.asarray(y) - self.center[1]) ** 2 <= self.radius ** 2


@dataclass(frozen=True)
class WorldSpec:
    size: tuple[float, float] = (160.0, 160.0)
    resolution: float = 0.5
    base_amplitude: float = 0.0  # metres, peak of the smooth undulation
    base_scale: float = 25.0  # metres, correlation length of the undulation
    rough_patches: tuple[RoughPatch, ...] = ()
    objects: tuple[tuple[str, tuple[float, float]], ...] = ()
    random_objects: int = 0
    min_spacing: float = 20.0
    classes: tuple[str, ...] = ("person", "e_gator", "pickup_truck")

    def __post_init__(self):
        if min(self.size) <= 0 or self.resolution <= 0:
            raise ValueError("world dimensions must be positive")


@dataclass
class World:
    heightfield: np.ndarray  # (ny, nx), node (i, j) sits at (j * res, i * res)
    resolution: float
    objects: list[WorldObject] = field(default_factory=list)
    rough_patches: tuple[RoughPatch, ...] = ()
    seed: int = 0

    @property
    def extent(self) -> tuple[float, float]:
        ny, nx = self.heightfield.shape
        return (nx - 1) * self.resolution, (ny - 1) * self.resolution

    def height_at(self, x, y):
        """Bilinear terrain height; clamps outside the grid."""
        hf = self.heightfield
        ny, nx = hf.shape
        fx = np.clip(np.asarray(x, dtype=float) / self.resolution, 0.0, nx - 1.000001)
        fy = np.clip(np.asarray(y, dtype=float) / self.resolution, 0.0, ny - 1.000001)
        j0 = np.floor(fx).astype(int)
        i0 = np.floor(fy).astype(int)
        tx, ty = fx - j0, fy - i0
        h = (hf[i0, j0] * (1 - tx) * (1 - ty) + hf[i0, j0 + 1] * tx * (1 - ty)
             + hf[i0 + 1, j0] * (1 - tx) * ty + hf[i0 + 1, j0 + 1] * tx * ty)
        return float(h) if np.ndim(h) == 0 else h

    def occluded(self, p0, p1, step: float = 1.0, margin: float = 0.05) -> bool:
        """True when terrain rises above the segment p0 -> p1 (endpoints excluded)."""
        p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
        d = float(np.linalg.norm(p1 - p0))
        n = int(d / step)
        if n < 2:
            return False
        t = np.linspace(0.0, 1.0, n + 1)[1:-1]
        pts = p0 + t[:, None] * (p1 - p0)
        return bool(np.any(self.height_at(pts[:, 0], pts[:, 1]) > pts[:, 2] + margin))

    def intersect_ray(self, origin, direction, max_range: float = 1000.0, step: float = 0.5) -> np.ndarray | None:
        """First terrain crossing along a ray, refined by bisection."""
        o = np.asarray(origin, float)
        d = np.asarray(direction, float)
        d = d / np.linalg.norm(d)
        s = np.arange(0.0, max_range + step, step)
        pts = o + s[:, None] * d
        below = pts[:, 2] - self.height_at(pts[:, 0], pts[:, 1]) <= 0.0
        if not below.any():
            return None
        k = int(np.argmax(below))
        if k == 0:
            return o.copy()
        lo, hi = s[k - 1], s[k]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            p = o + mid * d
            if p[2] - self.height_at(p[0], p[1]) > 0.0:
                lo = mid
            else:
                hi = mid
        return o + hi * d

    def airborne_cloud(self, spacing: float = 0.5) -> np.ndarray:
        """Gridded terrain samples standing in for an aerial LIDAR survey."""
        ex, ey = self.extent
        xs = np.arange(0.0, ex + 1e-9, spacing)
        ys = np.arange(0.0, ey + 1e-9, spacing)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel(), self.height_at(gx.ravel(), gy.ravel())])


def _make_object(world: World, label, x: float, y: float) -> WorldObject:
    label = ClassLabel[label.upper()] if isinstance(label, str) else ClassLabel(label)
    r, h = OBJECT_SIZES[label]
    return WorldObject(label, np.array([x, y, world.height_at(x, y)]), r, h)


def gen_world(seed: int, spec: WorldSpec) -> World:
    rng = np.random.default_rng([seed, 0x77])
    nx = int(round(spec.size[0] / spec.resolution)) + 1
    ny = int(round(spec.size[1] / spec.resolution)) + 1
    hf = np.zeros((ny, nx))
    if spec.base_amplitude > 0:
        base = gaussian_filter(rng.standard_normal((ny, nx)), spec.base_scale / spec.resolution, mode="wrap")
        hf += spec.base_amplitude * base / max(np.abs(base).max(), 1e-12)
    gy, gx = np.mgrid[0:ny, 0:nx] * spec.resolution
    for patch in spec.rough_patches:
        mask = patch.contains(gx, gy)
        hf[mask] += patch.amplitude * rng.uniform(-1.0, 1.0, int(mask.sum()))
    world = World(hf, spec.resolution, [], tuple(spec.rough_patches), seed)

    for label, (x, y) in spec.objects:
        world.objects.append(_make_object(world, label, x, y))
    margin = 5.0
    placed = [o.position_utm[:2] for o in world.objects]
    for _ in range(spec.random_objects):
        for _attempt in range(2000):
            x = rng.uniform(margin, spec.size[0] - margin)
            y = rng.uniform(margin, spec.size[1] - margin)
            if any(p.contains(x, y) for p in spec.rough_patches):
                continue
            if all(math.hypot(x - q[0], y - q[1]) >= spec.min_spacing for q in placed):
                break
        else:
            raise PlacementError(
                f"cannot place {spec.random_objects} objects {spec.min_spacing} m apart in {spec.size}"
            )
        label = spec.classes[int(rng.integers(len(spec.classes)))]
        world.objects.append(_make_object(world, label, x, y))
        placed.append(np.array([x, y]))
    return world
