"""2D detection + stereo points -> 3D contact with range-scaled covariance."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, Extrinsics, Pose, backproject, camera_to_global


class ClassLabel(enum.IntEnum):
    PERSON = 0
    E_GATOR = 1
    PICKUP_TRUCK = 2


class DepthSource(enum.Enum):
    STEREO_MEDIAN = "stereo_median"
    DEFAULT_DEPTH = "default_depth"
    TERRAIN_RAY = "terrain_ray"  # aerial: pixel ray intersected with the terrain model


class DegenerateObservationError(ValueError):
    pass


@dataclass(frozen=True)
class Detection2D:
    bbox: tuple[float, float, float, float]
    class_label: ClassLabel
    confidence: float = 1.0
    module_index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox
        if not (u0 < u1 and v0 < v1):
            raise ValueError(f"degenerate bbox {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        object.__setattr__(self, "class_label", ClassLabel(self.class_label))

    @property
    def center(self) -> np.ndarray:
        u0, v0, u1, v1 = self.bbox
        return np.array([(u0 + u1) / 2.0, (v0 + v1) / 2.0])

    def within(self, intr: CameraIntrinsics) -> bool:
        u0, v0, u1, v1 = self.bbox
        return u0 >= 0 and v0 >= 0 and u1 <= intr.width_px and v1 <= intr.height_px


@dataclass(frozen=True)
class PointCloudCam:
    """Stereo points in one module's camera frame with their image pixels."""

    points: np.ndarray
    pixels: np.ndarray
    module_index: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        px = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        if len(pts) != len(px):
            raise ValueError("points and pixels must have equal length")
        if len(pts) and np.any(pts[:, 2] <= 0):
            raise ValueError("stereo points must have positive depth")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "pixels", px)

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls, module_index: int = 0) -> PointCloudCam:
        return cls(np.zeros((0, 3)), np.zeros((0, 2)), module_index)


@dataclass(frozen=True)
class DepthPolicy:
    min_points: int = 10
    max_reliable_range: float = 150.0
    default_depth: float = 75.0

    def __post_init__(self):
        if self.min_points < 1:
            raise ValueError("min_points must be >= 1")
        if not 0.0 < self.default_depth <= self.max_reliable_range:
            raise ValueError("need 0 < default_depth <= max_reliable_range")


@dataclass(frozen=True)
class CovarianceParams:
    k_range: float = 4e-3
    k_bearing: float = 1e-4

    def __post_init__(self):
        if not self.k_range > self.k_bearing > 0.0:
            raise ValueError("need k_range > k_bearing > 0")


@dataclass(frozen=True)
class Contact:
    position_utm: np.ndarray
    covariance_utm: np.ndarray
    class_label: ClassLabel
    confidence: float
    source_robot: int
    timestamp: float
    depth_source: DepthSource = DepthSource.STEREO_MEDIAN

    def __post_init__(self):
        object.__setattr__(self, "position_utm", np.asarray(self.position_utm, dtype=float).reshape(3))
        object.__setattr__(self, "covariance_utm", np.asarray(self.covariance_utm, dtype=float).reshape(3, 3))
        object.__setattr__(self, "class_label", ClassLabel(self.class_label))


def lower_median(values: np.ndarray) -> float:
    """Lower-middle element; deterministic for even counts."""
    s = np.sort(np.asarray(values, dtype=float))
    return float(s[(len(s) - 1) // 2])


def bbox_depth(det: Detection2D, cloud: PointCloudCam, policy: DepthPolicy) -> tuple[float, DepthSource]:
    if len(cloud):
        u0, v0, u1, v1 = det.bbox
        px = cloud.pixels
        inside = (px[:, 0] >= u0) & (px[:, 0] <= u1) & (px[:, 1] >= v0) & (px[:, 1] <= v1)
        depths = cloud.points[inside, 2]
        if len(depths) >= policy.min_points:
            d = lower_median(depths)
            if d <= policy.max_reliable_range:
                return d, DepthSource.STEREO_MEDIAN
    return policy.default_depth, DepthSource.DEFAULT_DEPTH


def orthonormal_frame(axis: np.ndarray) -> np.ndarray:
    """Rotation matrix whose first column is ``axis`` (unit)."""
    a = np.asarray(axis, dtype=float)
    helper = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    b = np.cross(helper, a)
    b /= np.linalg.norm(b)
    c = np.cross(a, b)
    return np.column_stack([a, b, c])


def bearing_covariance(range_m: float, bearing_unit_utm, params: CovarianceParams) -> np.ndarray:
    if not range_m > 0.0:
        raise DegenerateObservationError(f"range must be positive, got {range_m}")
    b = np.asarray(bearing_unit_utm, dtype=float).reshape(3)
    if abs(np.linalg.norm(b) - 1.0) > 1e-9:
        raise ValueError("bearing must be a unit vector")
    r2 = range_m * range_m
    R = orthonormal_frame(b)
    D = np.diag([params.k_range * r2, params.k_bearing * r2, params.k_bearing * r2])
    S = R @ D @ R.T
    return (S + S.T) / 2.0


def contact_from_point(
    position_utm,
    observer_utm,
    class_label,
    params: CovarianceParams,
    *,
    confidence: float = 1.0,
    source_robot: int = 0,
    timestamp: float = 0.0,
    depth_source: DepthSource = DepthSource.STEREO_MEDIAN,
) -> Contact:
    p = np.asarray(position_utm, dtype=float)
    ray = p - np.asarray(observer_utm, dtype=float)
    rng = float(np.linalg.norm(ray))
    if rng == 0.0:
        raise DegenerateObservationError("object coincides with the observer")
    cov = bearing_covariance(rng, ray / rng, params)
    return Contact(p, cov, class_label, confidence, source_robot, timestamp, depth_source)


def make_contact(
    det: Detection2D,
    cloud: PointCloudCam,
    intr: CameraIntrinsics,
    extr: Extrinsics,
    pose: Pose,
    policy: DepthPolicy,
    params: CovarianceParams,
    source_robot: int = 0,
) -> Contact:
    depth, source = bbox_depth(det, cloud, policy)
    p_cam = backproject(det.center, depth, intr)
    p_utm = camera_to_global(p_cam, extr, pose)
    return contact_from_point(
        p_utm, pose.position_utm, det.class_label, params,
        confidence=det.confidence, source_robot=source_robot,
        timestamp=det.timestamp, depth_source=source,
    )
