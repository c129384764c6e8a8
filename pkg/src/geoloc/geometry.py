"""Camera models, sensor-pod layout and frame transforms.

Frame conventions
-----------------
camera   x right, y down, z forward along the optical axis (rectified pinhole)
vehicle  x forward, y left, z up
global   UTM-like flat Cartesian frame: x easting, y northing, z altitude

Yaw angles are measured counter-clockwise from +x (east for poses, vehicle
forward for module offsets).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    pass


class BehindCameraError(ValueError):
    pass


class InvalidDepthError(ValueError):
    pass


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Body-to-world rotation, Z-Y-X (yaw, then pitch, then roll) convention."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return bool(np.allclose(R.T @ R, np.eye(3), atol=tol) and abs(np.linalg.det(R) - 1.0) < tol)


# camera axes expressed in the vehicle frame for a forward-looking camera
CAMERA_TO_FORWARD = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class CameraIntrinsics:
    width_px: int
    height_px: int
    hfov_rad: float
    vfov_rad: float
    principal_point: tuple[float, float] | None = None

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ConfigurationError("image dimensions must be positive")
        for name in ("hfov_rad", "vfov_rad"):
            v = getattr(self, name)
            if not 0.0 < v < math.pi:
                raise ConfigurationError(f"{name} must lie in (0, pi), got {v}")
        if self.principal_point is None:
            object.__setattr__(self, "principal_point", (self.width_px / 2.0, self.height_px / 2.0))
        cx, cy = self.principal_point
        if not (0.0 <= cx <= self.width_px and 0.0 <= cy <= self.height_px):
            raise ConfigurationError("principal point lies outside the image")

    @property
    def focal_px(self) -> float:
        return self.width_px / (2.0 * math.tan(self.hfov_rad / 2.0))

    @property
    def pixels(self) -> int:
        return self.width_px * self.height_px

    def contains(self, u: float, v: float) -> bool:
        return 0.0 <= u <= self.width_px and 0.0 <= v <= self.height_px

    @classmethod
    def from_focal(cls, width_px: int, height_px: int, focal_px: float, vfov_rad: float | None = None):
        hfov = 2.0 * math.atan(width_px / (2.0 * focal_px))
        if vfov_rad is None:
            vfov_rad = 2.0 * math.atan(height_px / (2.0 * focal_px))
        return cls(width_px, height_px, hfov, vfov_rad)


@dataclass(frozen=True)
class Extrinsics:
    """Camera frame relative to the vehicle frame: p_vehicle = R p_cam + t."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not is_rotation(R):
            raise ConfigurationError("extrinsic rotation is not a proper rotation")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def to_vehicle(self, p_cam) -> np.ndarray:
        return np.asarray(p_cam, dtype=float) @ self.rotation.T + self.translation

    def to_camera(self, p_vehicle) -> np.ndarray:
        return (np.asarray(p_vehicle, dtype=float) - self.translation) @ self.rotation


@dataclass(frozen=True)
class Pose:
    position_utm: np.ndarray
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position_utm", np.asarray(self.position_utm, dtype=float).reshape(3))

    @property
    def rotation(self) -> np.ndarray:
        return rpy_to_matrix(self.roll, self.pitch, self.yaw)

    def to_global(self, p_vehicle) -> np.ndarray:
        return np.asarray(p_vehicle, dtype=float) @ self.rotation.T + self.position_utm

    def to_vehicle(self, p_utm) -> np.ndarray:
        return (np.asarray(p_utm, dtype=float) - self.position_utm) @ self.rotation


@dataclass(frozen=True)
class PodConfig:
    """Side-by-side camera modules sharing one mount.

    Module 0 is the right-most module (most negative yaw offset). Mount
    height and pitch are not given for the real pod; the defaults place the
    optical centres 2 m above the vehicle origin, looking level.
    """

    modules: tuple[tuple[CameraIntrinsics, float], ...]
    overlap_rad: float
    total_hfov_rad: float
    mount_xyz: tuple[float, float, float] = (0.0, 0.0, 2.0)
    mount_pitch_rad: float = 0.0
    # (name, width_px, height_px) for every physical camera in one module;
    # only used for pixel-throughput accounting
    module_sensors: tuple[tuple[str, int, int], ...] = ()

    def __len__(self):
        return len(self.modules)

    def intrinsics(self, i: int) -> CameraIntrinsics:
        return self.modules[i][0]

    def yaw_offset(self, i: int) -> float:
        return self.modules[i][1]

    def extrinsics(self, i: int) -> Extrinsics:
        R = rot_z(self.yaw_offset(i)) @ rot_y(self.mount_pitch_rad) @ CAMERA_TO_FORWARD
        return Extrinsics(R, np.array(self.mount_xyz, dtype=float))

    def angular_interval(self, i: int) -> tuple[float, float]:
        half = self.intrinsics(i).hfov_rad / 2.0
        yaw = self.yaw_offset(i)
        return yaw - half, yaw + half


def make_pod(
    module_count: int,
    module_hfov: float,
    overlap: float,
    module_intrinsics: CameraIntrinsics | None = None,
    **mount,
) -> PodConfig:
    if module_count < 1:
        raise ConfigurationError("module_count must be >= 1")
    if not 0.0 <= overlap < module_hfov:
        raise ConfigurationError("overlap must satisfy 0 <= overlap < module_hfov")
    if module_intrinsics is None:
        module_intrinsics = CameraIntrinsics(4096, 3000, module_hfov, math.radians(36.0))
    elif abs(module_intrinsics.hfov_rad - module_hfov) > 1e-12:
        raise ConfigurationError("module_intrinsics.hfov_rad disagrees with module_hfov")
    total = module_count * module_hfov - (module_count - 1) * overlap
    if total > 2.0 * math.pi + 1e-12:
        raise ConfigurationError(f"total horizontal FOV {math.degrees(total):.1f} deg exceeds 360 deg")
    step = module_hfov - overlap
    offsets = [(i - (module_count - 1) / 2.0) * step for i in range(module_count)]
    modules = tuple((module_intrinsics, off) for off in offsets)
    return PodConfig(modules=modules, overlap_rad=overlap, total_hfov_rad=total, **mount)


def ugv_pod(**mount) -> PodConfig:
    """Five-module ground-vehicle pod: 48 deg modules with 12 deg overlap."""
    intr = CameraIntrinsics(4096, 3000, math.radians(48.0), math.radians(36.0))
    sensors = (("nir_top", 4096, 3000), ("thermal", 640, 480), ("rgb", 4096, 3000), ("nir_bottom", 4096, 3000))
    return make_pod(5, intr.hfov_rad, math.radians(12.0), intr, module_sensors=sensors, **mount)


def uav_pod(pitch_deg: float = 45.0) -> PodConfig:
    """Single downward-tilted RGB module of the aerial pod."""
    intr = CameraIntrinsics(2048, 1536, math.radians(60.0), math.radians(45.0))
    sensors = (("rgb", 2048, 1536), ("nir", 2048, 1536))
    return make_pod(1, intr.hfov_rad, 0.0, intr, mount_xyz=(0.0, 0.0, 0.0),
                    mount_pitch_rad=math.radians(pitch_deg), module_sensors=sensors)


def project(point_camera, intr: CameraIntrinsics) -> tuple[np.ndarray, bool]:
    """Pinhole projection. Returns ``(pixel, in_frame)``."""
    x, y, z = (float(c) for c in np.asarray(point_camera, dtype=float).reshape(3))
    if z <= 0.0:
        raise BehindCameraError(f"point has non-positive depth z={z}")
    f = intr.focal_px
    cx, cy = intr.principal_point
    u = cx + f * x / z
    v = cy + f * y / z
    return np.array([u, v]), intr.contains(u, v)


def project_many(points_camera: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Vectorised projection of (N, 3) points with z > 0; no frame check."""
    P = np.asarray(points_camera, dtype=float)
    f = intr.focal_px
    cx, cy = intr.principal_point
    return np.column_stack([cx + f * P[:, 0] / P[:, 2], cy + f * P[:, 1] / P[:, 2]])


def backproject(pixel, depth: float, intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame point at z-depth ``depth`` along the ray through ``pixel``."""
    if not depth > 0.0:
        raise InvalidDepthError(f"depth must be positive, got {depth}")
    u, v = (float(c) for c in np.asarray(pixel, dtype=float).reshape(2))
    if not intr.contains(u, v):
        raise ValueError(f"pixel ({u}, {v}) lies outside the image")
    f = intr.focal_px
    cx, cy = intr.principal_point
    return np.array([(u - cx) / f * depth, (v - cy) / f * depth, depth])


def pixel_ray(pixel, intr: CameraIntrinsics) -> np.ndarray:
    """Unit ray direction in the camera frame."""
    d = backproject(pixel, 1.0, intr)
    return d / np.linalg.norm(d)


def camera_to_global(point_camera, extr: Extrinsics, pose: Pose) -> np.ndarray:
    return pose.to_global(extr.to_vehicle(point_camera))


def global_to_camera(point_utm, extr: Extrinsics, pose: Pose) -> np.ndarray:
    return extr.to_camera(pose.to_vehicle(point_utm))


def visible_modules(target_utm, pose: Pose, pod: PodConfig, max_range: float) -> list[int]:
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    out = []
    for i in range(len(pod)):
        p = global_to_camera(target_utm, pod.extrinsics(i), pose)
        x, y, z = p
        if z <= 0.0 or np.linalg.norm(p) > max_range:
            continue
        intr = pod.intrinsics(i)
        if abs(math.atan2(x, z)) <= intr.hfov_rad / 2.0 and abs(math.atan2(y, z)) <= intr.vfov_rad / 2.0:
            out.append(i)
    return out
