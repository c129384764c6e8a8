"""Parametric stand-ins for the detector, stereo depth, pose and LIDAR."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..fusion import ClassLabel, Detection2D, PointCloudCam
from ..geometry import PodConfig, Pose, global_to_camera, project_many, visible_modules
from .world import World

POSE_RATE = 50.0


@dataclass(frozen=True)
class SensingModel:
    # piecewise-linear detection probability over range, as (range_m, p) knots
    p_detect_knots: tuple[tuple[float, float], ...] = ((0.0, 1.0), (80.0, 1.0), (250.0, 0.0))
    max_range: float = 150.0
    clutter_rate: float = 0.0  # false positives per frame per module
    bbox_noise_px: float = 0.0
    stereo_baseline: float = 0.2
    disparity_noise_px: float = 0.5
    stereo_focal_px: float | None = None  # defaults to the module focal length
    object_stereo_points: int = 40
    terrain_stereo_points: int = 300
    pose_sigma_pos: float = 0.02
    pose_sigma_heading: float = math.radians(0.2)
    capture_rate: float = 4.0

    def __post_init__(self):
        ps = [p for _, p in self.p_detect_knots]
        if any(not 0.0 <= p <= 1.0 for p in ps):
            raise ValueError("detection probabilities must lie in [0, 1]")
        if not self.stereo_baseline > 0 or not self.capture_rate > 0:
            raise ValueError("baseline and capture rate must be positive")
        if self.clutter_rate < 0 or self.bbox_noise_px < 0 or self.disparity_noise_px < 0:
            raise ValueError("noise parameters must be non-negative")

    def p_detect(self, range_m: float) -> float:
        r, p = zip(*self.p_detect_knots)
        return float(np.interp(range_m, r, p))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def billboard_bbox(center_cam: np.ndarray, radius: float, height: float, intr) -> tuple[float, float, float, float]:
    """Image box of a camera-facing rectangle (2r wide, h tall) at the object centre."""
    f = intr.focal_px
    cx, cy = intr.principal_point
    x, y, z = center_cam
    hw, hh = f * radius / z, f * (height / 2.0) / z
    u, v = cx + f * x / z, cy + f * y / z
    return u - hw, v - hh, u + hw, v + hh


def footprint_bbox(base_cam: np.ndarray, radius: float, intr) -> tuple[float, float, float, float]:
    """Square image box around the projected ground contact point."""
    f = intr.focal_px
    cx, cy = intr.principal_point
    x, y, z = base_cam
    hw = f * radius / z
    u, v = cx + f * x / z, cy + f * y / z
    return u - hw, v - hw, u + hw, v + hw


def simulate_detector(pose: Pose, pod: PodConfig, world: World, model: SensingModel, seed, t: float,
                      anchor: str = "center") -> list[Detection2D]:
    """Noisy boxes for visible objects plus Poisson clutter.

    ``anchor="center"`` boxes the upright silhouette around the object
    centre (ground view); ``anchor="base"`` boxes the footprint around the
    ground contact point (aerial view).
    """
    if anchor not in ("center", "base"):
        raise ValueError(f"unknown anchor {anchor!r}")
    rng = _rng(seed)
    dets = []
    labels = list(ClassLabel)
    for obj in world.objects:
        center = obj.center_utm
        mods = visible_modules(center, pose, pod, model.max_range)
        for m in mods:
            extr = pod.extrinsics(m)
            intr = pod.intrinsics(m)
            cam_w = pose.to_global(extr.translation)
            u_det, u_noise = rng.random(), rng.standard_normal(4)
            p_cam = global_to_camera(center, extr, pose)
            if world.occluded(cam_w, center):
                continue
            if u_det >= model.p_detect(float(np.linalg.norm(p_cam))):
                continue
            if anchor == "center":
                u0, v0, u1, v1 = billboard_bbox(p_cam, obj.radius, obj.height, intr)
            else:
                base = global_to_camera(obj.position_utm, extr, pose)
                if base[2] <= 0:
                    continue
                u0, v0, u1, v1 = footprint_bbox(base, obj.radius, intr)
            if u0 < 0 or v0 < 0 or u1 > intr.width_px or v1 > intr.height_px:
                continue  # truncated at the frame edge; the neighbour module sees it whole
            box = np.array([u0, v0, u1, v1]) + model.bbox_noise_px * u_noise
            box = np.clip(box, 0.0, [intr.width_px, intr.height_px, intr.width_px, intr.height_px])
            if box[0] >= box[2] or box[1] >= box[3]:
                continue
            dets.append(Detection2D(tuple(float(b) for b in box), obj.class_label,
                                    0.6 + 0.4 * model.p_detect(float(np.linalg.norm(p_cam))), m, t))
    for m in range(len(pod)):
        intr = pod.intrinsics(m)
        for _ in range(int(rng.poisson(model.clutter_rate)) if model.clutter_rate > 0 else 0):
            w, h = rng.uniform(20.0, 300.0, 2)
            u, v = rng.uniform(0.0, intr.width_px), rng.uniform(0.0, intr.height_px)
            box = np.clip([u - w / 2, v - h / 2, u + w / 2, v + h / 2], 0.0,
                          [intr.width_px, intr.height_px, intr.width_px, intr.height_px])
            label = labels[int(rng.integers(len(labels)))]
            dets.append(Detection2D(tuple(float(b) for b in box), label, float(rng.uniform(0.3, 0.7)), m, t))
    return dets


def depth_sigma(z, focal_px: float, baseline: float, disparity_sigma: float):
    """Stereo triangulation depth std-dev: z^2 * sigma_d / (f * b)."""
    return np.asarray(z, dtype=float) ** 2 * disparity_sigma / (focal_px * baseline)


def perturb_depths(points_cam: np.ndarray, focal_px: float, baseline: float, disparity_sigma: float,
                   rng) -> np.ndarray:
    """Slide each point along its own ray by a depth error drawn from the stereo law."""
    rng = _rng(rng)
    P = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    z = P[:, 2]
    z_new = z + depth_sigma(z, focal_px, baseline, disparity_sigma) * rng.standard_normal(len(z))
    out = P * (z_new / z)[:, None]
    return out[z_new > 0]


def simulate_stereo_cloud(pose: Pose, pod: PodConfig, world: World, model: SensingModel, seed) -> list[PointCloudCam]:
    """Per-module stereo points: camera-facing object surfaces plus terrain.

    Terrain samples hidden behind an object's box are removed; terrain
    self-occlusion of terrain samples is not modelled.
    """
    rng = _rng(seed)
    clouds = []
    for m in range(len(pod)):
        extr, intr = pod.extrinsics(m), pod.intrinsics(m)
        f = model.stereo_focal_px or intr.focal_px
        cam_w = pose.to_global(extr.translation)
        chunks = []
        boxes = []
        for obj in world.objects:
            c = global_to_camera(obj.center_utm, extr, pose)
            if c[2] <= 0.5 or np.linalg.norm(c) > model.max_range or world.occluded(cam_w, obj.center_utm):
                continue
            n = model.object_stereo_points
            offs = np.column_stack([rng.uniform(-obj.radius, obj.radius, n),
                                    rng.uniform(-obj.height / 2, obj.height / 2, n), np.zeros(n)])
            chunks.append(c + offs)
            boxes.append((billboard_bbox(c, obj.radius, obj.height, intr), c[2]))

        # terrain samples inside this module's horizontal wedge
        n = model.terrain_stereo_points
        yaw = pose.yaw + pod.yaw_offset(m)
        bearing = yaw + rng.uniform(-intr.hfov_rad / 2, intr.hfov_rad / 2, n)
        rng_m = rng.uniform(3.0, model.max_range, n)
        gx = cam_w[0] + rng_m * np.cos(bearing)
        gy = cam_w[1] + rng_m * np.sin(bearing)
        ground = np.column_stack([gx, gy, world.height_at(gx, gy)])
        gc = global_to_camera(ground, extr, pose)
        gc = gc[gc[:, 2] > 0.5]
        if len(gc) and boxes:
            gp = project_many(gc, intr)
            hidden = np.zeros(len(gc), dtype=bool)
            for (u0, v0, u1, v1), zc in boxes:
                hidden |= (gp[:, 0] >= u0) & (gp[:, 0] <= u1) & (gp[:, 1] >= v0) & (gp[:, 1] <= v1) & (gc[:, 2] > zc)
            gc = gc[~hidden]
        chunks.append(gc)

        pts = np.vstack(chunks) if chunks else np.zeros((0, 3))
        if model.disparity_noise_px > 0 and len(pts):
            pts = perturb_depths(pts, f, model.stereo_baseline, model.disparity_noise_px, rng)
        if len(pts):
            px = project_many(pts, intr)
            keep = (px[:, 0] >= 0) & (px[:, 0] <= intr.width_px) & (px[:, 1] >= 0) & (px[:, 1] <= intr.height_px)
            pts, px = pts[keep], px[keep]
        else:
            px = np.zeros((0, 2))
        clouds.append(PointCloudCam(pts, px, m))
    return clouds


def simulate_pose(true_pose: Pose, model: SensingModel, seed) -> Pose:
    """RTK/INS-grade pose measurement: isotropic position noise, yaw noise."""
    rng = _rng(seed)
    dp = model.pose_sigma_pos * rng.standard_normal(3)
    dyaw = model.pose_sigma_heading * rng.standard_normal()
    return Pose(true_pose.position_utm + dp, true_pose.roll, true_pose.pitch, true_pose.yaw + dyaw,
                true_pose.timestamp)


def pose_stream(true_pose_at, model: SensingModel, seed: int, t0: float, count: int):
    """Measurements at the 50 Hz INS rate; ``true_pose_at(t)`` gives ground truth."""
    for k in range(count):
        t = t0 + k / POSE_RATE
        p = true_pose_at(t)
        meas = simulate_pose(p, model, [seed, k])
        yield Pose(meas.position_utm, meas.roll, meas.pitch, meas.yaw, t)


def simulate_lidar(pose: Pose, world: World, seed, max_range: float = 50.0,
                   n_azimuth: int = 360, n_rings: int = 24) -> np.ndarray:
    """Polar ground returns plus points on the near side of object cylinders."""
    rng = _rng(seed)
    p = pose.position_utm
    az = np.linspace(-math.pi, math.pi, n_azimuth, endpoint=False) + rng.uniform(0, 2 * math.pi / n_azimuth)
    rings = np.geomspace(2.0, max_range, n_rings)
    A, Rr = np.meshgrid(az, rings)
    gx = p[0] + Rr.ravel() * np.cos(A.ravel())
    gy = p[1] + Rr.ravel() * np.sin(A.ravel())
    pts = [np.column_stack([gx, gy, world.height_at(gx, gy)])]
    for obj in world.objects:
        d = obj.position_utm[:2] - p[:2]
        dist = float(np.hypot(*d))
        if dist > max_range or dist < 1e-6:
            continue
        face = math.atan2(-d[1], -d[0])
        ang = face + rng.uniform(-math.pi / 2, math.pi / 2, 60)
        hz = rng.uniform(0.0, obj.height, 60)
        pts.append(np.column_stack([obj.position_utm[0] + obj.radius * np.cos(ang),
                                    obj.position_utm[1] + obj.radius * np.sin(ang),
                                    obj.position_utm[2] + hz]))
    return np.vstack(pts)
