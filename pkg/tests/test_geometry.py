import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoloc.geometry import (
    BehindCameraError,
    CameraIntrinsics,
    ConfigurationError,
    Extrinsics,
    InvalidDepthError,
    Pose,
    backproject,
    camera_to_global,
    global_to_camera,
    is_rotation,
    make_pod,
    project,
    rpy_to_matrix,
    ugv_pod,
    visible_modules,
)

DEG = math.pi / 180
RGB = CameraIntrinsics(4096, 3000, 48 * DEG, 36 * DEG)


def test_focal_length_from_hfov():
    # independent: tan(24 deg) via its series-free definition sin/cos
    f = 4096 / (2 * math.sin(24 * DEG) / math.cos(24 * DEG))
    assert RGB.focal_px == pytest.approx(f, rel=1e-12)
    assert RGB.focal_px == pytest.approx(4599.883, abs=1e-3)


def test_focal_round_trips_through_from_focal():
    intr = CameraIntrinsics.from_focal(4096, 3000, 4603.7)
    assert intr.focal_px == pytest.approx(4603.7, rel=1e-12)


def test_optical_axis_hits_principal_point():
    px, inside = project([0, 0, 10], RGB)
    assert np.allclose(px, RGB.principal_point) and inside


def test_project_offset_point():
    intr = CameraIntrinsics.from_focal(4096, 3000, 4603.7)
    px, inside = project([1, 0, 10], intr)
    assert px == pytest.approx([2508.37, 1500.0], abs=1e-9)
    assert inside
    p = backproject([2508.4, 1500], 10, intr)
    assert p == pytest.approx([1.0, 0.0, 10.0], abs=1e-3)


def test_out_of_frame_flag():
    _, inside = project([10, 0, 1], RGB)
    assert not inside


def test_behind_camera_rejected():
    with pytest.raises(BehindCameraError):
        project([0, 0, 0], RGB)
    with pytest.raises(BehindCameraError):
        project([0, 0, -5], RGB)


def test_backproject_rejects_bad_depth():
    with pytest.raises(InvalidDepthError):
        backproject([100, 100], 0.0, RGB)
    with pytest.raises(InvalidDepthError):
        backproject([100, 100], -1.0, RGB)


def test_backproject_principal_point():
    assert backproject(RGB.principal_point, 10, RGB) == pytest.approx([0, 0, 10])


@given(u=st.floats(0, 4096), v=st.floats(0, 3000), d=st.floats(1, 500))
def test_project_backproject_inverse(u, v, d):
    px, _ = project(backproject([u, v], d, RGB), RGB)
    assert abs(px[0] - u) < 1e-6 and abs(px[1] - v) < 1e-6


def test_round_trip_1000_random_pixels(rng):
    uv = rng.uniform([0, 0], [4096, 3000], (1000, 2))
    d = rng.uniform(1, 500, 1000)
    err = max(np.abs(project(backproject(p, z, RGB), RGB)[0] - p).max() for p, z in zip(uv, d))
    assert err < 1e-6


@pytest.mark.parametrize("n,total", [(5, 192), (1, 48), (2, 84)])
def test_pod_total_fov(n, total):
    pod = make_pod(n, 48 * DEG, 12 * DEG)
    assert pod.total_hfov_rad == pytest.approx(total * DEG, abs=1e-12)


def test_pod_offsets_symmetric_and_spaced():
    pod = make_pod(5, 48 * DEG, 12 * DEG)
    offs = np.array([pod.yaw_offset(i) for i in range(5)])
    assert offs == pytest.approx(-offs[::-1], abs=1e-15)
    assert np.diff(offs) == pytest.approx([36 * DEG] * 4)


@given(n=st.integers(1, 7), hfov=st.floats(10, 90), frac=st.floats(0, 0.9))
def test_pod_intervals_contiguous(n, hfov, frac):
    overlap = hfov * frac
    if n * hfov - (n - 1) * overlap > 360:
        with pytest.raises(ConfigurationError):
            make_pod(n, hfov * DEG, overlap * DEG)
        return
    pod = make_pod(n, hfov * DEG, overlap * DEG, CameraIntrinsics(640, 480, hfov * DEG, 30 * DEG))
    iv = [pod.angular_interval(i) for i in range(n)]
    assert iv[-1][1] - iv[0][0] == pytest.approx(pod.total_hfov_rad, abs=1e-9)
    for (a0, a1), (b0, b1) in zip(iv, iv[1:]):
        assert a1 - b0 == pytest.approx(overlap * DEG, abs=1e-9)


def test_pod_rejects_bad_inputs():
    with pytest.raises(ConfigurationError):
        make_pod(0, 48 * DEG, 12 * DEG)
    with pytest.raises(ConfigurationError):
        make_pod(3, 48 * DEG, 48 * DEG)
    with pytest.raises(ConfigurationError):
        make_pod(9, 48 * DEG, 0.0)  # 432 deg


def test_camera_to_global_identity():
    p = np.array([1.0, -2.0, 3.0])
    assert camera_to_global(p, Extrinsics(), Pose(np.zeros(3))) == pytest.approx(p)


def test_camera_to_global_translation_only():
    p = np.array([1.0, -2.0, 3.0])
    out = camera_to_global(p, Extrinsics(), Pose([100, 200, 0]))
    assert out == pytest.approx(p + [100, 200, 0])


def test_camera_to_global_yaw_90_forward_camera():
    pod = ugv_pod()
    extr = pod.extrinsics(2)  # centre module looks along vehicle +x
    pose = Pose([10, 20, 0], yaw=90 * DEG)
    # oracle: explicit matrices written out by hand
    Rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    cam_to_veh = np.array([[0, 0, 1], [-1, 0, 0], [0, -1, 0.0]])
    expect = Rz @ (cam_to_veh @ np.array([0, 0, 1.0]) + [0, 0, 2.0]) + [10, 20, 0]
    assert camera_to_global([0, 0, 1], extr, pose) == pytest.approx(expect, abs=1e-12)
    assert expect == pytest.approx([10, 21, 2])


@given(r=st.floats(-3, 3), p=st.floats(-1.5, 1.5), y=st.floats(-3, 3))
def test_rpy_is_rotation(r, p, y):
    assert is_rotation(rpy_to_matrix(r, p, y))


@given(yaw=st.floats(-math.pi, math.pi), roll=st.floats(-0.5, 0.5), pitch=st.floats(-0.5, 0.5),
       t=st.tuples(*[st.floats(-1e3, 1e3)] * 3))
def test_camera_to_global_isometry(yaw, roll, pitch, t):
    pod = ugv_pod()
    pose = Pose(np.array(t), roll, pitch, yaw)
    rng = np.random.default_rng(0)
    P = rng.normal(0, 50, (6, 3))
    G = camera_to_global(P, pod.extrinsics(1), pose)
    d0 = np.linalg.norm(P[:, None] - P[None], axis=-1)
    d1 = np.linalg.norm(G[:, None] - G[None], axis=-1)
    assert np.allclose(d1, d0, rtol=1e-9, atol=1e-9)
    assert global_to_camera(G, pod.extrinsics(1), pose) == pytest.approx(P, abs=1e-8)


def _oracle_modules(target, pose, half_w=24 * DEG, half_v=18 * DEG, height=2.0, rng_max=150):
    """Angular arithmetic on the level pod: azimuth in the vehicle frame
    against each module's [yaw - 24, yaw + 24] wedge."""
    d = np.asarray(target, float) - pose.position_utm - [0, 0, height]
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    fx, ly = c * d[0] + s * d[1], -s * d[0] + c * d[1]
    out = []
    for i, off in enumerate(np.arange(-2, 3) * 36 * DEG):
        x = fx * math.cos(off) + ly * math.sin(off)
        y = -fx * math.sin(off) + ly * math.cos(off)
        if x <= 0 or np.linalg.norm(d) > rng_max:
            continue
        if abs(math.atan2(y, x)) <= half_w and abs(math.atan2(d[2], x)) <= half_v:
            out.append(i)
    return out


def test_visible_dead_ahead():
    pose = Pose([0, 0, 0])
    assert visible_modules([50, 0, 2], pose, ugv_pod(), 150) == [2]


def test_visible_in_overlap_wedge():
    pose = Pose([0, 0, 0])
    # 20 deg left: inside the centre module (<= 24) and the left neighbour (>= 12)
    t = [50 * math.cos(20 * DEG), 50 * math.sin(20 * DEG), 2]
    assert visible_modules(t, pose, ugv_pod(), 150) == [2, 3]


def test_visible_behind_and_far():
    pose = Pose([0, 0, 0])
    assert visible_modules([-50, 0, 2], pose, ugv_pod(), 150) == []
    assert visible_modules([200, 0, 2], pose, ugv_pod(), 150) == []


@given(az=st.floats(-math.pi, math.pi), r=st.floats(5, 200), yaw=st.floats(-math.pi, math.pi))
def test_visible_matches_angular_oracle(az, r, yaw):
    pose = Pose([3, -4, 0], yaw=yaw)
    t = np.array([3 + r * math.cos(yaw + az), -4 + r * math.sin(yaw + az), 2.0])
    # stay clear of wedge edges, where the two computations may round differently
    edges = np.array([k * 36 + s * 24 for k in range(-2, 3) for s in (-1, 1)]) * DEG
    if np.min(np.abs(az - edges)) < 1e-9:
        return
    assert visible_modules(t, pose, ugv_pod(), 150) == _oracle_modules(t, pose)


def test_visible_requires_positive_range():
    with pytest.raises(ValueError):
        visible_modules([1, 0, 0], Pose([0, 0, 0]), ugv_pod(), 0)
