import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sewerunwrap import geometry as G
from sewerunwrap.geometry import CameraPose, FisheyeIntrinsics, GeometryError, PipeModel, Ray

import oracles

angles = st.floats(-math.pi, math.pi, allow_nan=False)


def test_angle_from_radius_examples():
    intr185 = FisheyeIntrinsics(185.0, 780.0, (399.5, 399.5), (800, 800))
    assert G.angle_from_radius(0.0, intr185) == 0.0
    assert G.angle_from_radius(390.0, intr185) == pytest.approx(math.radians(92.5), abs=1e-15)
    intr180 = FisheyeIntrinsics(180.0, 1000.0, (500, 500), (1001, 1001))
    assert G.angle_from_radius(250.0, intr180) == pytest.approx(math.pi / 4, abs=1e-15)


def test_angle_from_radius_rejects_outside_circle(intr):
    with pytest.raises(GeometryError):
        G.angle_from_radius(intr.max_radius_px + 1e-6, intr)
    with pytest.raises(GeometryError):
        G.angle_from_radius(-1.0, intr)


@given(st.floats(0.0, 1.0))
def test_radius_angle_inverse(frac):
    intr = FisheyeIntrinsics(185.0, 780.0, (399.5, 399.5), (800, 800))
    alpha = frac * intr.max_angle_rad
    assert abs(G.angle_from_radius(G.radius_from_angle(alpha, intr), intr) - alpha) < 1e-12


@given(st.floats(0.0, 389.0), st.floats(0.0, 389.0))
def test_angle_monotone(d1, d2):
    intr = FisheyeIntrinsics(185.0, 780.0, (399.5, 399.5), (800, 800))
    lo, hi = sorted((d1, d2))
    assert G.angle_from_radius(lo, intr) <= G.angle_from_radius(hi, intr)


def test_ray_direction_examples():
    # d = 100 at 45 degrees: D / fov chosen so that 100 px maps to pi/4
    intr = FisheyeIntrinsics(180.0, 400.0, (200, 200), (401, 401))
    np.testing.assert_allclose(G.ray_direction((300, 200), intr), [100, 0, 100], atol=1e-12)
    # d = 80 at 90 degrees
    intr = FisheyeIntrinsics(180.0, 160.0, (100, 100), (201, 201))
    np.testing.assert_allclose(G.ray_direction((100, 180), intr), [0, 80, 0], atol=1e-12)


def test_ray_direction_against_scalar_script():
    intr = FisheyeIntrinsics(180.0, 1000.0, (500.0, 500.0), (1001, 1001))
    got = G.ray_direction((503.0, 504.0), intr)
    # alpha = 5 px * 180 deg / 1000 px = 0.9 deg
    expected_z = 5.0 / math.tan(math.radians(0.9))
    np.testing.assert_allclose(got, [3.0, 4.0, expected_z], rtol=1e-14)
    np.testing.assert_allclose(got, oracles.line_of_sight(3.0, 4.0, 180.0, 1000.0), rtol=1e-14)


def test_ray_direction_center_is_degenerate(intr):
    with pytest.raises(GeometryError):
        G.ray_direction(intr.center_px, intr)


def test_project_on_axis_hits_center(intr):
    pose = CameraPose([0.01, -0.02, 0.3], G.rot_x(0.1) @ G.rot_z(0.3))
    p = pose.t + pose.R @ [0, 0, 2.0]
    np.testing.assert_allclose(G.project(p, pose, intr), intr.center_px, atol=1e-9)


def test_project_outside_fov(intr):
    with pytest.raises(GeometryError):
        G.project([0.0, 0.0, -1.0], CameraPose(np.zeros(3)), intr)


def test_project_matches_spherical_oracle(intr, rng):
    pose = CameraPose([0.02, 0.01, 0.1], G.rot_x(0.05) @ G.rot_y(-0.03) @ G.rot_z(1.0))
    dirs = rng.normal(size=(500, 3))
    dirs[:, 2] = np.abs(dirs[:, 2])  # front hemisphere
    pts = pose.t + (dirs * rng.uniform(0.1, 2.0, (500, 1))) @ pose.R.T
    got = G.project(pts, pose, intr)
    want = oracles.project_spherical(pose.to_camera(pts), intr.fov_deg, intr.circle_diameter_px,
                                     intr.center_px)
    assert np.abs(got - want).max() < 1e-9


@given(st.floats(0.0, 2 * math.pi), st.floats(1e-3, 0.999))
def test_project_ray_direction_round_trip(phi, frac):
    intr = FisheyeIntrinsics(185.0, 780.0, (399.5, 399.5), (800, 800))
    pose = CameraPose([0.01, 0.02, 0.5], G.rot_y(0.2) @ G.rot_z(0.7))
    d = frac * intr.max_radius_px
    px = np.array(intr.center_px) + d * np.array([math.cos(phi), math.sin(phi)])
    ray = G.ray_direction(px, intr)
    back = G.project(pose.t + pose.R @ ray, pose, intr)
    assert np.abs(back - px).max() < 1e-6


def test_intersect_cylinder_examples():
    pipe = PipeModel(0.2)
    lam, p = G.intersect_cylinder(Ray([0, 0, 0], [1, 0, 0]), pipe)
    assert lam == pytest.approx(0.2, abs=1e-15)
    np.testing.assert_allclose(p, [0.2, 0, 0], atol=1e-15)
    lam, _ = G.intersect_cylinder(Ray([0.1, 0, 0], [1, 0, 0]), pipe)
    assert lam == pytest.approx(0.1, abs=1e-15)


def test_intersect_cylinder_against_np_roots():
    ray = Ray([0.05, -0.02, 1.0], [0.3, 0.4, 0.87])
    lam, p = G.intersect_cylinder(ray, PipeModel(0.25))
    ref = oracles.cylinder_lambda(ray.origin, ray.dir, 0.25)
    assert abs(lam - ref) < 1e-12
    assert abs(p[0] ** 2 + p[1] ** 2 - 0.25**2) < 1e-12


def test_intersect_cylinder_errors():
    pipe = PipeModel(0.2)
    with pytest.raises(GeometryError):
        G.intersect_cylinder(Ray([0, 0, 0], [0, 0, 1]), pipe)
    with pytest.raises(GeometryError):
        G.intersect_cylinder(Ray([0.3, 0, 0], [1, 0, 0]), pipe)
    with pytest.raises(GeometryError):
        Ray([0, 0, 0], [0, 0, 0])


@given(st.floats(0.0, 0.95), angles, st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_intersect_cylinder_on_wall(off, phi, dx, dy, dz):
    if math.hypot(dx, dy) < 1e-3:
        return
    r = 0.125
    o = [off * r * math.cos(phi), off * r * math.sin(phi), 0.3]
    lam, p = G.intersect_cylinder(Ray(o, [dx, dy, dz]), PipeModel(r))
    assert lam >= 0
    assert abs(p[0] ** 2 + p[1] ** 2 - r * r) < 1e-9


def test_intersect_matches_oracle_many(rng):
    r = 0.125
    for _ in range(1000):
        o = np.append(rng.uniform(-0.06, 0.06, 2), rng.uniform(-1, 1))
        d = rng.normal(size=3)
        lam, _ = G.intersect_cylinder(Ray(o, d), PipeModel(r))
        assert abs(lam - oracles.cylinder_lambda(o, d, r)) < 1e-10 * max(1.0, lam)


def test_intrinsics_invariants():
    with pytest.raises(GeometryError):
        FisheyeIntrinsics(0.0, 780, (399.5, 399.5), (800, 800))
    with pytest.raises(GeometryError):
        FisheyeIntrinsics(360.0, 780, (399.5, 399.5), (800, 800))
    with pytest.raises(GeometryError):
        FisheyeIntrinsics(185.0, 0.0, (399.5, 399.5), (800, 800))
    with pytest.raises(GeometryError):
        FisheyeIntrinsics(185.0, 780, (900, 399.5), (800, 800))
    with pytest.raises(GeometryError):
        PipeModel(0.0)
    with pytest.raises(GeometryError):
        PipeModel(0.1, -1.0)


def test_camera_pose_validation_and_immutability():
    with pytest.raises(GeometryError):
        CameraPose(np.zeros(3), np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(GeometryError):
        CameraPose(np.zeros(3), np.eye(3) * 1.001)
    p = CameraPose([1, 2, 3])
    with pytest.raises(ValueError):
        p.t[0] = 5.0


@given(angles, angles, angles)
def test_orthonormalize_and_rotation_angle(a, b, c):
    R = G.rot_x(a) @ G.rot_y(b) @ G.rot_z(c)
    assert G.is_rotation(R, 1e-12)
    noisy = R + 1e-6 * np.arange(9).reshape(3, 3)
    Q = G.orthonormalize(noisy)
    assert G.is_rotation(Q, 1e-12)
    assert G.rotation_angle(R, R) < 1e-7


def test_rotation_angle_value():
    assert G.rotation_angle(np.eye(3), G.rot_z(0.3)) == pytest.approx(0.3, abs=1e-15)
    assert G.rotation_angle(G.rot_x(1e-9), np.eye(3)) == pytest.approx(1e-9, rel=1e-6)


def test_pixel_rays_center_and_circle(intr):
    rays = G.pixel_rays(np.array([intr.center_px, (0.0, 0.0)]), intr)
    np.testing.assert_array_equal(rays[0], [0.0, 0.0, 1.0])
    assert not G.in_circle(np.array([0.0, 0.0]), intr)
