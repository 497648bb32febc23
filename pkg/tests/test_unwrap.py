import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sewerunwrap import geometry as G
from sewerunwrap import synth
from sewerunwrap import unwrap as U
from sewerunwrap.geometry import CameraPose, PipeModel
from sewerunwrap.unwrap import UnwrapGrid


def test_sample_points_quarter_turns():
    pts = U.sample_points(UnwrapGrid(4, 1.0, 0, 1, theta0=0.0), PipeModel(1.0))
    np.testing.assert_allclose(pts, [[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], atol=1e-15)


@given(st.integers(1, 500), st.floats(0.05, 0.5), st.integers(-50, 50), st.integers(1, 5))
def test_sample_points_on_wall(W, r, row0, n):
    g = UnwrapGrid(W, r, row0, n)
    pts = U.sample_points(g, PipeModel(r))
    assert pts.shape == (W * n, 3)
    assert np.abs(pts[:, 0] ** 2 + pts[:, 1] ** 2 - r * r).max() < 1e-12
    # row-major: the first W points share the first z
    np.testing.assert_array_equal(pts[:W, 2], g.z_values[0])


def test_axial_resolution_value():
    assert UnwrapGrid(1200, 0.1).axial_resolution_m == pytest.approx(5.235987755982988e-4, rel=1e-15)


@given(st.integers(1, 2000), st.sampled_from([2, 4, 8]), st.floats(0.01, 1.0))
def test_square_pixel_law(W, k, r):
    assert UnwrapGrid(k * W, r).axial_resolution_m == UnwrapGrid(W, r).axial_resolution_m / k


def test_grid_validation():
    with pytest.raises(ValueError):
        UnwrapGrid(0, 0.1)
    with pytest.raises(ValueError):
        UnwrapGrid(10, 0.1, 0, 0)


def test_covering_snaps_to_lattice():
    g = UnwrapGrid.covering(360, 0.125, 0.0101, 0.0905)
    z0, z1 = g.z_range
    assert z0 <= 0.0101 and z1 >= 0.0905
    assert z0 > 0.0101 - g.axial_resolution_m and z1 < 0.0905 + g.axial_resolution_m
    assert g.z_values[0] == g.row0 * g.axial_resolution_m


def _unwrap_against_ideal(scene, pose, true_pose, intr):
    frame = synth.render_frame(scene, true_pose, intr)
    grid = U.frame_grid(pose, scene.pipe, intr, 360)
    strip = U.unwrap_frame(frame, pose, intr, scene.pipe, grid)
    ideal = synth.ideal_unwrap(scene, grid)
    return strip, np.abs(strip.pixels - ideal.pixels)[strip.valid_mask].mean()


def test_constant_cylinder(intr):
    scene = synth.SyntheticScene(PipeModel(0.125), synth.Texture(low=117.0, high=117.0))
    pose = CameraPose([0.01, -0.02, 0.0], G.rot_x(0.03))
    strip, _ = _unwrap_against_ideal(scene, pose, pose, intr)
    assert strip.valid_mask.all()
    assert np.abs(strip.pixels[strip.valid_mask] - 117.0).max() < 1e-6


def test_checker_unwrap_matches_ideal(intr):
    scene = synth.SyntheticScene(PipeModel(0.125), synth.Texture("checker"))
    pose = synth.perturbed_trajectory(3, 0.05, (0.0125, 0.035), seed=9)[2]
    _, mae = _unwrap_against_ideal(scene, pose, pose, intr)
    assert mae < 2.0


def test_off_axis_needs_compensation(intr):
    scene = synth.SyntheticScene(PipeModel(0.125), synth.Texture("checker"))
    true_pose = CameraPose([0.0125, 0.0, 0.0])
    _, mae_true = _unwrap_against_ideal(scene, true_pose, true_pose, intr)
    _, mae_axis = _unwrap_against_ideal(scene, CameraPose(np.zeros(3)), true_pose, intr)
    assert mae_true < 2.0
    assert mae_axis > 5 * mae_true


def test_valid_mask_definition(intr):
    pipe = PipeModel(0.125)
    pose = CameraPose([0.02, 0.01, 0.0], G.rot_y(0.2) @ G.rot_x(-0.1))
    grid = UnwrapGrid.covering(90, 0.125, -0.08, 0.3)
    strip = U.unwrap_frame(np.full((800, 800), 50.0), pose, intr, pipe, grid)
    pts = U.sample_points(grid, pipe)
    expected = []
    for p in pts:
        x, y, z = pose.R.T @ (p - pose.t)
        alpha = math.acos(z / math.sqrt(x * x + y * y + z * z))
        d = alpha * intr.circle_diameter_px / math.radians(intr.fov_deg)
        expected.append(alpha <= math.radians(intr.fov_deg) / 2 and d <= intr.circle_diameter_px / 2)
    expected = np.array(expected).reshape(strip.valid_mask.shape)
    assert 0 < expected.sum() < expected.size
    np.testing.assert_array_equal(strip.valid_mask, expected)
    assert np.all(strip.pixels[~strip.valid_mask] == 0)


def _rings(n_z=400):
    z = np.arange(n_z)
    prof = 128 + 80 * np.sin(2 * np.pi * z / 23.0)
    return synth.Texture("image", image=np.tile(prof[:, None], (1, 16)), image_z_m=1.0)


@pytest.mark.parametrize("quarter", [1, 2, 3])
def test_rotation_about_axis_invariance(intr, quarter):
    # an axis rotation by a multiple of 90 degrees maps the pixel lattice onto itself
    scene = synth.SyntheticScene(PipeModel(0.125), _rings())
    base = CameraPose([0, 0, 0.1])
    turned = CameraPose([0, 0, 0.1], G.rot_z(quarter * math.pi / 2))
    grid = U.frame_grid(base, scene.pipe, intr, 360)
    s0 = U.unwrap_frame(synth.render_frame(scene, base, intr), base, intr, scene.pipe, grid)
    s1 = U.unwrap_frame(synth.render_frame(scene, turned, intr), turned, intr, scene.pipe, grid)
    assert np.abs(s0.pixels - s1.pixels).max() < 1e-6


def test_rotation_about_axis_general_angle(intr):
    # off-lattice angles differ only by bilinear interpolation error
    scene = synth.SyntheticScene(PipeModel(0.125), _rings())
    base = CameraPose([0, 0, 0.1])
    turned = CameraPose([0, 0, 0.1], G.rot_z(0.37))
    grid = U.frame_grid(base, scene.pipe, intr, 360)
    s0 = U.unwrap_frame(synth.render_frame(scene, base, intr), base, intr, scene.pipe, grid)
    s1 = U.unwrap_frame(synth.render_frame(scene, turned, intr), turned, intr, scene.pipe, grid)
    assert np.abs(s0.pixels - s1.pixels).mean() < 0.5


def test_frame_grid_annulus_rule(intr):
    pipe = PipeModel(0.125)
    r = U.axial_sampling_ratio([0.01, 0.1, 0.5], pipe, intr, 360)
    assert r[0] > r[1] > r[2]
    with pytest.raises(ValueError, match="image px per unwrap px"):
        U.frame_grid(CameraPose(np.zeros(3)), pipe, intr, 360, spacing_m=0.5)


def test_color_unwrap(intr):
    pipe = PipeModel(0.125)
    img = np.stack([np.full((800, 800), c) for c in (10.0, 20.0, 30.0)], axis=-1)
    pose = CameraPose(np.zeros(3))
    s = U.unwrap_frame(img, pose, intr, pipe, U.frame_grid(pose, pipe, intr, 60))
    assert s.pixels.shape[-1] == 3
    np.testing.assert_allclose(s.pixels[s.valid_mask], [[10, 20, 30]] * int(s.valid_mask.sum()))
