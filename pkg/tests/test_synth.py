import math

import numpy as np
import pytest

from sewerunwrap import geometry as G
from sewerunwrap import synth
from sewerunwrap import unwrap as U
from sewerunwrap.geometry import CameraPose, PipeModel
from sewerunwrap.metrics import LabelClass

import oracles


def test_trajectory_without_jitter_is_on_axis():
    tr = synth.perturbed_trajectory(6, 0.05)
    for k, p in enumerate(tr.poses):
        np.testing.assert_array_equal(p.t, [0.0, 0.0, k * 0.05])
        np.testing.assert_array_equal(p.R, np.eye(3))


def test_trajectory_determinism():
    a = synth.perturbed_trajectory(10, 0.05, (0.01, 0.03), seed=5)
    b = synth.perturbed_trajectory(10, 0.05, (0.01, 0.03), seed=5)
    c = synth.perturbed_trajectory(10, 0.05, (0.01, 0.03), seed=6)
    assert a.positions.tobytes() == b.positions.tobytes()
    assert all(x.R.tobytes() == y.R.tobytes() for x, y in zip(a.poses, b.poses))
    assert a.positions.tobytes() != c.positions.tobytes()


def test_trajectory_jitter_stays_inside():
    r = 0.125
    tr = synth.perturbed_trajectory(200, 0.05, (0.01 * r, 0.02), seed=1)
    assert np.hypot(tr.positions[:, 0], tr.positions[:, 1]).max() < r
    # z stays nominal, frame 0 carries no rotation about the axis
    np.testing.assert_allclose(tr.positions[:, 2], np.arange(200) * 0.05, atol=1e-15)
    assert abs(math.atan2(-tr[0].R[0, 1], tr[0].R[1, 1])) < 1e-15


def test_trajectory_jitter_too_large():
    with pytest.raises(ValueError, match="inside the pipe"):
        synth.perturbed_trajectory(3, 0.05, (10.0, 0.0))


def test_render_rejects_pose_outside(intr):
    with pytest.raises(G.GeometryError):
        synth.render_frame(synth.default_scene(), CameraPose([0.2, 0.0, 0.0]), intr)


def test_on_axis_checker_is_point_symmetric(intr):
    scene = synth.SyntheticScene(PipeModel(0.125), synth.Texture("checker"))
    frame = synth.render_frame(scene, CameraPose([0.0, 0.0, 0.2]), intr)
    np.testing.assert_allclose(frame[::-1, ::-1], frame, atol=1e-9)


def test_zero_falloff_equals_plain_render(intr):
    pose = CameraPose([0.01, 0.0, 0.1], G.rot_x(0.02))
    plain = synth.SyntheticScene(PipeModel(0.125))
    lit = synth.SyntheticScene(PipeModel(0.125), lighting=synth.Lighting(0.0))
    np.testing.assert_array_equal(synth.render_frame(plain, pose, intr), synth.render_frame(lit, pose, intr))


def test_falloff_darkens(intr):
    pose = CameraPose([0.0, 0.0, 0.1])
    plain = synth.render_frame(synth.SyntheticScene(PipeModel(0.125)), pose, intr)
    lit = synth.render_frame(synth.SyntheticScene(PipeModel(0.125), lighting=synth.Lighting(2.0)), pose, intr)
    assert np.all(lit <= plain + 1e-12)
    assert lit.sum() < plain.sum()


def test_render_determinism(intr):
    scene = synth.default_scene(seed=7)
    pose = synth.perturbed_trajectory(2, 0.05, (0.01, 0.02), seed=7)[1]
    assert synth.render_frame(scene, pose, intr).tobytes() == synth.render_frame(scene, pose, intr).tobytes()


def test_intersections_against_quadratic_oracle():
    # the renderer's vectorised intersection, checked against polynomial roots
    rng = np.random.default_rng(77)
    r = 0.125
    origin = np.array([0.03, -0.02, 0.4])
    dirs = rng.normal(size=(1000, 3))
    lam, pts, ok = G.intersect_cylinder_arrays(origin, dirs, r)
    assert ok.all()
    for d, l in zip(dirs, lam):
        assert abs(l - oracles.cylinder_lambda(origin, d, r)) < 1e-10 * max(1.0, l)


def test_render_then_unwrap_matches_ideal(intr):
    scene = synth.default_scene(seed=3)
    pose = synth.perturbed_trajectory(4, 0.05, (0.0125, 0.035), seed=3)[3]
    grid = U.frame_grid(pose, scene.pipe, intr, 360)
    strip = U.unwrap_frame(synth.render_frame(scene, pose, intr), pose, intr, scene.pipe, grid)
    ideal = synth.ideal_unwrap(scene, grid)
    assert np.abs(strip.pixels - ideal.pixels)[strip.valid_mask].mean() < 2.0


def test_render_sequence_ground_truth(intr):
    scene = synth.decal_scene(4, seed=2)
    tr = synth.perturbed_trajectory(2, 0.05)
    frames, gt = synth.render_sequence(scene, tr, intr, W=90)
    assert len(frames) == len(gt.trajectory) == 2
    assert gt.ideal_unwrap.pixels.shape == gt.label_mask.shape
    assert gt.ideal_unwrap.pixels.shape[1] == 90
    assert set(np.unique(gt.label_mask)) <= set(range(9))


def test_decals_must_lie_inside_pipe():
    d = synth.Decal(0.0, 1.5, (0.01, 0.02), int(LabelClass.CRACK))
    with pytest.raises(ValueError, match="beyond the pipe"):
        synth.SyntheticScene(PipeModel(0.125, 1.0), decals=(d,), z_start_m=0.0)


def test_decal_scene_layout():
    scene = synth.decal_scene(6, seed=4)
    assert len(scene.decals) == 6
    labels = [d.label for d in scene.decals]
    assert LabelClass.BACKGROUND not in labels
    zs = sorted(d.z for d in scene.decals)
    ext = max(d.extent[1] for d in scene.decals)
    assert min(np.diff(zs)) > ext


def test_synthetic_matches_are_exact(intr):
    pipe = PipeModel(0.125)
    tr = synth.perturbed_trajectory(3, 0.05, (0.01, 0.02), seed=8)
    ms = synth.synthetic_matches(tr, pipe, intr, 50, seed=9)
    assert [(m.frame_a, m.frame_b) for m in ms] == [(0, 1), (1, 2)]
    for m in ms:
        pa, pb = tr[m.frame_a], tr[m.frame_b]
        for xa, xb in zip(m.points_a(), m.points_b()):
            _, wa = G.intersect_cylinder(G.Ray(pa.t, pa.R @ G.ray_direction(xa, intr)), pipe)
            _, wb = G.intersect_cylinder(G.Ray(pb.t, pb.R @ G.ray_direction(xb, intr)), pipe)
            assert np.linalg.norm(wa - wb) < 1e-9


def test_synthetic_match_outlier_fraction(intr):
    tr = synth.perturbed_trajectory(2, 0.05)
    (ms,), (inl,) = synth.synthetic_matches(tr, PipeModel(0.125), intr, 100, outlier_frac=0.3,
                                            seed=1, return_truth=True)
    assert len(ms) == 100 and (~inl).sum() == 30
