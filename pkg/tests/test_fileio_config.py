import numpy as np
import pytest
from PIL import Image

from sewerunwrap import fileio as IO
from sewerunwrap import synth
from sewerunwrap.config import ConfigError, PipelineConfig, load_config, parse_config
from sewerunwrap.metrics import PALETTE
from sewerunwrap.unwrap import UnwrapGrid, UnwrapStrip


# ---------------------------------------------------------------------------
# trajectories and matches


def test_trajectory_round_trip_is_bit_exact(tmp_path):
    tr = synth.perturbed_trajectory(7, 0.05, (0.01, 0.03), seed=2)
    IO.write_trajectory(tmp_path / "t.txt", tr)
    back = IO.read_trajectory(tmp_path / "t.txt")
    assert back.positions.tobytes() == tr.positions.tobytes()
    assert all(a.R.tobytes() == b.R.tobytes() for a, b in zip(back.poses, tr.poses))
    first = (tmp_path / "t.txt").read_text().splitlines()[0].split()
    assert len(first) == 13 and first[0] == "0"


@pytest.mark.parametrize("text, msg", [
    ("0 1 2 3\n", "13 fields"),
    ("0 0 0 0 1 0 0 0 1 0 0 0 x\n", "non-numeric"),
    ("1 0 0 0 1 0 0 0 1 0 0 0 1\n", "frame index"),
    ("0 0 0 0 2 0 0 0 1 0 0 0 1\n", "rotation"),
])
def test_trajectory_errors(tmp_path, text, msg):
    (tmp_path / "t.txt").write_text(text)
    with pytest.raises(IO.FileFormatError, match=msg):
        IO.read_trajectory(tmp_path / "t.txt")


def test_missing_trajectory(tmp_path):
    with pytest.raises(IO.FileFormatError):
        IO.read_trajectory(tmp_path / "nope.txt")


def test_matches_round_trip(tmp_path, intr):
    tr = synth.perturbed_trajectory(3, 0.05, (0.01, 0.02), seed=1)
    ms = synth.synthetic_matches(tr, synth.PipeModel(0.125), intr, 25, noise_px=0.3, seed=3)
    IO.write_matches(tmp_path / "m.txt", ms)
    back = IO.read_matches(tmp_path / "m.txt")
    assert [(m.frame_a, m.frame_b) for m in back] == [(0, 1), (1, 2)]
    for a, b in zip(ms, back):
        assert a.points_a().tobytes() == b.points_a().tobytes()
        assert a.points_b().tobytes() == b.points_b().tobytes()
    with pytest.raises(IO.FileFormatError, match="7 fields"):
        (tmp_path / "bad.txt").write_text("0 1 2 3\n")
        IO.read_matches(tmp_path / "bad.txt")


# ---------------------------------------------------------------------------
# images


def test_mask_round_trip_and_palette(tmp_path):
    m = np.arange(9 * 4).reshape(9, 4) % 9
    IO.write_mask(tmp_path / "m.png", m)
    with Image.open(tmp_path / "m.png") as im:
        assert im.mode == "P"
        pal = im.getpalette()[:27]
    assert pal == [c for rgb in PALETTE for c in rgb]
    np.testing.assert_array_equal(IO.read_mask(tmp_path / "m.png"), m)


def test_mask_rejects_bad_codes(tmp_path):
    Image.fromarray(np.full((3, 3), 12, np.uint8)).save(tmp_path / "bad.png")
    with pytest.raises(IO.FileFormatError, match="outside"):
        IO.read_mask(tmp_path / "bad.png")
    Image.fromarray(np.zeros((3, 3, 3), np.uint8)).save(tmp_path / "rgb.png")
    with pytest.raises(IO.FileFormatError, match="mode"):
        IO.read_mask(tmp_path / "rgb.png")


def test_unreadable_image(tmp_path):
    (tmp_path / "x.png").write_bytes(b"not a png")
    with pytest.raises(IO.FileFormatError):
        IO.read_image(tmp_path / "x.png")


def test_png_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (13, 21)).astype(float)
    IO.write_png(tmp_path / "g.png", img)
    np.testing.assert_array_equal(IO.read_image(tmp_path / "g.png", gray=True), img)
    assert IO.read_image(tmp_path / "g.png").shape == (13, 21, 3)


def test_unwrap_files_are_circumference_high(tmp_path, rng):
    px = rng.integers(0, 256, (50, 360)).astype(float)
    IO.write_unwrap(tmp_path / "u.png", px)
    with Image.open(tmp_path / "u.png") as im:
        assert im.size == (50, 360)  # width along the pipe, height = W
    np.testing.assert_array_equal(IO.read_unwrap(tmp_path / "u.png", gray=True), px)


def test_strip_header_round_trip(tmp_path):
    g = UnwrapGrid(120, 0.125, -7, 33, 1.25)
    strip = UnwrapStrip(np.zeros((33, 120)), g, 4, np.ones((33, 120), bool))
    IO.write_strip(tmp_path / "s.png", strip)
    k, back = IO.read_strip_header(tmp_path / "s.png")
    assert k == 4
    assert (back.circumference_samples, back.row0, back.n_rows) == (120, -7, 33)
    assert back.theta0 == 1.25 and back.radius_m == 0.125
    (tmp_path / "s.png.txt").write_text("frame_index 1\n")
    with pytest.raises(IO.FileFormatError):
        IO.read_strip_header(tmp_path / "s.png")


def test_jpeg_roundtrip_degrades_a_little(rng):
    img = synth.ideal_unwrap(synth.default_scene(), UnwrapGrid(200, 0.125, 0, 120)).pixels
    out = IO.jpeg_roundtrip(img, 40)
    assert out.shape == img.shape
    assert 0 < np.abs(out - img).mean() < 10


# ---------------------------------------------------------------------------
# configuration


def test_defaults_validate():
    cfg = load_config()
    assert cfg == PipelineConfig()
    assert cfg.intrinsics().fov_deg == 185.0
    assert cfg.stitch_config().band_px == 8


def test_parse_values_and_comments():
    cfg = parse_config("""
        # a comment
        fov_deg = 190   ; inline
        center_px = 400.5, 401
        image_size_px = 802 802
        correct_lighting = no
        texture = checker
        [pose]
        ransac_iters = 50
    """.replace("\n        ", "\n"))
    assert cfg.fov_deg == 190.0
    assert cfg.center_px == (400.5, 401.0)
    assert cfg.image_size_px == (802, 802)
    assert cfg.correct_lighting is False
    assert cfg.texture == "checker"
    assert cfg.ransac_iters == 50


@pytest.mark.parametrize("text, msg", [
    ("fov = 180\n", "unknown key"),
    ("sigma = abc\n", "bad value"),
    ("center_px = 1 2 3\n", "bad value"),
    ("correct_lighting = maybe\n", "bad value"),
    ("a = 1\nthis is not a config\n", ":2: cannot parse"),
])
def test_parse_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


@pytest.mark.parametrize("override", [
    {"sigma": 0.0}, {"band_px": 0}, {"ratio": 1.5}, {"jitter_t_m": 0.1}, {"texture": "marble"},
    {"fov_deg": 400.0}, {"match_outlier_frac": 1.0},
])
def test_validation_errors(override):
    with pytest.raises(ConfigError):
        load_config(**override)


def test_load_config_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("frames = 5\nseed = 3\n")
    cfg = load_config(p, seed=9)
    assert cfg.frames == 5 and cfg.seed == 9
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.ini")


def test_overlap_must_hold_the_blend_band():
    with pytest.raises(ConfigError, match="overlap_m"):
        load_config(circumference_samples=180)
    assert load_config(circumference_samples=180, overlap_m=0.06).band_px == 8
