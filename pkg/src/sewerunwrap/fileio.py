"""File formats: trajectories, match tables, PNG images, label masks, strips.

Trajectory files hold one frame per line::

    idx tx ty tz r00 r01 r02 r10 r11 r12 r20 r21 r22

with floats written by ``repr`` so that a write/read cycle is bit-exact.
Match tables have the columns ``frame_a frame_b ua va ub vb score``.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .features import MatchSet
from .geometry import CameraPose
from .metrics import N_CLASSES, PALETTE, validate_mask
from .pose import Trajectory
from .unwrap import UnwrapGrid, UnwrapStrip


class FileFormatError(ValueError):
    """Unreadable or malformed input file."""


# ---------------------------------------------------------------------------
# trajectories


def format_trajectory(traj: Trajectory) -> str:
    lines = []
    for k, p in enumerate(traj.poses):
        vals = [repr(float(v)) for v in p.t] + [repr(float(v)) for v in p.R.ravel()]
        lines.append(" ".join([str(k)] + vals))
    return "\n".join(lines) + ("\n" if lines else "")


def write_trajectory(path, traj: Trajectory) -> None:
    Path(path).write_text(format_trajectory(traj))


def read_trajectory(path, spacing_hint_m: float = 0.05) -> Trajectory:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read trajectory {path}: {exc}") from None
    poses = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 13:
            raise FileFormatError(f"{path}:{n}: expected 13 fields, got {len(parts)}")
        try:
            idx = int(parts[0])
            vals = np.array([float(v) for v in parts[1:]])
        except ValueError:
            raise FileFormatError(f"{path}:{n}: non-numeric field") from None
        if idx != len(poses):
            raise FileFormatError(f"{path}:{n}: frame index {idx}, expected {len(poses)}")
        try:
            poses.append(CameraPose(vals[:3], vals[3:].reshape(3, 3)))
        except ValueError as exc:
            raise FileFormatError(f"{path}:{n}: {exc}") from None
    return Trajectory(poses, spacing_hint_m)


# ---------------------------------------------------------------------------
# match tables


def write_matches(path, match_sets) -> None:
    lines = ["# frame_a frame_b ua va ub vb score"]
    for ms in match_sets:
        A, B, S = ms.points_a(), ms.points_b(), ms.scores()
        for a, b, s in zip(A.tolist(), B.tolist(), S.tolist()):
            vals = " ".join(repr(v) for v in (a[0], a[1], b[0], b[1], s))
            lines.append(f"{ms.frame_a} {ms.frame_b} {vals}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_matches(path) -> list[MatchSet]:
    """Match sets in file order, one per consecutive frame pair."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read matches {path}: {exc}") from None
    rows = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise FileFormatError(f"{path}:{n}: expected 7 fields, got {len(parts)}")
        try:
            fa, fb = int(parts[0]), int(parts[1])
            vals = [float(v) for v in parts[2:]]
        except ValueError:
            raise FileFormatError(f"{path}:{n}: non-numeric field") from None
        rows.setdefault((fa, fb), []).append(vals)
    out = []
    for (fa, fb), vals in sorted(rows.items()):
        v = np.array(vals)
        out.append(MatchSet.from_points(fa, fb, v[:, 0:2], v[:, 2:4], v[:, 4]))
    return out


# ---------------------------------------------------------------------------
# images


def to_uint8(image) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=float)), 0, 255).astype(np.uint8)


def write_png(path, image, rgb: bool = True) -> None:
    """Write a float or uint8 image; gray input is replicated to RGB when ``rgb``."""
    a = to_uint8(image)
    if rgb and a.ndim == 2:
        a = np.repeat(a[..., None], 3, axis=2)
    Image.fromarray(a).save(path, format="PNG")


def read_image(path, gray: bool = False) -> np.ndarray:
    """Image as a float array, ``(H, W, 3)`` or ``(H, W)`` with ``gray``."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            im = im.convert("L" if gray else "RGB")
            return np.asarray(im, dtype=float)
    except (OSError, UnidentifiedImageError, SyntaxError) as exc:
        raise FileFormatError(f"cannot read image {path}: {exc}") from None


def jpeg_roundtrip(image, quality: int = 40) -> np.ndarray:
    """Encode and decode as JPEG to imitate a heavily compressed camera stream."""
    a = to_uint8(image)
    buf = io.BytesIO()
    Image.fromarray(a).save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with Image.open(buf) as im:
        return np.asarray(im.convert("L" if a.ndim == 2 else "RGB"), dtype=float)


def write_mask(path, mask) -> None:
    """Palette PNG whose indices are the class codes."""
    m = validate_mask(mask).astype(np.uint8)
    im = Image.frombytes("P", (m.shape[1], m.shape[0]), np.ascontiguousarray(m).tobytes())
    im.putpalette([c for rgb in PALETTE for c in rgb])
    im.save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("P", "L"):
                raise FileFormatError(f"{path}: mask must be palette or 8-bit gray, got mode {im.mode}")
            m = np.asarray(im, dtype=np.uint8)
    except (OSError, UnidentifiedImageError, SyntaxError) as exc:
        raise FileFormatError(f"cannot read mask {path}: {exc}") from None
    if m.size and m.max() >= N_CLASSES:
        raise FileFormatError(f"{path}: class code {int(m.max())} outside 0..{N_CLASSES - 1}")
    return m


# ---------------------------------------------------------------------------
# unwraps
#
# Arrays keep the axis along rows; files put the circumference vertically so
# the written image is W pixels high and runs along the pipe from left to right.


def write_unwrap(path, pixels) -> None:
    a = np.asarray(pixels)
    write_png(path, np.swapaxes(a, 0, 1))


def read_unwrap(path, gray: bool = False) -> np.ndarray:
    return np.swapaxes(read_image(path, gray), 0, 1)


def write_strip(path, strip: UnwrapStrip) -> None:
    """Strip PNG (invalid pixels black) plus ``<path>.txt`` with its grid."""
    path = Path(path)
    write_unwrap(path, strip.pixels)
    g = strip.grid
    z0, z1 = g.z_range
    header = (
        f"frame_index {strip.frame_index}\n"
        f"z_range {float(z0)!r} {float(z1)!r}\n"
        f"circumference_samples {g.circumference_samples}\n"
        f"theta0 {float(g.theta0)!r}\n"
        f"radius_m {float(g.radius_m)!r}\n"
        f"row0 {g.row0}\n"
        f"n_rows {g.n_rows}\n"
    )
    path.with_suffix(path.suffix + ".txt").write_text(header)


def read_strip_header(path) -> tuple[int, UnwrapGrid]:
    path = Path(path)
    side = path.with_suffix(path.suffix + ".txt")
    kv = {}
    try:
        for line in side.read_text().splitlines():
            if line.strip():
                key, *vals = line.split()
                kv[key] = vals
        grid = UnwrapGrid(int(kv["circumference_samples"][0]), float(kv["radius_m"][0]),
                          int(kv["row0"][0]), int(kv["n_rows"][0]), float(kv["theta0"][0]))
        return int(kv["frame_index"][0]), grid
    except OSError as exc:
        raise FileFormatError(f"cannot read strip header {side}: {exc}") from None
    except (KeyError, IndexError, ValueError) as exc:
        raise FileFormatError(f"{side}: malformed strip header ({exc})") from None


def seam_overlay(image, seams, row0: int) -> np.ndarray:
    """RGB copy of a stitched unwrap with every seam drawn in red."""
    img = np.asarray(image, dtype=float)
    rgb = np.repeat(img[..., None], 3, axis=2) if img.ndim == 2 else img.copy()
    cols = np.arange(rgb.shape[1])
    for lo, seam in seams:
        rows = lo - row0 + np.asarray(seam.rows)
        rgb[rows, cols] = (255.0, 0.0, 0.0)
    return rgb
